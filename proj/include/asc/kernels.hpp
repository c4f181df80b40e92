#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asc/asmlang.hpp"
#include "asc/learner.hpp"
#include "asc/statevec.hpp"

namespace asc {

using KernelParams = std::map<std::string, std::int64_t>;

struct KernelSpec {
  std::string name;
  std::string source;  // template text from kernels/<file>.asm
  std::string description;
  KernelParams defaults;
  std::string schema_note;
  // Recognizer settings that select the intended loop at the default size.
  std::uint64_t threshold = 64;
  std::uint64_t min_icount = 1;
  double tie_tolerance = kDefaultTieTolerance;
};

struct GeneratedKernel {
  std::string name;
  std::uint64_t seed = 0;
  KernelParams params;
  Program program;
  std::vector<std::uint8_t> input;

  StateVector initial_state() const { return program.initial_state(input); }
};

struct NativeResult {
  std::vector<std::uint8_t> output;
  std::uint64_t icount = 0;
};

const std::vector<KernelSpec>& kernel_specs();
const KernelSpec& kernel_spec(const std::string& name);
std::vector<std::string> kernel_names();

// Unknown parameter names are rejected.
GeneratedKernel generate(const std::string& name, std::uint64_t seed, const KernelParams& params = {});

NativeResult native_run(const Program& p, std::span<const std::uint8_t> input);

// Collatz seeds select disjoint 48-value blocks: seeds 0..9 take every third
// block, higher seeds the blocks in between.
std::uint64_t collatz_block(std::uint64_t seed);

// Starting value of the mulmod variant; consecutive seeds cycle through the
// three cosets of the subgroup generated by p1 mod p2.
std::uint64_t mulmod_start(std::uint64_t seed, std::uint64_t p1, std::uint64_t p2);

}  // namespace asc
