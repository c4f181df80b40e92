#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asc/error.hpp"
#include "asc/machine.hpp"
#include "asc/statevec.hpp"

namespace asc {

struct Region {
  std::uint64_t start = 0;
  std::uint64_t len = 0;
};

struct Program {
  std::vector<Instruction> instructions;
  std::map<std::string, std::uint32_t> labels;
  std::uint64_t memsize = 0;
  std::uint32_t entry = 0;
  Region input;
  Region output;

  // Zeroed memory with `input` copied to the start of the input region.
  StateVector initial_state(std::span<const std::uint8_t> input_bytes) const;
  std::vector<std::uint8_t> output_bytes(const StateVector& z) const;
  std::uint32_t label(const std::string& name) const;
};

struct Diagnostic {
  std::size_t line;
  std::string message;
};

class AsmError : public Error {
 public:
  explicit AsmError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

// Replaces every ${NAME} with vars.at(NAME); unknown names are diagnostics.
std::string expand_placeholders(std::string_view text, const std::map<std::string, std::string>& vars);

// Either a complete program or an AsmError listing every problem found.
Program parse(std::string_view text);

struct LivenessInfo {
  std::vector<LiveSet> live_in;
  // Sweeps over the program until the fixpoint was reached.
  std::size_t sweeps = 0;

  LiveSet at(std::uint64_t ip) const { return live_in.at(ip); }
};

std::vector<std::uint32_t> successors(const Program& p, std::uint32_t ip);
LivenessInfo liveness(const Program& p);
// Targets of backward jumps, sorted by ip.
std::vector<std::uint32_t> candidates(const Program& p);

}  // namespace asc
