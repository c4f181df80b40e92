#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asc/engine.hpp"
#include "asc/kernels.hpp"
#include "asc/learner.hpp"
#include "asc/recognizer.hpp"

namespace asc {

struct ExperimentConfig {
  std::string kernel;
  KernelParams params;
  std::vector<std::uint64_t> train_seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::uint64_t> test_seeds = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19,
                                           20, 21, 22, 23, 24, 25, 26, 27, 28, 29};
  EngineConfig engine;
  bool oracle = false;
  // Recognizer overrides; unset fields take the kernel's recommended values.
  std::optional<std::uint32_t> rip;
  std::optional<std::uint64_t> period;
  std::optional<std::uint64_t> threshold;
  std::optional<std::uint64_t> min_icount;
  int max_depth = kDefaultMaxDepth;
  std::optional<double> tie_tolerance;
};

RecognizerOptions recognizer_options(const ExperimentConfig& cfg);

// Recognition on one seed of the kernel.
RipChoice recognize_kernel(const ExperimentConfig& cfg, std::uint64_t seed);

struct TrainResult {
  RipChoice choice;
  ModelSet model;
  Accuracy training_accuracy;
};

// Recognizes on the first training seed, then trains on all of them.
TrainResult train_kernel(const ExperimentConfig& cfg);

std::string schema_report_json(const std::string& kernel, const BitSchema& s);

// Runs one test input. Uses the oracle predictor when cfg.oracle is set or
// model is null. rip/period come from the model metadata or cfg.engine.
RunReport run_kernel(const ExperimentConfig& cfg, const ModelSet* model, std::uint64_t seed);

struct BenchRow {
  std::size_t workers;
  double speedup;  // summed native instructions over summed main instructions
  double hit_rate;
  double max_speedup;
  double hitrate_speedup_estimate;
  std::uint64_t reused_hits;
  bool validated;
};

std::vector<BenchRow> bench(const ExperimentConfig& cfg, const ModelSet* model, const std::vector<std::size_t>& workers);
std::string bench_csv(const std::vector<BenchRow>& rows);

struct LimitsRow {
  std::string variant;
  std::size_t runs;
  double per_bit;
  double whole_state;
};

// Trains dependmap variants on the first `runs` training seeds and scores
// one-step predictions on the test seeds.
std::vector<LimitsRow> limits(const std::vector<std::string>& variants, const std::vector<std::size_t>& runs,
                              const ExperimentConfig& base);
std::string limits_csv(const std::vector<LimitsRow>& rows);

struct ValidationCase {
  std::string kernel;
  std::uint64_t seed;
  std::size_t workers;
  double efficiency;
  bool oracle;
  bool iterated;
  bool ok;
  std::string failure;
};

// Output equivalence over seeds x {n} x {e} x {trained, oracle} x {iterated on/off}.
std::vector<ValidationCase> validate(const ExperimentConfig& cfg, const ModelSet* model,
                                     const std::vector<std::uint64_t>& seeds, const std::vector<std::size_t>& workers,
                                     const std::vector<double>& efficiencies);
std::string validation_csv(const std::vector<ValidationCase>& cases);

// Shared float formatting for reports: shortest round-trip representation.
std::string format_number(double v);

inline constexpr const char* kCsvVersion = "# asc-csv-v1";

}  // namespace asc
