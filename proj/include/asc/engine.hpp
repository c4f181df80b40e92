#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asc/asmlang.hpp"
#include "asc/compcache.hpp"
#include "asc/learner.hpp"
#include "asc/statevec.hpp"

namespace asc {

enum class EngineMode { VirtualTime, Eager };

std::string to_string(EngineMode m);
EngineMode engine_mode_from_string(const std::string& s);

struct EngineConfig {
  std::size_t workers = 0;
  double efficiency = 1.0;
  std::size_t lookahead = 0;  // 0 selects ceil(1/e) + 1
  std::size_t timestep_table_size = 65536;
  std::size_t stitch_budget = 256;
  bool iterated_lookup = false;
  std::uint32_t rip = 0;
  std::uint64_t period = 1;
  EngineMode mode = EngineMode::VirtualTime;

  // Virtual instructions charged to every speculation on top of its own work
  // (models snapshot transfer). 0 means dispatch is free.
  double dispatch_overhead = 0;
  // Mean instructions per effective breakpoint; 0 takes it from the native run.
  double expected_interval = 0;
  // Speculations stop after this many instructions; 0 derives it from the
  // expected interval.
  std::uint64_t speculation_cap = 0;
  std::size_t max_cache_entries = 0;
  std::uint64_t key_mask = ~std::uint64_t{0};
  bool record_trace = true;
  // A miss on a timestep that was already speculated releases every later
  // mark, so workers restart from the main process's state.
  bool squash_on_miss = true;

  std::size_t effective_lookahead() const;
  void validate() const;
};

class TimestepTable {
 public:
  enum class Mark : std::uint8_t { Unmarked, Speculating, Done };

  explicit TimestepTable(std::size_t size);

  // The n-th unmarked timestep after current_t, now marked Speculating.
  std::uint64_t next_assignment(std::uint64_t current_t, std::size_t n);
  void mark(std::uint64_t t, Mark m);
  Mark state(std::uint64_t t) const;
  // Timesteps the main process has reached become unmarked again.
  void recycle_through(std::uint64_t t);
  // Unmarks every timestep after t; returns how many were marked.
  std::size_t release_after(std::uint64_t t);
  std::size_t marked() const { return marked_.size(); }

 private:
  struct Slot {
    std::uint64_t t = 0;
    Mark mark = Mark::Unmarked;
  };
  std::vector<Slot> slots_;
  std::uint64_t mask_;
  std::set<std::uint64_t> marked_;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  // State expected k breakpoints after timestep t, given the main state z at t.
  virtual std::optional<StateVector> predict(const StateVector& z, std::uint64_t t, std::uint64_t k) = 0;
  // Bytes compared when scoring prediction accuracy against the true state.
  virtual BitMask scored_bytes(std::size_t universe) const = 0;
  // Bytes the predictor knows how to reason about; nullopt if unrestricted.
  virtual std::optional<BitMask> modeled_bytes(std::size_t) const { return std::nullopt; }
  virtual std::string name() const = 0;
};

class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const ModelSet& m) : model_(m) {}
  std::optional<StateVector> predict(const StateVector& z, std::uint64_t t, std::uint64_t k) override;
  BitMask scored_bytes(std::size_t universe) const override;
  std::optional<BitMask> modeled_bytes(std::size_t universe) const override;
  std::string name() const override { return "model"; }

 private:
  const ModelSet& model_;
  std::uint64_t chain_t_ = 0;
  std::uint64_t chain_digest_ = 0;
  std::vector<StateVector> chain_;
};

// True future breakpoint states from a shadow native execution.
class OraclePredictor : public Predictor {
 public:
  OraclePredictor(const Program& p, const StateVector& initial, std::uint32_t rip, std::uint64_t period);
  std::optional<StateVector> predict(const StateVector& z, std::uint64_t t, std::uint64_t k) override;
  BitMask scored_bytes(std::size_t universe) const override { return BitMask::full(universe); }
  std::string name() const override { return "oracle"; }

 private:
  std::vector<StateVector> trajectory_;  // trajectory_[t - 1] is timestep t
};

struct TraceEvent {
  std::uint64_t timestep;
  std::string event;
  double time;  // virtual time in main-process instructions
  std::string outcome;
  int worker;
};

struct RunReport {
  std::uint64_t native_icount = 0;      // T_total
  std::uint64_t main_icount = 0;        // T_main
  std::uint64_t credited_icount = 0;    // skipped via fast-forward
  double speedup = 1.0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  double hit_rate = 0.0;
  std::uint64_t stitches = 0;
  std::uint64_t speculations = 0;
  std::uint64_t failed_speculations = 0;  // halted, faulted or over budget
  std::uint64_t wasted_speculations = 0;  // never contributed to a fast-forward
  std::uint64_t reused_hits = 0;          // hits on an entry predicted for another timestep
  std::uint64_t verifications_failed = 0;
  std::uint64_t late_speculations = 0;    // still running when the main process arrived
  std::uint64_t squashes = 0;             // misses on a speculated timestep
  std::uint64_t unmodeled_reads = 0;      // speculations reading bytes outside the schema
  std::uint64_t predictions_scored = 0;
  double prediction_accuracy = 0.0;       // whole-state, over scored predictions
  std::uint64_t breakpoints = 0;          // native effective breakpoints
  std::uint64_t cache_entries = 0;
  double max_speedup = 1.0;
  double hitrate_speedup_estimate = 1.0;
  bool validated = false;
  std::string failure;
  std::vector<std::uint8_t> output;  // final output region of the ASC run
  std::vector<TraceEvent> trace;

  // Deterministic JSON (no trace) and CSV (trace only).
  std::string to_json() const;
  std::string trace_csv() const;
};

std::vector<StateVector> native_breakpoints(const Program& p, const StateVector& initial, std::uint32_t rip,
                                            std::uint64_t period, std::uint64_t* total_icount = nullptr,
                                            StateVector* final_state = nullptr);

// `cache` may be supplied to pre-seed entries; otherwise a fresh one is used.
RunReport run(const Program& p, const EngineConfig& cfg, Predictor& predictor, const StateVector& initial,
              Cache* cache = nullptr);

double max_speedup(double e, std::size_t n);
double hitrate_speedup_estimate(double h);

}  // namespace asc
