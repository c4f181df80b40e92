#include "asc/engine.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "asc/machine.hpp"

namespace asc {
namespace {

constexpr std::uint64_t kRunBudget = 2'000'000'000;

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

nlohmann::json json_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

std::string to_string(EngineMode m) { return m == EngineMode::VirtualTime ? "virtual_time" : "eager"; }

EngineMode engine_mode_from_string(const std::string& s) {
  if (s == "virtual_time") return EngineMode::VirtualTime;
  if (s == "eager") return EngineMode::Eager;
  throw Error("unknown engine mode '" + s + "'");
}

std::size_t EngineConfig::effective_lookahead() const {
  if (lookahead != 0) return lookahead;
  return static_cast<std::size_t>(std::ceil(1.0 / efficiency - 1e-12)) + 1;
}

void EngineConfig::validate() const {
  if (!(efficiency > 0.0 && efficiency <= 1.0)) throw Error("efficiency must lie in (0, 1]");
  if (period < 1) throw Error("period must be at least 1");
  if (timestep_table_size == 0 || (timestep_table_size & (timestep_table_size - 1)) != 0)
    throw Error("timestep table size must be a power of two");
  if (dispatch_overhead < 0) throw Error("dispatch overhead must be non-negative");
}

TimestepTable::TimestepTable(std::size_t size) : slots_(size), mask_(size - 1) {
  if (size == 0 || (size & (size - 1)) != 0) throw Error("timestep table size must be a power of two");
}

TimestepTable::Mark TimestepTable::state(std::uint64_t t) const {
  const Slot& s = slots_[t & mask_];
  return s.t == t ? s.mark : Mark::Unmarked;
}

void TimestepTable::mark(std::uint64_t t, Mark m) {
  Slot& s = slots_[t & mask_];
  if (s.mark != Mark::Unmarked && s.t != t) throw Error("timestep table too small for the lookahead in use");
  if (m == Mark::Unmarked) {
    if (s.t == t) s.mark = Mark::Unmarked;
    marked_.erase(t);
    return;
  }
  s.t = t;
  s.mark = m;
  marked_.insert(t);
}

std::uint64_t TimestepTable::next_assignment(std::uint64_t current_t, std::size_t n) {
  if (n == 0) throw Error("lookahead must be at least 1");
  std::uint64_t t = current_t;
  std::size_t seen = 0;
  while (seen < n) {
    ++t;
    if (t - current_t > slots_.size()) throw Error("timestep table too small for the lookahead in use");
    if (state(t) == Mark::Unmarked) ++seen;
  }
  mark(t, Mark::Speculating);
  return t;
}

std::size_t TimestepTable::release_after(std::uint64_t t) {
  std::size_t n = 0;
  auto it = marked_.upper_bound(t);
  for (auto j = it; j != marked_.end(); ++j, ++n) slots_[*j & mask_].mark = Mark::Unmarked;
  marked_.erase(it, marked_.end());
  return n;
}

void TimestepTable::recycle_through(std::uint64_t t) {
  while (!marked_.empty() && *marked_.begin() <= t) {
    std::uint64_t x = *marked_.begin();
    slots_[x & mask_].mark = Mark::Unmarked;
    marked_.erase(marked_.begin());
  }
}

std::optional<StateVector> ModelPredictor::predict(const StateVector& z, std::uint64_t t, std::uint64_t k) {
  std::uint64_t d = state_digest(z);
  if (chain_.empty() || chain_t_ != t || chain_digest_ != d || !chain_[0].same_state(z)) {
    chain_.clear();
    chain_.push_back(z);
    chain_t_ = t;
    chain_digest_ = d;
  }
  while (chain_.size() <= k) chain_.push_back(model_.predict(chain_.back()));
  return chain_[k];
}

BitMask ModelPredictor::scored_bytes(std::size_t universe) const {
  BitMask m(universe);
  for (BitAddr a : model_.schema.output_bits) m.set(a >> 3);
  return m;
}

std::optional<BitMask> ModelPredictor::modeled_bytes(std::size_t universe) const {
  BitMask m(universe);
  for (BitAddr a : model_.schema.input_bits) m.set(a >> 3);
  return m;
}

OraclePredictor::OraclePredictor(const Program& p, const StateVector& initial, std::uint32_t rip,
                                 std::uint64_t period)
    : trajectory_(native_breakpoints(p, initial, rip, period)) {}

std::optional<StateVector> OraclePredictor::predict(const StateVector&, std::uint64_t t, std::uint64_t k) {
  std::uint64_t target = t + k;
  if (target == 0 || target > trajectory_.size()) return std::nullopt;
  return trajectory_[target - 1];
}

std::vector<StateVector> native_breakpoints(const Program& p, const StateVector& initial, std::uint32_t rip,
                                            std::uint64_t period, std::uint64_t* total_icount,
                                            StateVector* final_state) {
  std::vector<StateVector> out;
  Vm vm(p.instructions, initial, false);
  std::uint64_t used = 0;
  bool running = true;
  if (vm.state().ip != rip) {
    RunResult r = vm.run_until(rip, 1, kRunBudget);
    used += r.steps;
    if (r.reason == StopReason::BudgetExhausted) throw Error("native run exceeded the instruction budget");
    running = r.reason == StopReason::HitRip;
  }
  while (running) {
    out.push_back(vm.state());
    RunResult r = vm.run_until(rip, period, kRunBudget - used);
    used += r.steps;
    if (r.reason == StopReason::BudgetExhausted) throw Error("native run exceeded the instruction budget");
    running = r.reason == StopReason::HitRip;
  }
  if (total_icount) *total_icount = vm.state().icount - initial.icount;
  if (final_state) *final_state = vm.state();
  return out;
}

double max_speedup(double e, std::size_t n) { return 1.0 + e * static_cast<double>(n); }

double hitrate_speedup_estimate(double h) {
  if (h >= 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - h);
}

namespace {

struct Worker {
  bool busy = false;
  std::uint64_t target = 0;
  double finish = 0;
  std::optional<CacheEntry> result;
  std::string outcome;
  bool stale = false;  // its timestep was released by a squash
};

class VirtualTimeEngine {
 public:
  VirtualTimeEngine(const Program& p, const EngineConfig& cfg, Predictor& pred, const StateVector& initial,
                    Cache& cache)
      : p_(p), cfg_(cfg), pred_(pred), initial_(initial), cache_(cache), table_(cfg.timestep_table_size),
        workers_(cfg.workers) {}

  RunReport run() {
    StateVector native_final;
    truth_ = native_breakpoints(p_, initial_, cfg_.rip, cfg_.period, &rep_.native_icount, &native_final);
    rep_.breakpoints = truth_.size();
    expected_ = cfg_.expected_interval > 0
                    ? cfg_.expected_interval
                    : (truth_.size() > 1 ? static_cast<double>(truth_.back().icount - truth_.front().icount) /
                                               static_cast<double>(truth_.size() - 1)
                                         : static_cast<double>(rep_.native_icount));
    cap_ = cfg_.speculation_cap ? cfg_.speculation_cap
                                : static_cast<std::uint64_t>(std::ceil(16.0 * expected_)) + 1000;
    lookahead_ = cfg_.effective_lookahead();
    scored_ = pred_.scored_bytes(initial_.size());
    modeled_ = pred_.modeled_bytes(initial_.size());
    spec_vm_.emplace(p_.instructions, initial_, true);

    Vm main(p_.instructions, initial_, false);
    std::uint64_t t = 0;
    bool halted = false;
    if (main.state().ip != cfg_.rip) {
      RunResult r = main.run_until(cfg_.rip, 1, kRunBudget);
      rep_.main_icount += r.steps;
      if (r.reason == StopReason::BudgetExhausted) throw Error("main process exceeded the instruction budget");
      halted = r.reason == StopReason::Halted;
    }
    if (!halted) t = 1;

    while (!halted) {
      double now = static_cast<double>(rep_.main_icount);
      complete_until(now);

      StateVector z = main.gather();
      check_late(t);
      while (true) {
        auto hit = cache_.lookup(z);
        if (!hit) {
          ++rep_.misses;
          trace(t, "lookup", now, "miss", -1);
          if (cfg_.squash_on_miss && table_.state(t) == TimestepTable::Mark::Done) squash(t, now);
          break;
        }
        ++rep_.hits;
        if (hit->origin_timestep != t) ++rep_.reused_hits;
        for (auto part : hit->parts) used_.insert(part);
        std::uint64_t icount = z.icount + hit->icount_delta;
        z = fast_forward(z, hit->z_s, hit->m_w);
        z.icount = icount;
        rep_.credited_icount += hit->icount_delta;
        trace(t, "lookup", now, "hit+" + std::to_string(hit->timestep_span), -1);
        t += hit->timestep_span;
        if (!cfg_.iterated_lookup) break;
        check_late(t);
      }
      if (!cfg_.iterated_lookup && cfg_.stitch_budget > 0) cache_.stitch_pass(cfg_.stitch_budget);

      table_.recycle_through(t);
      obs_state_ = z;
      obs_t_ = t;
      for (std::size_t w = 0; w < workers_.size(); ++w)
        if (!workers_[w].busy) dispatch(w, now);

      main.scatter(z, false);
      RunResult r = main.run_until(cfg_.rip, cfg_.period, kRunBudget);
      rep_.main_icount += r.steps;
      if (r.reason == StopReason::BudgetExhausted) throw Error("main process exceeded the instruction budget");
      if (r.reason == StopReason::Halted) {
        halted = true;
        trace(t, "halt", static_cast<double>(rep_.main_icount), "", -1);
      } else {
        ++t;
      }
    }

    finish(main.state(), native_final);
    return std::move(rep_);
  }

 private:
  void trace(std::uint64_t t, const char* ev, double time, std::string outcome, int worker) {
    if (cfg_.record_trace) rep_.trace.push_back({t, ev, time, std::move(outcome), worker});
  }

  void squash(std::uint64_t t, double now) {
    ++rep_.squashes;
    table_.release_after(t);
    for (auto& w : workers_)
      if (w.busy && w.target > t) w.stale = true;
    trace(t, "squash", now, "", -1);
  }

  void check_late(std::uint64_t t) {
    for (const auto& w : workers_)
      if (w.busy && w.target == t) ++rep_.late_speculations;
  }

  // Completions up to `now`, in (finish time, worker id) order. Workers that
  // finish strictly before `now` pick up new work from the last observed
  // main state straight away.
  void complete_until(double now) {
    while (true) {
      std::optional<std::size_t> next;
      for (std::size_t w = 0; w < workers_.size(); ++w) {
        const Worker& k = workers_[w];
        if (k.busy && k.finish <= now && (!next || k.finish < workers_[*next].finish)) next = w;
      }
      if (!next) return;
      Worker& k = workers_[*next];
      k.busy = false;
      std::string outcome = k.outcome;
      if (k.result) {
        auto id = cache_.add(std::move(*k.result));
        if (id) {
          spec_entries_.insert(*id);
        } else {
          outcome = "duplicate";
        }
      }
      k.result.reset();
      if (!k.stale) table_.mark(k.target, TimestepTable::Mark::Done);
      trace(k.target, "complete", k.finish, outcome, static_cast<int>(*next));
      if (k.finish < now) dispatch(*next, k.finish);
    }
  }

  void dispatch(std::size_t w, double at) {
    std::uint64_t target = table_.next_assignment(obs_t_, lookahead_);
    auto predicted = pred_.predict(obs_state_, obs_t_, target - obs_t_);
    if (!predicted) {
      table_.mark(target, TimestepTable::Mark::Unmarked);
      return;
    }
    if (target <= truth_.size()) {
      ++rep_.predictions_scored;
      if (masked_eq(*predicted, truth_[target - 1], scored_)) ++correct_predictions_;
    }
    ++rep_.speculations;
    Worker& k = workers_[w];
    k.busy = true;
    k.target = target;
    k.stale = false;
    k.result.reset();

    Vm& vm = *spec_vm_;
    vm.scatter(*predicted, true);
    std::uint64_t steps = 0;
    try {
      RunResult r = vm.run_until(cfg_.rip, cfg_.period, cap_);
      steps = r.steps;
      if (r.reason == StopReason::HitRip) {
        CacheEntry e;
        e.key = cache_.key_of(*predicted);
        e.z_p = std::move(*predicted);
        e.z_s = vm.gather();
        e.m_r = vm.read_mask();
        e.m_w = vm.write_mask();
        e.icount_delta = steps;
        e.timestep_span = 1;
        e.origin_timestep = target;
        if (modeled_) {
          BitMask outside = e.m_r;
          outside.subtract(*modeled_);
          if (!outside.empty()) ++rep_.unmodeled_reads;
        }
        k.result = std::move(e);
        k.outcome = "entry";
      } else {
        ++rep_.failed_speculations;
        k.outcome = r.reason == StopReason::Halted ? "halted" : "budget";
      }
    } catch (const ExecutionFault& f) {
      ++rep_.failed_speculations;
      steps = vm.state().icount - predicted->icount;
      k.outcome = "fault";
    }
    k.finish = at + (static_cast<double>(steps) + cfg_.dispatch_overhead) / cfg_.efficiency;
    trace(target, "dispatch", at, "k=" + std::to_string(target - obs_t_), static_cast<int>(w));
  }

  void finish(const StateVector& main_final, const StateVector& native_final) {
    CacheStats cs = cache_.stats();
    rep_.stitches = cs.stitches;
    rep_.verifications_failed = cs.verifications_failed;
    rep_.cache_entries = cache_.live_entries();
    std::uint64_t useful = 0;
    for (auto id : spec_entries_) useful += used_.count(id);
    rep_.wasted_speculations = rep_.speculations - useful;
    rep_.prediction_accuracy = rep_.predictions_scored
                                   ? static_cast<double>(correct_predictions_) /
                                         static_cast<double>(rep_.predictions_scored)
                                   : 0.0;
    std::uint64_t lookups = rep_.hits + rep_.misses;
    rep_.hit_rate = lookups ? static_cast<double>(rep_.hits) / static_cast<double>(lookups) : 0.0;
    rep_.speedup = rep_.main_icount ? static_cast<double>(rep_.native_icount) / static_cast<double>(rep_.main_icount)
                                    : 1.0;
    rep_.max_speedup = max_speedup(cfg_.efficiency, cfg_.workers);
    rep_.hitrate_speedup_estimate = hitrate_speedup_estimate(rep_.hit_rate);

    rep_.validated = true;
    rep_.output = p_.output_bytes(main_final);
    if (p_.output_bytes(main_final) != p_.output_bytes(native_final)) {
      rep_.validated = false;
      rep_.failure = "output region differs from the native run";
    } else if (rep_.main_icount + rep_.credited_icount != rep_.native_icount) {
      rep_.validated = false;
      rep_.failure = "instruction accounting mismatch: " + std::to_string(rep_.main_icount) + " + " +
                     std::to_string(rep_.credited_icount) + " != " + std::to_string(rep_.native_icount);
    }
  }

  const Program& p_;
  const EngineConfig& cfg_;
  Predictor& pred_;
  const StateVector& initial_;
  Cache& cache_;
  TimestepTable table_;
  std::vector<Worker> workers_;
  std::optional<Vm> spec_vm_;
  std::vector<StateVector> truth_;
  BitMask scored_;
  std::optional<BitMask> modeled_;
  double expected_ = 0;
  std::uint64_t cap_ = 0;
  std::size_t lookahead_ = 1;
  StateVector obs_state_;
  std::uint64_t obs_t_ = 0;
  std::set<std::size_t> spec_entries_;
  std::set<std::size_t> used_;
  std::uint64_t correct_predictions_ = 0;
  RunReport rep_;
};

}  // namespace

// Real threads, one per worker. The cache is the only shared structure;
// predictions are made on the main thread. Results depend on host timing.
static RunReport run_eager(const Program& p, const EngineConfig& cfg, Predictor& pred, const StateVector& initial,
                    Cache& cache) {
  RunReport rep;
  StateVector native_final;
  auto truth = native_breakpoints(p, initial, cfg.rip, cfg.period, &rep.native_icount, &native_final);
  rep.breakpoints = truth.size();
  double expected = cfg.expected_interval > 0 ? cfg.expected_interval
                    : truth.size() > 1
                        ? static_cast<double>(truth.back().icount - truth.front().icount) /
                              static_cast<double>(truth.size() - 1)
                        : static_cast<double>(rep.native_icount);
  std::uint64_t cap =
      cfg.speculation_cap ? cfg.speculation_cap : static_cast<std::uint64_t>(std::ceil(16.0 * expected)) + 1000;

  struct Job {
    std::uint64_t target;
    StateVector z;
  };
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Job> jobs;
  std::set<std::uint64_t> inflight;
  bool stop = false;
  std::atomic<std::uint64_t> failed{0};

  auto worker = [&] {
    Vm vm(p.instructions, initial, true);
    while (true) {
      Job job;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return stop || !jobs.empty(); });
        if (stop) return;
        job = std::move(jobs.front());
        jobs.pop_front();
      }
      vm.scatter(job.z, true);
      try {
        RunResult r = vm.run_until(cfg.rip, cfg.period, cap);
        if (r.reason == StopReason::HitRip) {
          CacheEntry e;
          e.key = cache.key_of(job.z);
          e.z_p = std::move(job.z);
          e.z_s = vm.gather();
          e.m_r = vm.read_mask();
          e.m_w = vm.write_mask();
          e.icount_delta = r.steps;
          e.timestep_span = 1;
          e.origin_timestep = job.target;
          cache.add(std::move(e));
        } else {
          ++failed;
        }
      } catch (const ExecutionFault&) {
        ++failed;
      }
      std::lock_guard lk(mu);
      inflight.erase(job.target);
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < cfg.workers; ++i) threads.emplace_back(worker);

  Vm main(p.instructions, initial, false);
  std::uint64_t t = 0;
  bool halted = false;
  std::size_t lookahead = cfg.effective_lookahead();
  try {
    if (main.state().ip != cfg.rip) {
      RunResult r = main.run_until(cfg.rip, 1, kRunBudget);
      rep.main_icount += r.steps;
      halted = r.reason != StopReason::HitRip;
    }
    if (!halted) t = 1;
    while (!halted) {
      StateVector z = main.gather();
      while (true) {
        auto hit = cache.lookup(z);
        if (!hit) {
          ++rep.misses;
          break;
        }
        ++rep.hits;
        if (hit->origin_timestep != t) ++rep.reused_hits;
        std::uint64_t icount = z.icount + hit->icount_delta;
        z = fast_forward(z, hit->z_s, hit->m_w);
        z.icount = icount;
        rep.credited_icount += hit->icount_delta;
        t += hit->timestep_span;
        if (!cfg.iterated_lookup) break;
      }
      if (!cfg.iterated_lookup && cfg.stitch_budget > 0) cache.stitch_pass(cfg.stitch_budget);
      {
        std::lock_guard lk(mu);
        std::uint64_t target = t;
        while (inflight.size() + jobs.size() < cfg.workers && jobs.size() < cfg.workers) {
          std::size_t seen = 0;
          while (seen < lookahead) {
            ++target;
            if (!inflight.count(target)) ++seen;
          }
          auto predicted = pred.predict(z, t, target - t);
          if (!predicted) break;
          inflight.insert(target);
          jobs.push_back({target, std::move(*predicted)});
          ++rep.speculations;
        }
      }
      cv.notify_all();
      main.scatter(z, false);
      RunResult r = main.run_until(cfg.rip, cfg.period, kRunBudget);
      rep.main_icount += r.steps;
      if (r.reason == StopReason::BudgetExhausted) throw Error("main process exceeded the instruction budget");
      if (r.reason == StopReason::Halted) halted = true;
      else ++t;
    }
  } catch (...) {
    {
      std::lock_guard lk(mu);
      stop = true;
    }
    cv.notify_all();
    for (auto& th : threads) th.join();
    throw;
  }
  {
    std::lock_guard lk(mu);
    stop = true;
  }
  cv.notify_all();
  for (auto& th : threads) th.join();

  rep.failed_speculations = failed;
  CacheStats cs = cache.stats();
  rep.stitches = cs.stitches;
  rep.verifications_failed = cs.verifications_failed;
  rep.cache_entries = cache.live_entries();
  std::uint64_t lookups = rep.hits + rep.misses;
  rep.hit_rate = lookups ? static_cast<double>(rep.hits) / static_cast<double>(lookups) : 0.0;
  rep.speedup = rep.main_icount ? static_cast<double>(rep.native_icount) / static_cast<double>(rep.main_icount) : 1.0;
  rep.max_speedup = max_speedup(cfg.efficiency, cfg.workers);
  rep.hitrate_speedup_estimate = hitrate_speedup_estimate(rep.hit_rate);
  rep.output = p.output_bytes(main.state());
  rep.validated = p.output_bytes(main.state()) == p.output_bytes(native_final) &&
                  rep.main_icount + rep.credited_icount == rep.native_icount;
  if (!rep.validated) rep.failure = "output or accounting mismatch against the native run";
  return rep;
}

RunReport run(const Program& p, const EngineConfig& cfg, Predictor& predictor, const StateVector& initial,
              Cache* cache) {
  cfg.validate();
  std::unique_ptr<Cache> own;
  if (!cache) {
    own = std::make_unique<Cache>(liveness(p).at(cfg.rip), cfg.max_cache_entries, cfg.key_mask);
    cache = own.get();
  }
  if (cfg.mode == EngineMode::Eager) return run_eager(p, cfg, predictor, initial, *cache);
  return VirtualTimeEngine(p, cfg, predictor, initial, *cache).run();
}

std::string RunReport::to_json() const {
  nlohmann::json j = {{"format", "asc-run-v1"},
                      {"native_icount", native_icount},
                      {"main_icount", main_icount},
                      {"credited_icount", credited_icount},
                      {"speedup", json_double(speedup)},
                      {"hits", hits},
                      {"misses", misses},
                      {"hit_rate", json_double(hit_rate)},
                      {"stitches", stitches},
                      {"speculations", speculations},
                      {"failed_speculations", failed_speculations},
                      {"wasted_speculations", wasted_speculations},
                      {"reused_hits", reused_hits},
                      {"verifications_failed", verifications_failed},
                      {"late_speculations", late_speculations},
                      {"squashes", squashes},
                      {"unmodeled_reads", unmodeled_reads},
                      {"predictions_scored", predictions_scored},
                      {"prediction_accuracy", json_double(prediction_accuracy)},
                      {"breakpoints", breakpoints},
                      {"cache_entries", cache_entries},
                      {"max_speedup", json_double(max_speedup)},
                      {"hitrate_speedup_estimate", json_double(hitrate_speedup_estimate)},
                      {"validated", validated},
                      {"status", validated ? "OK" : "FAILED"}};
  if (!failure.empty()) j["failure"] = failure;
  return j.dump(2) + "\n";
}

std::string RunReport::trace_csv() const {
  std::ostringstream out;
  out << "timestep,event,icount,outcome,worker\n";
  for (const auto& e : trace)
    out << e.timestep << ',' << e.event << ',' << format_double(e.time) << ',' << e.outcome << ',' << e.worker
        << '\n';
  return out.str();
}

}  // namespace asc
