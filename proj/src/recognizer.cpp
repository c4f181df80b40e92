#include "asc/recognizer.hpp"

#include <cmath>
#include <vector>

#include <json.hpp>

#include "asc/machine.hpp"

namespace asc {

RipResult find_rip(const Program& p, const StateVector& initial, std::uint64_t threshold, std::uint64_t budget) {
  const auto cands = candidates(p);
  std::vector<std::uint64_t> counts(p.instructions.size(), 0);
  std::vector<bool> is_cand(p.instructions.size(), false);
  for (auto c : cands) is_cand[c] = true;

  Vm vm(p.instructions, initial, false);
  std::uint64_t steps = 0;
  while (!vm.halted()) {
    if (steps++ == budget)
      throw RecognitionError(RecognitionError::Kind::ProfileBudget,
                             "profiling run did not halt within " + std::to_string(budget) + " instructions");
    std::uint64_t ip = vm.state().ip;
    if (ip < is_cand.size() && is_cand[ip]) ++counts[ip];
    vm.step();
  }

  RipResult r{0, {}};
  std::optional<std::uint32_t> best;
  for (auto c : cands) {
    r.frequencies[c] = counts[c];
    if (counts[c] >= threshold && (!best || counts[c] < counts[*best])) best = c;
  }
  if (!best)
    throw RecognitionError(RecognitionError::Kind::NoRecurringCandidate,
                           "no candidate instruction executes at least " + std::to_string(threshold) + " times");
  r.rip = *best;
  return r;
}

PeriodResult find_period(const Program& p, const StateVector& initial, std::uint32_t rip, std::uint64_t min_icount,
                         std::uint64_t budget) {
  Vm vm(p.instructions, initial, false);
  std::uint64_t occurrences = vm.state().ip == rip ? 1 : 0;
  std::uint64_t first = 0, last = 0, used = 0;
  while (used < budget) {
    RunResult r = vm.run_until(rip, 1, budget - used);
    used += r.steps;
    if (r.reason != StopReason::HitRip) break;
    if (occurrences++ == 0) first = vm.state().icount;
    last = vm.state().icount;
  }
  if (!vm.halted() && used >= budget)
    throw RecognitionError(RecognitionError::Kind::ProfileBudget,
                           "profiling run did not halt within " + std::to_string(budget) + " instructions");
  if (occurrences < 2)
    throw RecognitionError(RecognitionError::Kind::PeriodUndefined,
                           "instruction " + std::to_string(rip) + " is reached fewer than two times");
  if (initial.ip == rip) first = initial.icount;
  double mean = static_cast<double>(last - first) / static_cast<double>(occurrences - 1);
  std::uint64_t k = 1;
  if (mean > 0 && static_cast<double>(min_icount) > mean)
    k = static_cast<std::uint64_t>(std::ceil(static_cast<double>(min_icount) / mean));
  while (k > 1 && static_cast<double>(k - 1) * mean >= static_cast<double>(min_icount)) --k;
  return {k, occurrences, mean};
}

RipChoice recognize(const Program& p, const StateVector& initial, const RecognizerOptions& opt) {
  RipChoice c;
  c.threshold = opt.threshold;
  c.min_icount = opt.min_icount;
  if (opt.rip) {
    c.rip = *opt.rip;
    if (c.rip >= p.instructions.size())
      throw RecognitionError(RecognitionError::Kind::NoRecurringCandidate,
                             "rip " + std::to_string(c.rip) + " is outside the program");
  } else {
    RipResult r = find_rip(p, initial, opt.threshold, opt.budget);
    c.rip = r.rip;
    c.candidate_frequencies = std::move(r.frequencies);
  }
  PeriodResult pr = find_period(p, initial, c.rip, opt.min_icount, opt.budget);
  c.period = opt.period ? *opt.period : pr.period;
  if (c.period < 1) throw Error("period must be at least 1");
  c.mean_interval_icount = pr.mean_interval * static_cast<double>(c.period);
  Vm vm(p.instructions, initial, false);
  c.profile_icount = vm.run(opt.budget).steps;
  return c;
}

std::string recognition_report(const RipChoice& c) {
  nlohmann::json freq = nlohmann::json::array();
  for (const auto& [ip, n] : c.candidate_frequencies) freq.push_back({{"ip", ip}, {"count", n}});
  nlohmann::json j = {{"format", "asc-recognition-v1"},
                      {"rip", c.rip},
                      {"period", c.period},
                      {"threshold", c.threshold},
                      {"min_icount", c.min_icount},
                      {"mean_interval_icount", c.mean_interval_icount},
                      {"profile_icount", c.profile_icount},
                      {"candidates", freq}};
  return j.dump(2) + "\n";
}

}  // namespace asc
