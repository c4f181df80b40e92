#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "asc/asmlang.hpp"
#include "asc/error.hpp"
#include "asc/statevec.hpp"

namespace asc {

class RecognitionError : public Error {
 public:
  enum class Kind { NoRecurringCandidate, PeriodUndefined, ProfileBudget };
  RecognitionError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint64_t kDefaultThreshold = 64;
inline constexpr std::uint64_t kDefaultMinIcount = 5000;
inline constexpr std::uint64_t kDefaultProfileBudget = 200'000'000;

struct RipResult {
  std::uint32_t rip;
  std::map<std::uint32_t, std::uint64_t> frequencies;
};

struct RipChoice {
  std::uint32_t rip = 0;
  std::uint64_t period = 1;
  std::map<std::uint32_t, std::uint64_t> candidate_frequencies;
  // Mean instructions between consecutive effective breakpoints (period × raw interval).
  double mean_interval_icount = 0;
  std::uint64_t threshold = kDefaultThreshold;
  std::uint64_t min_icount = kDefaultMinIcount;
  std::uint64_t profile_icount = 0;
};

struct RecognizerOptions {
  std::uint64_t threshold = kDefaultThreshold;
  std::uint64_t min_icount = kDefaultMinIcount;
  std::uint64_t budget = kDefaultProfileBudget;
  std::optional<std::uint32_t> rip;
  std::optional<std::uint64_t> period;
};

// Counts executions of every candidate on one profiling run; picks the least
// frequent candidate reaching `threshold` (ties: smallest ip).
RipResult find_rip(const Program& p, const StateVector& initial, std::uint64_t threshold = kDefaultThreshold,
                   std::uint64_t budget = kDefaultProfileBudget);

struct PeriodResult {
  std::uint64_t period;
  std::uint64_t occurrences;
  double mean_interval;  // instructions between consecutive rip arrivals
};

PeriodResult find_period(const Program& p, const StateVector& initial, std::uint32_t rip,
                         std::uint64_t min_icount = kDefaultMinIcount, std::uint64_t budget = kDefaultProfileBudget);

// Both passes, honoring overrides.
RipChoice recognize(const Program& p, const StateVector& initial, const RecognizerOptions& opt = {});

std::string recognition_report(const RipChoice& c);

}  // namespace asc
