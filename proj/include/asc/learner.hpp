#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asc/asmlang.hpp"
#include "asc/error.hpp"
#include "asc/statevec.hpp"

namespace asc {

class NothingToPredict : public Error {
 public:
  using Error::Error;
};

// Bit address = state byte × 8 + bit (LSB first).
using BitAddr = std::uint32_t;

struct BitSchema {
  std::size_t universe = 0;  // state bytes
  std::vector<BitAddr> input_bits;
  std::vector<BitAddr> output_bits;
  LiveSet live;

  // Table-1 style counts, filled by collect().
  std::uint64_t touched_memory_bits = 0;
  std::uint64_t bits_without_tracking = 0;

  std::uint64_t bits_with_tracking() const { return output_bits.size(); }
  bool operator==(const BitSchema& o) const {
    return universe == o.universe && input_bits == o.input_bits && output_bits == o.output_bits;
  }
};

// Packed example rows: inputs[i] at t, outputs[i] at t+1.
class TrainingSet {
 public:
  TrainingSet() = default;
  explicit TrainingSet(BitSchema schema);

  const BitSchema& schema() const { return schema_; }
  std::size_t size() const { return n_; }
  std::size_t input_words() const { return in_words_; }
  std::size_t output_words() const { return out_words_; }

  void add(const StateVector& before, const StateVector& after);
  void add_row(std::span<const std::uint64_t> in, std::span<const std::uint64_t> out);

  bool input(std::size_t i, std::size_t f) const { return (in_[i * in_words_ + (f >> 6)] >> (f & 63)) & 1; }
  bool output(std::size_t i, std::size_t o) const { return (out_[i * out_words_ + (o >> 6)] >> (o & 63)) & 1; }
  std::span<const std::uint64_t> input_row(std::size_t i) const { return {&in_[i * in_words_], in_words_}; }
  std::span<const std::uint64_t> output_row(std::size_t i) const { return {&out_[i * out_words_], out_words_}; }

  void append(const TrainingSet& o);

  void write(std::ostream& out) const;
  static TrainingSet read(std::istream& in);

 private:
  BitSchema schema_;
  std::size_t in_words_ = 0;
  std::size_t out_words_ = 0;
  std::size_t n_ = 0;
  std::vector<std::uint64_t> in_;
  std::vector<std::uint64_t> out_;
};

struct Tree {
  // Internal node: feature >= 0 indexes schema.input_bits. Leaf: feature = -1.
  std::vector<std::int32_t> feature;
  std::vector<std::int32_t> left;   // taken when the tested bit is 0
  std::vector<std::int32_t> right;  // taken when the tested bit is 1
  std::vector<std::uint8_t> value;

  std::size_t nodes() const { return feature.size(); }
  std::size_t depth() const;
  bool operator==(const Tree&) const = default;

  template <class BitFn>
  bool eval(BitFn&& bit) const {
    std::int32_t n = 0;
    while (feature[n] >= 0) n = bit(static_cast<std::size_t>(feature[n])) ? right[n] : left[n];
    return value[n] != 0;
  }
};

inline constexpr int kDefaultMaxDepth = 16;
// Splits scoring within this fraction of the parent's Gini mass of the best
// split are treated as ties.
inline constexpr double kDefaultTieTolerance = 0.03;

class ModelSet {
 public:
  BitSchema schema;
  std::vector<Tree> trees;
  int max_depth = kDefaultMaxDepth;
  double tie_tolerance = kDefaultTieTolerance;
  std::map<std::string, std::string> meta;

  StateVector predict(const StateVector& z) const;
  StateVector predict_k(const StateVector& z, std::uint64_t k) const;

  std::string to_json() const;
  static ModelSet from_json(const std::string& text);
};

struct Accuracy {
  double per_bit;
  double whole_state;
};

// One run per initial state. Only complete rip-to-rip intervals contribute.
struct Trajectory {
  std::vector<StateVector> breakpoints;
  std::vector<BitMask> read_masks;   // interval k: breakpoints[k] -> breakpoints[k+1]
  std::vector<BitMask> write_masks;
};

Trajectory trace_breakpoints(const Program& p, const StateVector& initial, std::uint32_t rip, std::uint64_t period,
                             bool keep_states = true, std::uint64_t budget = 500'000'000);

BitSchema derive_schema(const Program& p, std::uint32_t rip, std::uint64_t period,
                        std::span<const StateVector> initials);
TrainingSet project(const Program& p, std::uint32_t rip, std::uint64_t period, std::span<const StateVector> initials,
                    const BitSchema& schema);
// Schema from the union of masks, then examples projected onto it.
TrainingSet collect(const Program& p, std::uint32_t rip, std::uint64_t period, std::span<const StateVector> initials);

Tree train_tree(const TrainingSet& ts, std::size_t output, int max_depth = kDefaultMaxDepth,
                double tie_tolerance = kDefaultTieTolerance);
ModelSet train(const TrainingSet& ts, int max_depth = kDefaultMaxDepth, double tie_tolerance = kDefaultTieTolerance);
Accuracy accuracy(const ModelSet& m, const TrainingSet& heldout);

}  // namespace asc
