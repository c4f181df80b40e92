#include "asc/learner.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "asc/machine.hpp"

namespace asc {
namespace {

std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }

bool state_bit(const StateVector& z, BitAddr a) { return (z.data()[a >> 3] >> (a & 7)) & 1; }

void pack(const StateVector& z, const std::vector<BitAddr>& bits, std::uint64_t* row) {
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (state_bit(z, bits[i])) row[i >> 6] |= std::uint64_t{1} << (i & 63);
}

std::vector<BitAddr> bits_of(const BitMask& bytes) {
  std::vector<BitAddr> out;
  bytes.for_each([&](std::size_t b) {
    for (unsigned k = 0; k < 8; ++k) out.push_back(static_cast<BitAddr>(b * 8 + k));
  });
  return out;
}

// Visits every effective breakpoint: the first rip arrival, then every
// period-th arrival. fn(state, read_mask, write_mask, complete_interval).
void walk_breakpoints(const Program& p, const StateVector& initial, std::uint32_t rip, std::uint64_t period,
                      bool track, std::uint64_t budget,
                      const std::function<void(const Vm&, bool first)>& fn) {
  Vm vm(p.instructions, initial, track);
  std::uint64_t used = 0;
  if (vm.state().ip != rip) {
    RunResult r = vm.run_until(rip, 1, budget);
    used += r.steps;
    if (r.reason == StopReason::BudgetExhausted) throw Error("program exceeded the instruction budget");
    if (r.reason == StopReason::Halted) return;
  }
  fn(vm, true);
  while (true) {
    vm.clear_masks();
    RunResult r = vm.run_until(rip, period, budget - std::min(budget, used));
    used += r.steps;
    if (r.reason == StopReason::BudgetExhausted) throw Error("program exceeded the instruction budget");
    if (r.reason == StopReason::Halted) return;
    fn(vm, false);
  }
}

constexpr double kNoSplit = std::numeric_limits<double>::infinity();
// Two-level search is quadratic in the feature count, so it is rationed per tree.
constexpr std::size_t kLookaheadBudget = 64;
constexpr std::size_t kLookaheadMinSamples = 8;

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& ts, int max_depth, double tie_tolerance)
      : ts_(ts), n_(ts.size()), w_(words_for(ts.size())), max_depth_(max_depth), tie_tolerance_(tie_tolerance) {
    const std::size_t nf = ts.schema().input_bits.size();
    std::vector<std::vector<std::uint64_t>> cols(nf, std::vector<std::uint64_t>(w_, 0));
    for (std::size_t i = 0; i < n_; ++i) {
      auto row = ts.input_row(i);
      for (std::size_t k = 0; k < row.size(); ++k) {
        std::uint64_t bits = row[k];
        while (bits) {
          std::size_t f = k * 64 + static_cast<std::size_t>(std::countr_zero(bits));
          cols[f][i >> 6] |= std::uint64_t{1} << (i & 63);
          bits &= bits - 1;
        }
      }
    }
    // Features constant over the whole set can never split a node.
    for (std::size_t f = 0; f < nf; ++f) {
      std::size_t c = 0;
      for (auto x : cols[f]) c += static_cast<std::size_t>(std::popcount(x));
      if (c != 0 && c != n_) {
        features_.push_back(static_cast<std::int32_t>(f));
        columns_.push_back(std::move(cols[f]));
      }
    }
  }

  Tree build(std::size_t output) {
    lookaheads_left_ = kLookaheadBudget;
    target_word_ = ts_.schema().output_bits[output] / 64;
    local_.clear();
    for (std::size_t c = 0; c < features_.size(); ++c)
      if (ts_.schema().input_bits[features_[c]] / 64 == target_word_) local_.push_back(c);
    y_.assign(w_, 0);
    for (std::size_t i = 0; i < n_; ++i)
      if (ts_.output(i, output)) y_[i >> 6] |= std::uint64_t{1} << (i & 63);
    Tree t;
    std::vector<std::uint64_t> all(w_, ~std::uint64_t{0});
    if (n_ % 64) all.back() = (std::uint64_t{1} << (n_ % 64)) - 1;
    grow(t, Node{std::move(all), {}, n_, false}, 0);
    return t;
  }

 private:
  struct Node {
    std::vector<std::uint64_t> set;   // bitset mode
    std::vector<std::uint32_t> list;  // list mode
    std::size_t count;
    bool is_list;
  };

  bool test(std::size_t col, std::size_t i) const { return (columns_[col][i >> 6] >> (i & 63)) & 1; }
  bool label(std::size_t i) const { return (y_[i >> 6] >> (i & 63)) & 1; }

  std::int32_t leaf(Tree& t, bool v) {
    t.feature.push_back(-1);
    t.left.push_back(-1);
    t.right.push_back(-1);
    t.value.push_back(v ? 1 : 0);
    return static_cast<std::int32_t>(t.feature.size() - 1);
  }

  static double impurity(std::size_t nl, std::size_t pl, std::size_t nr, std::size_t pr) {
    double a = nl ? static_cast<double>(pl) * static_cast<double>(nl - pl) / static_cast<double>(nl) : 0.0;
    double b = nr ? static_cast<double>(pr) * static_cast<double>(nr - pr) / static_cast<double>(nr) : 0.0;
    return a + b;
  }

  std::size_t positives(const Node& nd) const {
    std::size_t pos = 0;
    if (nd.is_list) {
      for (auto i : nd.list) pos += label(i);
    } else {
      for (std::size_t k = 0; k < w_; ++k) pos += static_cast<std::size_t>(std::popcount(nd.set[k] & y_[k]));
    }
    return pos;
  }

  // Gini mass after splitting nd on each feature; kNoSplit where a side is empty.
  void score(const Node& nd, std::size_t pos, std::vector<double>& out) const {
    const std::size_t n0 = nd.count;
    out.assign(features_.size(), kNoSplit);
    if (nd.is_list) {
      for (std::size_t c = 0; c < features_.size(); ++c) {
        std::size_t n1 = 0, p1 = 0;
        for (auto i : nd.list) {
          if (test(c, i)) {
            ++n1;
            p1 += label(i);
          }
        }
        if (n1 == 0 || n1 == n0) continue;
        out[c] = impurity(n0 - n1, pos - p1, n1, p1);
      }
      return;
    }
    std::vector<std::uint64_t> sy(w_);
    for (std::size_t k = 0; k < w_; ++k) sy[k] = nd.set[k] & y_[k];
    for (std::size_t c = 0; c < features_.size(); ++c) {
      const std::uint64_t* col = columns_[c].data();
      std::size_t n1 = 0, p1 = 0;
      for (std::size_t k = 0; k < w_; ++k) {
        n1 += static_cast<std::size_t>(std::popcount(nd.set[k] & col[k]));
        p1 += static_cast<std::size_t>(std::popcount(sy[k] & col[k]));
      }
      if (n1 == 0 || n1 == n0) continue;
      out[c] = impurity(n0 - n1, pos - p1, n1, p1);
    }
  }

  std::pair<Node, Node> partition(const Node& node, std::size_t c) const {
    Node lo{{}, {}, 0, true}, hi{{}, {}, 0, true};
    if (node.is_list) {
      for (auto i : node.list) (test(c, i) ? hi : lo).list.push_back(i);
    } else {
      lo.set.resize(w_);
      hi.set.resize(w_);
      for (std::size_t k = 0; k < w_; ++k) {
        hi.set[k] = node.set[k] & columns_[c][k];
        lo.set[k] = node.set[k] & ~columns_[c][k];
      }
      lo.is_list = hi.is_list = false;
    }
    lo.count = lo.is_list ? lo.list.size() : popcount(lo.set);
    hi.count = hi.is_list ? hi.list.size() : popcount(hi.set);
    to_list_if_small(lo);
    to_list_if_small(hi);
    return {std::move(lo), std::move(hi)};
  }

  // Best Gini mass reachable with one more split on a local feature below nd.
  double best_below(const Node& nd) const {
    std::size_t pos = positives(nd);
    double self = static_cast<double>(pos) * static_cast<double>(nd.count - pos) / static_cast<double>(nd.count);
    if (pos == 0 || pos == nd.count) return 0.0;
    for (std::size_t c : local_) {
      std::size_t n1 = 0, p1 = 0;
      if (nd.is_list) {
        for (auto i : nd.list) {
          if (test(c, i)) {
            ++n1;
            p1 += label(i);
          }
        }
      } else {
        for (std::size_t k = 0; k < w_; ++k) {
          n1 += static_cast<std::size_t>(std::popcount(nd.set[k] & columns_[c][k]));
          p1 += static_cast<std::size_t>(std::popcount(nd.set[k] & columns_[c][k] & y_[k]));
        }
      }
      if (n1 == 0 || n1 == nd.count) continue;
      self = std::min(self, impurity(nd.count - n1, pos - p1, n1, p1));
    }
    return self;
  }

  // Among scores within slack of the minimum: a bit of the output's own
  // 8-byte word if there is one, else the lowest index. -1 if nothing splits.
  std::int64_t pick(const std::vector<double>& scores, double slack) const {
    double lowest = kNoSplit;
    for (double sc : scores) lowest = std::min(lowest, sc);
    if (lowest == kNoSplit) return -1;
    std::int64_t first = -1;
    for (std::size_t c = 0; c < scores.size(); ++c) {
      if (scores[c] > lowest + slack) continue;
      if (first < 0) first = static_cast<std::int64_t>(c);
      if (ts_.schema().input_bits[features_[c]] / 64 == target_word_) return static_cast<std::int64_t>(c);
    }
    return first;
  }

  std::int32_t grow(Tree& t, Node node, int depth) {
    const std::size_t n0 = node.count;
    const std::size_t pos = positives(node);
    const bool majority = pos * 2 > n0;
    if (pos == 0 || pos == n0 || depth >= max_depth_) return leaf(t, majority);

    // Best split by Gini. Any split within tie_tolerance x parent impurity of
    // the best counts as a tie; ties go to the output's own word, then to the
    // lowest feature index (low-order bits first, as carry chains need).
    std::vector<double> scores;
    score(node, pos, scores);
    const double parent = static_cast<double>(pos) * static_cast<double>(n0 - pos) / static_cast<double>(n0);
    const double slack = tie_tolerance_ * parent;
    std::int64_t best = pick(scores, slack);
    if (best < 0) return leaf(t, majority);

    // No informative split: XOR-shaped targets look like this, so score the
    // output's own word by the best two-level result instead. Restricting to
    // that word keeps the search quadratic in 64, not in the schema.
    if (scores[static_cast<std::size_t>(best)] >= parent - slack && n0 >= kLookaheadMinSamples &&
        lookaheads_left_ > 0 && !local_.empty()) {
      --lookaheads_left_;
      std::vector<double> two(features_.size(), kNoSplit);
      for (std::size_t c : local_) {
        if (scores[c] == kNoSplit) continue;
        auto [lo, hi] = partition(node, c);
        two[c] = best_below(lo) + best_below(hi);
      }
      std::int64_t alt = pick(two, slack);
      if (alt >= 0 && two[static_cast<std::size_t>(alt)] < parent - slack) best = alt;
    }

    const std::size_t c = static_cast<std::size_t>(best);
    auto [lo, hi] = partition(node, c);
    node = Node{};

    std::int32_t id = static_cast<std::int32_t>(t.feature.size());
    t.feature.push_back(features_[c]);
    t.left.push_back(-1);
    t.right.push_back(-1);
    t.value.push_back(majority ? 1 : 0);
    std::int32_t l = grow(t, std::move(lo), depth + 1);
    std::int32_t r = grow(t, std::move(hi), depth + 1);
    t.left[id] = l;
    t.right[id] = r;
    return id;
  }

  static std::size_t popcount(const std::vector<std::uint64_t>& v) {
    std::size_t c = 0;
    for (auto x : v) c += static_cast<std::size_t>(std::popcount(x));
    return c;
  }

  // Small nodes are cheaper to scan sample by sample than word by word.
  void to_list_if_small(Node& nd) const {
    if (nd.is_list || nd.count * 2 >= w_) return;
    for (std::size_t k = 0; k < w_; ++k) {
      std::uint64_t bits = nd.set[k];
      while (bits) {
        nd.list.push_back(static_cast<std::uint32_t>(k * 64 + static_cast<std::size_t>(std::countr_zero(bits))));
        bits &= bits - 1;
      }
    }
    nd.set = {};
    nd.is_list = true;
  }

  const TrainingSet& ts_;
  std::size_t n_;
  std::size_t w_;
  int max_depth_;
  double tie_tolerance_;
  std::vector<std::int32_t> features_;
  std::vector<std::vector<std::uint64_t>> columns_;
  std::vector<std::uint64_t> y_;
  std::size_t lookaheads_left_ = 0;
  std::uint32_t target_word_ = 0;
  std::vector<std::size_t> local_;  // columns in the target's word
};

}  // namespace

TrainingSet::TrainingSet(BitSchema schema)
    : schema_(std::move(schema)),
      in_words_(words_for(schema_.input_bits.size())),
      out_words_(words_for(schema_.output_bits.size())) {}

void TrainingSet::add(const StateVector& before, const StateVector& after) {
  if (before.size() != schema_.universe || after.size() != schema_.universe)
    throw StructuralError("state does not match the training schema");
  in_.resize(in_.size() + in_words_, 0);
  out_.resize(out_.size() + out_words_, 0);
  pack(before, schema_.input_bits, in_.data() + n_ * in_words_);
  pack(after, schema_.output_bits, out_.data() + n_ * out_words_);
  ++n_;
}

void TrainingSet::add_row(std::span<const std::uint64_t> in, std::span<const std::uint64_t> out) {
  if (in.size() != in_words_ || out.size() != out_words_) throw StructuralError("row width mismatch");
  in_.insert(in_.end(), in.begin(), in.end());
  out_.insert(out_.end(), out.begin(), out.end());
  ++n_;
}

void TrainingSet::append(const TrainingSet& o) {
  if (!(o.schema_ == schema_)) throw StructuralError("training sets have different schemas");
  in_.insert(in_.end(), o.in_.begin(), o.in_.end());
  out_.insert(out_.end(), o.out_.begin(), o.out_.end());
  n_ += o.n_;
}

void TrainingSet::write(std::ostream& out) const {
  auto put = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  out.write("ASCT", 4);
  out.put(1);
  put(schema_.universe);
  put(schema_.input_bits.size());
  put(schema_.output_bits.size());
  put(n_);
  for (auto b : schema_.input_bits) put(b);
  for (auto b : schema_.output_bits) put(b);
  for (auto w : in_) put(w);
  for (auto w : out_) put(w);
}

TrainingSet TrainingSet::read(std::istream& in) {
  auto get = [&]() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      int c = in.get();
      if (c == EOF) throw Error("truncated training set");
      v |= std::uint64_t(c & 0xff) << (8 * i);
    }
    return v;
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "ASCT" || in.get() != 1) throw Error("not a training-set dump");
  BitSchema s;
  s.universe = get();
  std::size_t ni = get(), no = get(), n = get();
  for (std::size_t i = 0; i < ni; ++i) s.input_bits.push_back(static_cast<BitAddr>(get()));
  for (std::size_t i = 0; i < no; ++i) s.output_bits.push_back(static_cast<BitAddr>(get()));
  TrainingSet ts(std::move(s));
  ts.n_ = n;
  ts.in_.resize(n * ts.in_words_);
  ts.out_.resize(n * ts.out_words_);
  for (auto& w : ts.in_) w = get();
  for (auto& w : ts.out_) w = get();
  return ts;
}

std::size_t Tree::depth() const {
  std::function<std::size_t(std::int32_t)> d = [&](std::int32_t n) -> std::size_t {
    if (feature[n] < 0) return 0;
    return 1 + std::max(d(left[n]), d(right[n]));
  };
  return feature.empty() ? 0 : d(0);
}

StateVector ModelSet::predict(const StateVector& z) const {
  if (z.size() != schema.universe) throw StructuralError("state does not match the model schema");
  std::vector<std::uint8_t> bits(trees.size());
  for (std::size_t o = 0; o < trees.size(); ++o)
    bits[o] = trees[o].eval([&](std::size_t f) { return state_bit(z, schema.input_bits[f]); });
  StateVector out = z;
  std::uint8_t* d = out.data();
  for (std::size_t o = 0; o < trees.size(); ++o) {
    BitAddr a = schema.output_bits[o];
    auto mask = static_cast<std::uint8_t>(1u << (a & 7));
    if (bits[o])
      d[a >> 3] |= mask;
    else
      d[a >> 3] &= static_cast<std::uint8_t>(~mask);
  }
  return out;
}

StateVector ModelSet::predict_k(const StateVector& z, std::uint64_t k) const {
  StateVector s = z;
  for (std::uint64_t i = 0; i < k; ++i) s = predict(s);
  return s;
}

std::string ModelSet::to_json() const {
  nlohmann::json j;
  j["format"] = "asc-model-v1";
  j["max_depth"] = max_depth;
  j["tie_tolerance"] = tie_tolerance;
  j["universe"] = schema.universe;
  j["live"] = schema.live.bits();
  j["input_bits"] = schema.input_bits;
  j["output_bits"] = schema.output_bits;
  j["touched_memory_bits"] = schema.touched_memory_bits;
  j["bits_without_tracking"] = schema.bits_without_tracking;
  j["meta"] = meta;
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : trees)
    ts.push_back({{"feature", t.feature}, {"left", t.left}, {"right", t.right}, {"value", t.value}});
  j["trees"] = std::move(ts);
  return j.dump() + "\n";
}

ModelSet ModelSet::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "asc-model-v1") throw Error("not an asc model file");
  ModelSet m;
  m.max_depth = j.at("max_depth").get<int>();
  m.tie_tolerance = j.value("tie_tolerance", 0.0);
  m.schema.universe = j.at("universe").get<std::size_t>();
  m.schema.live = LiveSet(j.at("live").get<std::uint16_t>());
  m.schema.input_bits = j.at("input_bits").get<std::vector<BitAddr>>();
  m.schema.output_bits = j.at("output_bits").get<std::vector<BitAddr>>();
  m.schema.touched_memory_bits = j.value("touched_memory_bits", std::uint64_t{0});
  m.schema.bits_without_tracking = j.value("bits_without_tracking", std::uint64_t{0});
  m.meta = j.value("meta", std::map<std::string, std::string>{});
  for (const auto& t : j.at("trees")) {
    Tree tr;
    tr.feature = t.at("feature").get<std::vector<std::int32_t>>();
    tr.left = t.at("left").get<std::vector<std::int32_t>>();
    tr.right = t.at("right").get<std::vector<std::int32_t>>();
    tr.value = t.at("value").get<std::vector<std::uint8_t>>();
    m.trees.push_back(std::move(tr));
  }
  if (m.trees.size() != m.schema.output_bits.size()) throw Error("model has the wrong number of trees");
  for (const auto& t : m.trees)
    for (auto f : t.feature)
      if (f >= static_cast<std::int32_t>(m.schema.input_bits.size())) throw Error("tree tests a bit outside the schema");
  return m;
}

Trajectory trace_breakpoints(const Program& p, const StateVector& initial, std::uint32_t rip, std::uint64_t period,
                             bool keep_states, std::uint64_t budget) {
  Trajectory t;
  walk_breakpoints(p, initial, rip, period, true, budget, [&](const Vm& vm, bool first) {
    if (!first) {
      t.read_masks.push_back(vm.read_mask());
      t.write_masks.push_back(vm.write_mask());
    }
    if (keep_states) t.breakpoints.push_back(vm.state());
  });
  return t;
}

BitSchema derive_schema(const Program& p, std::uint32_t rip, std::uint64_t period,
                        std::span<const StateVector> initials) {
  if (initials.empty()) throw Error("no training inputs");
  const std::size_t universe = initials[0].size();
  BitMask reads(universe), writes(universe);
  for (const auto& z : initials) {
    walk_breakpoints(p, z, rip, period, true, 500'000'000, [&](const Vm& vm, bool first) {
      if (first) return;
      reads |= vm.read_mask();
      writes |= vm.write_mask();
    });
  }
  BitSchema s;
  s.universe = universe;
  s.live = liveness(p).at(rip);
  BitMask regs = register_mask(s.live, universe);
  BitMask memory(universe);
  memory.set_range(kMemOffset, universe - kMemOffset);

  BitMask in = mask_union(reads, regs);
  BitMask out = mask_intersection(writes, in);
  s.input_bits = bits_of(in);
  s.output_bits = bits_of(out);

  BitMask touched = mask_intersection(mask_union(reads, writes), memory);
  s.touched_memory_bits = touched.bit_count();
  BitMask without = mask_union(mask_intersection(writes, memory), mask_intersection(writes, regs));
  s.bits_without_tracking = without.bit_count();
  if (s.output_bits.empty()) throw NothingToPredict("no state bits change between breakpoints");
  return s;
}

TrainingSet project(const Program& p, std::uint32_t rip, std::uint64_t period, std::span<const StateVector> initials,
                    const BitSchema& schema) {
  TrainingSet ts(schema);
  for (const auto& z : initials) {
    StateVector prev;
    walk_breakpoints(p, z, rip, period, false, 500'000'000, [&](const Vm& vm, bool first) {
      if (!first) ts.add(prev, vm.state());
      prev = vm.state();
    });
  }
  return ts;
}

TrainingSet collect(const Program& p, std::uint32_t rip, std::uint64_t period, std::span<const StateVector> initials) {
  return project(p, rip, period, initials, derive_schema(p, rip, period, initials));
}

Tree train_tree(const TrainingSet& ts, std::size_t output, int max_depth, double tie_tolerance) {
  if (ts.size() == 0) throw Error("empty training set");
  return TreeBuilder(ts, max_depth, tie_tolerance).build(output);
}

ModelSet train(const TrainingSet& ts, int max_depth, double tie_tolerance) {
  if (ts.size() == 0) throw Error("empty training set");
  if (tie_tolerance < 0) throw Error("tie tolerance must be non-negative");
  ModelSet m;
  m.schema = ts.schema();
  m.max_depth = max_depth;
  m.tie_tolerance = tie_tolerance;
  TreeBuilder b(ts, max_depth, tie_tolerance);
  for (std::size_t o = 0; o < ts.schema().output_bits.size(); ++o) m.trees.push_back(b.build(o));
  return m;
}

Accuracy accuracy(const ModelSet& m, const TrainingSet& heldout) {
  if (!(m.schema == heldout.schema())) throw StructuralError("held-out set uses a different schema");
  if (heldout.size() == 0) return {1.0, 1.0};
  std::size_t good_bits = 0, good_states = 0;
  const std::size_t no = m.trees.size();
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    std::size_t ok = 0;
    for (std::size_t o = 0; o < no; ++o) {
      bool v = m.trees[o].eval([&](std::size_t f) { return heldout.input(i, f); });
      ok += v == heldout.output(i, o);
    }
    good_bits += ok;
    good_states += ok == no;
  }
  double n = static_cast<double>(heldout.size());
  return {static_cast<double>(good_bits) / (n * static_cast<double>(no)), static_cast<double>(good_states) / n};
}

}  // namespace asc
