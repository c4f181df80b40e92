#include "asc/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "asc/error.hpp"
#include "asc/machine.hpp"

namespace asc {
namespace detail {
const std::map<std::string, std::string>& kernel_sources();
}

namespace {

constexpr std::uint64_t kNativeBudget = 2'000'000'000;

const std::string& source(const std::string& file) {
  const auto& all = detail::kernel_sources();
  auto it = all.find(file);
  if (it == all.end()) throw Error("kernel source '" + file + ".asm' was not embedded");
  return it->second;
}

void put64(std::vector<std::uint8_t>& buf, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Uniform in [lo, hi]; plain modulo keeps the stream identical across standard libraries.
std::int64_t draw(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

std::uint64_t modpow(std::uint64_t b, std::uint64_t e, std::uint64_t m) {
  std::uint64_t r = 1 % m;
  b %= m;
  while (e) {
    if (e & 1) r = r * b % m;
    b = b * b % m;
    e >>= 1;
  }
  return r;
}

using Vars = std::map<std::string, std::string>;

std::string num(std::int64_t v) { return std::to_string(v); }

struct Built {
  Vars vars;
  std::vector<std::uint8_t> input;
};

Built build_collatz(std::uint64_t seed, const KernelParams& p) {
  std::int64_t count = p.at("count");
  std::int64_t start = p.at("start") >= 0 ? p.at("start") : 2048 + count * static_cast<std::int64_t>(collatz_block(seed));
  if (count < 1 || start < 1) throw Error("collatz needs start >= 1 and count >= 1");
  Built b;
  b.input.resize(16);
  put64(b.input, 0, static_cast<std::uint64_t>(start));
  put64(b.input, 8, static_cast<std::uint64_t>(count));
  return b;
}

Built build_ising(std::uint64_t seed, const KernelParams& p) {
  std::int64_t n = p.at("nodes");
  if (n < 1) throw Error("ising needs at least one node");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 11);
  std::vector<std::int64_t> energy(n);
  for (auto& e : energy) e = draw(rng, -1'000'000, 1'000'000);
  // slot[k] holds list element order[k]
  std::vector<std::size_t> slot_of(n);
  std::iota(slot_of.begin(), slot_of.end(), 0);
  for (std::size_t i = slot_of.size(); i > 1; --i) std::swap(slot_of[i - 1], slot_of[rng() % i]);
  std::size_t input = 8 + 16 * n;
  Built b;
  b.input.resize(input);
  auto addr = [&](std::size_t idx) { return 8 + 16 * slot_of[idx]; };
  put64(b.input, 0, addr(0));
  for (std::int64_t i = 0; i < n; ++i) {
    put64(b.input, addr(i), static_cast<std::uint64_t>(energy[i]));
    put64(b.input, addr(i) + 8, i + 1 < n ? addr(i + 1) : 0);
  }
  b.vars = {{"MEM", num(input + 16)}, {"INPUT", num(input)}, {"OUT", num(input)}, {"OUT_INDEX", num(input + 8)}};
  return b;
}

Built build_threesum(std::uint64_t seed, const KernelParams& p) {
  std::int64_t n = p.at("n");
  std::int64_t range = p.at("range");
  if (n < 3) throw Error("threesum needs n >= 3");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 23);
  Built b;
  b.input.resize(8 * n);
  for (std::int64_t i = 0; i < n; ++i) put64(b.input, 8 * i, static_cast<std::uint64_t>(draw(rng, -range, range)));
  b.vars = {{"MEM", num(8 * n + 8)}, {"INPUT", num(8 * n)}, {"OUT", num(8 * n)}, {"END", num(8 * n)}};
  return b;
}

Built build_readmap(std::uint64_t seed, const KernelParams& p) {
  std::int64_t n = p.at("n");
  std::int64_t r = p.at("r");
  if (n < 1 || r < 1) throw Error("readmap needs n >= 1 and r >= 1");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 37);
  std::int64_t rnd = 8 * n, scratch = rnd + 8 * n * r, out = scratch + 8 * r;
  Built b;
  b.input.resize(scratch);
  for (std::int64_t i = 0; i < n + n * r; ++i) put64(b.input, 8 * i, static_cast<std::uint64_t>(draw(rng, 0, 999)));
  b.vars = {{"MEM", num(out + 8 * n)}, {"INPUT", num(scratch)}, {"RND", num(rnd)},     {"SCRATCH", num(scratch)},
            {"OUT", num(out)},         {"OUT_LEN", num(8 * n)}, {"R", num(r)},         {"ROW", num(8 * r)},
            {"END", num(8 * n)}};
  return b;
}

Built build_dependmap(const std::string& variant, std::uint64_t seed, const KernelParams& p) {
  std::int64_t n = p.at("n");
  if (n < 1) throw Error("dependmap needs n >= 1");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 41);
  std::uint64_t j0;
  std::string f;
  if (variant == "increment") {
    j0 = rng() % static_cast<std::uint64_t>(std::max<std::int64_t>(1, p.at("j0_range")));
    f = "  addi r0, r0, 1";
  } else if (variant == "mulmod") {
    std::int64_t p1 = p.at("p1"), p2 = p.at("p2");
    j0 = mulmod_start(seed, static_cast<std::uint64_t>(p1), static_cast<std::uint64_t>(p2));
    f = "  li r2, " + num(p1) + "\n  mul r0, r0, r2\n  li r2, " + num(p2) + "\n  mod r0, r0, r2";
  } else {
    j0 = rng();
    f = "  hash r0, r0";
  }
  Built b;
  b.input.resize(8);
  put64(b.input, 0, j0);
  b.vars = {{"MEM", num(8 + 8 * n)}, {"OUT_LEN", num(8 * n)}, {"END", num(8 * n)}, {"F", f}};
  return b;
}

Built build_matmul(std::uint64_t seed, const KernelParams& p) {
  std::int64_t n = p.at("n");
  if (n < 1) throw Error("matmul needs n >= 1");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 53);
  std::int64_t mat = 8 * n * n;
  Built b;
  b.input.resize(2 * mat);
  for (std::int64_t i = 0; i < 2 * n * n; ++i) put64(b.input, 8 * i, static_cast<std::uint64_t>(draw(rng, 0, 255)));
  b.vars = {{"MEM", num(3 * mat)}, {"INPUT", num(2 * mat)}, {"B", num(mat)},
            {"C", num(2 * mat)},   {"MAT", num(mat)},       {"ROW", num(8 * n)}};
  return b;
}

Built build_cov(std::uint64_t seed, const KernelParams& p) {
  std::int64_t cols = p.at("cols"), m = p.at("m");
  if (cols < 1 || m < 1) throw Error("cov needs cols >= 1 and m >= 1");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 67);
  std::int64_t data = 8 * cols * m;
  Built b;
  b.input.resize(data);
  for (std::int64_t i = 0; i < cols * m; ++i)
    put64(b.input, 8 * i, static_cast<std::uint64_t>(draw(rng, -128, 127) * 16));
  b.vars = {{"MEM", num(data + 8 * cols * cols)},
            {"INPUT", num(data)},
            {"DATA", num(data)},
            {"OUT", num(data)},
            {"OUT_LEN", num(8 * cols * cols)},
            {"COLS", num(cols)},
            {"ROW", num(8 * cols)}};
  return b;
}

std::vector<KernelSpec> make_specs() {
  std::vector<KernelSpec> s;
  s.push_back({"collatz", source("collatz"),
               "Collatz convergence over a block of consecutive start values",
               {{"count", 48}, {"start", -1}},
               "all written state is read first; dependency tracking changes nothing"});
  s.push_back({"ising", source("ising"), "minimum-energy scan over a seeded linked list",
               {{"nodes", 256}}, "no memory writes inside the loop"});
  s.push_back({"3sum", source("threesum"), "cubic scan counting zero-sum triples",
               {{"n", 40}, {"range", 2000}}, "the count is updated in place"});
  s.push_back({"readmap", source("readmap"), "adds R random values to each array entry through a scratch row",
               {{"n", 600}, {"r", 4}}, "output array and scratch row are written without being read"});
  const char* variants[] = {"increment", "mulmod", "hash"};
  for (const char* v : variants) {
    s.push_back({std::string("dependmap-") + v, source("dependmap"), std::string("A[i] = j; j = f(j) with f = ") + v,
                 {{"n", 1024}, {"p1", 1'000'003}, {"p2", 127}, {"j0_range", 1024}}, "A is written without being read"});
    // i and j move in lockstep, so splits on the other counter look almost as
    // good as the real carry chain; a wider tie band lets locality win.
    s.back().tie_tolerance = 0.5;
  }
  s.push_back({"matmul", source("matmul"), "fixed-point dense matrix product", {{"n", 20}},
               "each interval reads a row and a column but predicts only two registers"});
  s.push_back({"cov", source("cov"), "triangular column cross-products, shrinking intervals",
               {{"cols", 72}, {"m", 4}}, "each interval writes one row of S without reading it"});
  return s;
}

}  // namespace

std::uint64_t collatz_block(std::uint64_t seed) {
  if (seed < 10) return 3 * seed;
  std::uint64_t k = seed - 10;
  return k + k / 2 + 1;
}

std::uint64_t mulmod_start(std::uint64_t seed, std::uint64_t p1, std::uint64_t p2) {
  if (p2 < 3) throw Error("mulmod needs p2 >= 3");
  std::uint64_t g = p1 % p2;
  std::vector<bool> seen(p2, false);
  std::vector<std::uint64_t> reps;
  for (std::uint64_t x = 1; x < p2; ++x) {
    if (seen[x]) continue;
    reps.push_back(x);
    std::uint64_t y = x;
    do {
      seen[y] = true;
      y = y * g % p2;
    } while (y != x && !seen[y]);
  }
  std::uint64_t rep = reps[seed % reps.size()];
  return rep * modpow(g, seed / reps.size() * 7, p2) % p2;
}

const std::vector<KernelSpec>& kernel_specs() {
  static const std::vector<KernelSpec> specs = make_specs();
  return specs;
}

const KernelSpec& kernel_spec(const std::string& name) {
  for (const auto& k : kernel_specs())
    if (k.name == name) return k;
  throw Error("unknown kernel '" + name + "'");
}

std::vector<std::string> kernel_names() {
  std::vector<std::string> out;
  for (const auto& k : kernel_specs()) out.push_back(k.name);
  return out;
}

GeneratedKernel generate(const std::string& name, std::uint64_t seed, const KernelParams& params) {
  const KernelSpec& spec = kernel_spec(name);
  KernelParams p = spec.defaults;
  for (const auto& [k, v] : params) {
    if (!p.count(k)) throw Error("kernel '" + name + "' has no parameter '" + k + "'");
    p[k] = v;
  }
  Built b;
  if (name == "collatz") b = build_collatz(seed, p);
  else if (name == "ising") b = build_ising(seed, p);
  else if (name == "3sum") b = build_threesum(seed, p);
  else if (name == "readmap") b = build_readmap(seed, p);
  else if (name == "matmul") b = build_matmul(seed, p);
  else if (name == "cov") b = build_cov(seed, p);
  else b = build_dependmap(name.substr(name.find('-') + 1), seed, p);

  GeneratedKernel g;
  g.name = name;
  g.seed = seed;
  g.params = p;
  g.program = parse(expand_placeholders(spec.source, b.vars));
  g.input = std::move(b.input);
  return g;
}

NativeResult native_run(const Program& p, std::span<const std::uint8_t> input) {
  Vm vm(p.instructions, p.initial_state(input), false);
  RunResult r = vm.run(kNativeBudget);
  if (r.reason != StopReason::Halted) throw Error("native run did not halt within the instruction budget");
  return {p.output_bytes(vm.state()), r.steps};
}

}  // namespace asc
