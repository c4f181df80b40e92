// One PASS/FAIL line per acceptance criterion. Pass criterion numbers as
// arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "asc/experiment.hpp"

using namespace asc;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::uint64_t> seeds(std::uint64_t from, std::uint64_t count) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < count; ++i) s.push_back(from + i);
  return s;
}

ExperimentConfig config(const std::string& kernel, KernelParams params = {}) {
  ExperimentConfig c;
  c.kernel = kernel;
  c.params = std::move(params);
  return c;
}

// Trained models are shared between criteria.
std::map<std::string, ModelSet> model_cache;
const ModelSet& model_for(const ExperimentConfig& c) {
  std::string key = c.kernel;
  for (const auto& [k, v] : c.params) key += " " + k + "=" + std::to_string(v);
  auto it = model_cache.find(key);
  if (it == model_cache.end()) it = model_cache.emplace(key, train_kernel(c).model).first;
  return it->second;
}

int shell(const std::string& cmd) {
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion1() {
  std::size_t cases = 0, bad = 0;
  std::string first;
  for (const auto& k : kernel_names()) {
    ExperimentConfig c = config(k);
    const ModelSet& m = model_for(c);
    for (const auto& v : validate(c, &m, seeds(10, 20), {0, 2, 8}, {0.25, 1.0})) {
      ++cases;
      if (!v.ok) {
        ++bad;
        if (first.empty()) first = v.kernel + " seed " + std::to_string(v.seed) + ": " + v.failure;
      }
    }
  }
  report(1, bad == 0 && cases == 9 * 20 * 3 * 2 * 2 * 2,
         std::to_string(cases) + " runs, " + std::to_string(bad) + " mismatches" + (first.empty() ? "" : "; " + first));
}

void criterion2() {
  ExperimentConfig c = config("readmap");
  c.oracle = true;
  c.test_seeds = seeds(10, 5);
  bool ok = true;
  std::string detail;
  auto check = [&](double e, std::vector<std::size_t> ns) {
    c.engine.efficiency = e;
    for (const auto& row : bench(c, nullptr, ns)) {
      double want = max_speedup(e, row.workers);
      bool good = row.validated && std::abs(row.speedup - want) <= 0.05 * want;
      ok = ok && good;
      detail += "e=" + fmt(e, 2) + ",n=" + std::to_string(row.workers) + ":" + fmt(row.speedup, 2) + "/" +
                fmt(want, 1) + " ";
    }
  };
  check(1.0, {1, 2, 4, 8});
  check(0.5, {2, 4, 8});
  report(2, ok, detail);
}

void criterion3() {
  bool ok = true;
  std::string detail;
  for (const char* k : {"readmap", "collatz", "3sum"}) {
    ExperimentConfig c = config(k);
    c.engine.efficiency = 0.5;
    const ModelSet& m = model_for(c);
    double prev = 0;
    detail += std::string(k) + ":";
    for (const auto& row : bench(c, &m, {2, 4, 8, 16})) {
      double floor = 0.6 * max_speedup(0.5, row.workers);
      ok = ok && row.validated && row.speedup > prev && row.speedup >= floor;
      prev = row.speedup;
      detail += " " + fmt(row.speedup, 2);
    }
    detail += "  ";
  }
  report(3, ok, detail);
}

void criterion4() {
  bool ok = true;
  std::string detail;
  auto rows = [&](const std::string& k) {
    ExperimentConfig c = config(k);
    c.engine.efficiency = 0.5;
    c.engine.dispatch_overhead = 100;
    c.engine.iterated_lookup = true;
    const ModelSet& m = model_for(c);
    return bench(c, &m, {4, 8});
  };
  // ising is left out: its list walk is not predictable across inputs, so
  // the trained model never hits and both sides are trivially 1.
  for (const char* k : {"readmap", "matmul"}) {
    for (const auto& r : rows(k)) {
      double rel = std::abs(r.speedup - r.hitrate_speedup_estimate) / r.speedup;
      ok = ok && r.validated && rel <= 0.15;
      detail += std::string(k) + " n=" + std::to_string(r.workers) + " " + fmt(r.speedup, 2) + " vs " +
                fmt(r.hitrate_speedup_estimate, 2) + "; ";
    }
  }
  for (const auto& r : rows("cov")) {
    ok = ok && r.validated && r.hitrate_speedup_estimate > r.speedup;
    detail += "cov n=" + std::to_string(r.workers) + " " + fmt(r.speedup, 2) + " < " + fmt(r.hitrate_speedup_estimate, 2) + "; ";
  }
  for (const auto& r : rows("3sum")) {
    ok = ok && r.validated && r.hitrate_speedup_estimate < r.speedup;
    detail += "3sum n=" + std::to_string(r.workers) + " " + fmt(r.speedup, 2) + " > " + fmt(r.hitrate_speedup_estimate, 2) + "; ";
  }
  report(4, ok, detail);
}

void criterion5() {
  bool ok = true;
  std::string detail;
  for (const char* k : {"matmul", "readmap", "collatz", "ising", "3sum"}) {
    const BitSchema& s = model_for(config(k)).schema;
    const double with = static_cast<double>(s.bits_with_tracking());
    const double without = static_cast<double>(s.bits_without_tracking);
    const double touched = static_cast<double>(s.touched_memory_bits);
    std::string name = k;
    if (name == "matmul") ok = ok && with <= 0.01 * touched;
    else if (name == "readmap") ok = ok && without >= 5 * with;
    else ok = ok && with == without;
    detail += name + " " + fmt(with, 0) + "/" + fmt(without, 0) + "/" + fmt(touched, 0) + "; ";
  }
  report(5, ok, detail + "(with/without tracking/touched memory bits)");
}

void criterion6() {
  ExperimentConfig base;
  auto rows = limits({"increment", "mulmod", "hash"}, {1, 2, 3, 5, 10}, base);
  std::map<std::string, std::map<std::size_t, double>> acc;
  for (const auto& r : rows) acc[r.variant][r.runs] = r.whole_state;
  auto first_perfect = [&](const std::string& v) {
    for (const auto& [runs, a] : acc[v])
      if (a == 1.0) return runs;
    return std::size_t{0};
  };
  std::size_t inc = first_perfect("increment"), mul = first_perfect("mulmod");
  double hash = acc["hash"][10];

  ExperimentConfig h = config("dependmap-hash");
  h.engine.efficiency = 0.5;
  h.test_seeds = seeds(10, 5);
  const ModelSet& m = model_for(h);
  BenchRow hb = bench(h, &m, {8}).front();

  bool ok = inc >= 1 && inc <= 3 && mul >= 1 && mul <= 10 && hash <= 0.05 && hb.speedup <= 1.05 && hb.validated;
  report(6, ok,
         "increment perfect at " + std::to_string(inc) + " runs, mulmod at " + std::to_string(mul) +
             ", hash accuracy " + fmt(hash) + " after 10, hash speedup " + fmt(hb.speedup));
}

void criterion7() {
  ExperimentConfig c = config("collatz");
  c.engine.efficiency = 0.5;
  const ModelSet& m = model_for(c);
  BenchRow r = bench(c, &m, {2}).front();
  report(7, r.reused_hits > 0 && r.validated,
         "reused hits " + std::to_string(r.reused_hits) + ", speedup " + fmt(r.speedup, 2) + " at n=2 (1+en = 2)");
}

void criterion8() {
  int rc = shell(std::string("\"") + ASC_TESTS_PATH + "\" -ts='property.*' > /dev/null 2>&1");
  report(8, rc == 0, "property suites exit " + std::to_string(rc));
}

void criterion9() {
  auto dir = std::filesystem::temp_directory_path() / "asc_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string cli = std::string("\"") + ASC_CLI_PATH + "\" ";
  const std::vector<std::pair<std::string, std::string>> jobs = {
      {"model", "train --kernel dependmap-increment --param n=128 --train-seeds 0,1,2 -o "},
      {"bench", "bench --kernel readmap --param n=120 --oracle --workers-list 2,4 --test-seeds 10,11 -o "},
      {"run", "run --kernel collatz --param count=12 --oracle -n 4 --seed 10 --trace "},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, args] : jobs) {
    for (int rep = 0; rep < 2; ++rep) {
      auto out = dir / (name + std::to_string(rep));
      ok = ok && shell(cli + args + out.string() + " > " + (dir / (name + "_stdout" + std::to_string(rep))).string()) == 0;
    }
    bool same = slurp(dir / (name + "0")) == slurp(dir / (name + "1")) &&
                slurp(dir / (name + "_stdout0")) == slurp(dir / (name + "_stdout1")) &&
                !slurp(dir / (name + "0")).empty();
    ok = ok && same;
    detail += name + (same ? " identical; " : " DIFFERS; ");
  }
  std::filesystem::remove_all(dir);
  report(9, ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  void (*all[])() = {criterion1, criterion2, criterion3, criterion4, criterion5,
                     criterion6, criterion7, criterion8, criterion9};
  for (int id = 1; id <= 9; ++id) {
    if (!only.empty() && !only.count(id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    try {
      all[id - 1]();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "  (criterion %d took %.1f s)\n", id, secs);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
