#include "asc/experiment.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace asc {

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

RecognizerOptions recognizer_options(const ExperimentConfig& cfg) {
  const KernelSpec& spec = kernel_spec(cfg.kernel);
  RecognizerOptions o;
  o.threshold = cfg.threshold.value_or(spec.threshold);
  o.min_icount = cfg.min_icount.value_or(spec.min_icount);
  o.rip = cfg.rip;
  o.period = cfg.period;
  return o;
}

RipChoice recognize_kernel(const ExperimentConfig& cfg, std::uint64_t seed) {
  GeneratedKernel g = generate(cfg.kernel, seed, cfg.params);
  return recognize(g.program, g.initial_state(), recognizer_options(cfg));
}

TrainResult train_kernel(const ExperimentConfig& cfg) {
  if (cfg.train_seeds.empty()) throw Error("no training seeds");
  TrainResult r;
  r.choice = recognize_kernel(cfg, cfg.train_seeds.front());
  std::vector<StateVector> initials;
  Program program;
  for (auto s : cfg.train_seeds) {
    GeneratedKernel g = generate(cfg.kernel, s, cfg.params);
    initials.push_back(g.initial_state());
    program = std::move(g.program);
  }
  TrainingSet ts = collect(program, r.choice.rip, r.choice.period, initials);
  r.model = train(ts, cfg.max_depth, cfg.tie_tolerance.value_or(kernel_spec(cfg.kernel).tie_tolerance));
  r.training_accuracy = accuracy(r.model, ts);
  r.model.meta["kernel"] = cfg.kernel;
  r.model.meta["rip"] = std::to_string(r.choice.rip);
  r.model.meta["period"] = std::to_string(r.choice.period);
  r.model.meta["mean_interval"] = format_number(r.choice.mean_interval_icount);
  r.model.meta["training_rows"] = std::to_string(ts.size());
  std::string seeds;
  for (auto s : cfg.train_seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  r.model.meta["train_seeds"] = seeds;
  return r;
}

std::string schema_report_json(const std::string& kernel, const BitSchema& s) {
  nlohmann::json j = {{"format", "asc-schema-v1"},
                      {"kernel", kernel},
                      {"touched_memory_bits", s.touched_memory_bits},
                      {"bits_without_tracking", s.bits_without_tracking},
                      {"bits_with_tracking", s.bits_with_tracking()},
                      {"input_bits", s.input_bits.size()},
                      {"live_registers", s.live.to_string()}};
  return j.dump(2) + "\n";
}

namespace {

struct RipPeriod {
  std::uint32_t rip;
  std::uint64_t period;
};

RipPeriod resolve(const ExperimentConfig& cfg, const ModelSet* model) {
  if (model && model->meta.count("rip"))
    return {static_cast<std::uint32_t>(std::stoul(model->meta.at("rip"))), std::stoull(model->meta.at("period"))};
  if (cfg.rip) return {*cfg.rip, cfg.period.value_or(1)};
  RipChoice c = recognize_kernel(cfg, cfg.train_seeds.empty() ? 0 : cfg.train_seeds.front());
  return {c.rip, c.period};
}

}  // namespace

RunReport run_kernel(const ExperimentConfig& cfg, const ModelSet* model, std::uint64_t seed) {
  GeneratedKernel g = generate(cfg.kernel, seed, cfg.params);
  RipPeriod rp = resolve(cfg, model);
  EngineConfig ec = cfg.engine;
  ec.rip = rp.rip;
  ec.period = rp.period;
  StateVector initial = g.initial_state();
  if (cfg.oracle || !model) {
    OraclePredictor pred(g.program, initial, ec.rip, ec.period);
    return run(g.program, ec, pred, initial);
  }
  ModelPredictor pred(*model);
  return run(g.program, ec, pred, initial);
}

std::vector<BenchRow> bench(const ExperimentConfig& cfg, const ModelSet* model, const std::vector<std::size_t>& workers) {
  std::vector<BenchRow> rows;
  for (auto n : workers) {
    ExperimentConfig c = cfg;
    c.engine.workers = n;
    c.engine.record_trace = false;
    std::uint64_t native = 0, main = 0, hits = 0, lookups = 0, reused = 0;
    bool ok = true;
    for (auto s : cfg.test_seeds) {
      RunReport r = run_kernel(c, model, s);
      native += r.native_icount;
      main += r.main_icount;
      hits += r.hits;
      lookups += r.hits + r.misses;
      reused += r.reused_hits;
      ok = ok && r.validated;
    }
    BenchRow row;
    row.workers = n;
    row.speedup = main ? static_cast<double>(native) / static_cast<double>(main) : 1.0;
    row.hit_rate = lookups ? static_cast<double>(hits) / static_cast<double>(lookups) : 0.0;
    row.max_speedup = max_speedup(cfg.engine.efficiency, n);
    row.hitrate_speedup_estimate = hitrate_speedup_estimate(row.hit_rate);
    row.reused_hits = reused;
    row.validated = ok;
    rows.push_back(row);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << kCsvVersion << "\nworkers,speedup,hit_rate,max_speedup,hitrate_speedup_estimate,reused_hits,validated\n";
  for (const auto& r : rows)
    out << r.workers << ',' << format_number(r.speedup) << ',' << format_number(r.hit_rate) << ','
        << format_number(r.max_speedup) << ',' << format_number(r.hitrate_speedup_estimate) << ',' << r.reused_hits
        << ',' << (r.validated ? "true" : "false") << '\n';
  return out.str();
}

std::vector<LimitsRow> limits(const std::vector<std::string>& variants, const std::vector<std::size_t>& runs,
                              const ExperimentConfig& base) {
  std::vector<LimitsRow> rows;
  for (const auto& v : variants) {
    ExperimentConfig cfg = base;
    cfg.kernel = v.rfind("dependmap-", 0) == 0 ? v : "dependmap-" + v;
    RipChoice choice = recognize_kernel(cfg, cfg.train_seeds.empty() ? 0 : cfg.train_seeds.front());
    std::vector<StateVector> tests;
    Program program;
    for (auto s : cfg.test_seeds) {
      GeneratedKernel g = generate(cfg.kernel, s, cfg.params);
      tests.push_back(g.initial_state());
      program = std::move(g.program);
    }
    for (auto k : runs) {
      if (k == 0 || k > cfg.train_seeds.size()) throw Error("training run count out of range");
      std::vector<StateVector> train_init;
      for (std::size_t i = 0; i < k; ++i)
        train_init.push_back(generate(cfg.kernel, cfg.train_seeds[i], cfg.params).initial_state());
      TrainingSet ts = collect(program, choice.rip, choice.period, train_init);
      ModelSet m = train(ts, cfg.max_depth, cfg.tie_tolerance.value_or(kernel_spec(cfg.kernel).tie_tolerance));
      TrainingSet held = project(program, choice.rip, choice.period, tests, ts.schema());
      Accuracy a = accuracy(m, held);
      rows.push_back({cfg.kernel.substr(10), k, a.per_bit, a.whole_state});
    }
  }
  return rows;
}

std::string limits_csv(const std::vector<LimitsRow>& rows) {
  std::ostringstream out;
  out << kCsvVersion << "\nf,runs,per_bit_accuracy,whole_state_accuracy\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.runs << ',' << format_number(r.per_bit) << ',' << format_number(r.whole_state)
        << '\n';
  return out.str();
}

std::vector<ValidationCase> validate(const ExperimentConfig& cfg, const ModelSet* model,
                                     const std::vector<std::uint64_t>& seeds, const std::vector<std::size_t>& workers,
                                     const std::vector<double>& efficiencies) {
  std::vector<ValidationCase> out;
  std::vector<bool> modes = {true};
  if (model) modes.insert(modes.begin(), false);
  for (auto s : seeds)
    for (auto n : workers)
      for (auto e : efficiencies)
        for (bool oracle : modes)
          for (bool iterated : {false, true}) {
            ExperimentConfig c = cfg;
            c.engine.workers = n;
            c.engine.efficiency = e;
            c.engine.iterated_lookup = iterated;
            c.engine.record_trace = false;
            c.oracle = oracle;
            ValidationCase vc{cfg.kernel, s, n, e, oracle, iterated, false, ""};
            try {
              RunReport r = run_kernel(c, model, s);
              NativeResult nat;
              {
                GeneratedKernel g = generate(cfg.kernel, s, cfg.params);
                nat = native_run(g.program, g.input);
              }
              vc.ok = r.validated && r.output == nat.output && r.native_icount == nat.icount;
              if (!vc.ok) vc.failure = !r.failure.empty() ? r.failure : "output differs from an independent native run";
            } catch (const std::exception& ex) {
              vc.failure = ex.what();
            }
            out.push_back(std::move(vc));
          }
  return out;
}

std::string validation_csv(const std::vector<ValidationCase>& cases) {
  std::ostringstream out;
  out << kCsvVersion << "\nkernel,seed,workers,efficiency,predictor,iterated_lookup,status,failure\n";
  for (const auto& c : cases)
    out << c.kernel << ',' << c.seed << ',' << c.workers << ',' << format_number(c.efficiency) << ','
        << (c.oracle ? "oracle" : "model") << ',' << (c.iterated ? "true" : "false") << ','
        << (c.ok ? "OK" : "FAILED") << ',' << c.failure << '\n';
  return out.str();
}

}  // namespace asc
