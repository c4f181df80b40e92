// asc: recognize, train, run, bench, limits and validate from the command line.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "asc/experiment.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

struct Options {
  asc::ExperimentConfig cfg;
  std::uint64_t seed = 10;
  std::vector<std::string> params;
  std::string model_path;
  std::string out_path;
  std::string trace_path;
  std::string schema_path;
  std::string asm_path;
  std::string mode = "virtual_time";
  std::vector<std::size_t> worker_list = {1, 2, 4, 8, 16};
  std::vector<std::string> variants = {"increment", "mulmod", "hash"};
  std::vector<std::size_t> runs = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> efficiencies = {0.25, 1.0};
  std::uint32_t rip = 0;
  std::uint64_t period = 0;
  std::uint64_t threshold = 0;
  std::uint64_t min_icount = 0;
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw asc::Error("cannot write " + path);
  f << text;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw asc::Error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void add_kernel(CLI::App* c, Options& o, bool required = true) {
  auto* k = c->add_option("-k,--kernel", o.cfg.kernel, "kernel name")->check(CLI::IsMember(asc::kernel_names()));
  if (required) k->required();
  c->add_option("--param", o.params, "kernel parameter NAME=VALUE (repeatable)");
}

void add_recognizer(CLI::App* c, Options& o) {
  c->add_option("--rip", o.rip, "override the recognized instruction pointer");
  c->add_option("--period", o.period, "override the period");
  c->add_option("--threshold", o.threshold, "minimum executions of a candidate");
  c->add_option("--min-icount", o.min_icount, "instructions per effective breakpoint for period selection");
}

void add_engine(CLI::App* c, Options& o) {
  auto& e = o.cfg.engine;
  c->add_option("-n,--workers", e.workers, "speculative workers");
  c->add_option("-e,--efficiency", e.efficiency, "worker efficiency in (0,1]");
  c->add_option("--lookahead", e.lookahead, "N-th unmarked timestep to assign (0 = ceil(1/e)+1)");
  c->add_option("--table-size", e.timestep_table_size, "timestep table slots (power of two)");
  c->add_option("--stitch-budget", e.stitch_budget, "stitch checks per breakpoint");
  c->add_flag("--iterated-lookup", e.iterated_lookup, "repeat lookups until a miss instead of stitching");
  c->add_option("--mode", o.mode, "virtual_time or eager")->check(CLI::IsMember({"virtual_time", "eager"}));
  c->add_option("--dispatch-overhead", e.dispatch_overhead, "virtual instructions charged per speculation");
  c->add_option("--speculation-cap", e.speculation_cap, "instruction cap per speculation (0 = derived)");
  c->add_option("--max-cache-entries", e.max_cache_entries, "cache capacity (0 = unbounded)");
  c->add_flag("--oracle", o.cfg.oracle, "predict with true future states instead of a model");
  c->add_option("--model", o.model_path, "model file from `asc train`");
}


void finish_config(Options& o) {
  for (const auto& kv : o.params) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--param", "expected NAME=VALUE, got '" + kv + "'");
    o.cfg.params[kv.substr(0, eq)] = std::stoll(kv.substr(eq + 1));
  }
  if (o.rip) o.cfg.rip = o.rip;
  if (o.period) o.cfg.period = o.period;
  if (o.threshold) o.cfg.threshold = o.threshold;
  if (o.min_icount) o.cfg.min_icount = o.min_icount;
  o.cfg.engine.mode = asc::engine_mode_from_string(o.mode);
}

std::optional<asc::ModelSet> load_model(const Options& o) {
  if (o.model_path.empty()) return std::nullopt;
  return asc::ModelSet::from_json(slurp(o.model_path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automatically scalable computation on a small register machine"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key = value file");
  Options o;

  auto* rec = app.add_subcommand("recognize", "pick the breakpoint ip and period");
  add_kernel(rec, o, false);
  rec->add_option("--seed", o.seed, "input seed");
  rec->add_option("--asm", o.asm_path, "recognize an assembly file instead of a kernel (zero input)");
  add_recognizer(rec, o);
  rec->add_option("-o,--out", o.out_path, "report file (default stdout)");

  auto* tr = app.add_subcommand("train", "fit prediction trees on training seeds");
  add_kernel(tr, o);
  tr->add_option("--train-seeds", o.cfg.train_seeds, "training seeds")->delimiter(',');
  tr->add_option("--max-depth", o.cfg.max_depth, "tree depth limit");
  tr->add_option("--tie-tolerance", o.cfg.tie_tolerance, "relative Gini slack treated as a tie");
  add_recognizer(tr, o);
  tr->add_option("-o,--out", o.out_path, "model file (default stdout)");
  tr->add_option("--schema-report", o.schema_path, "write the schema-size report here");

  auto* rn = app.add_subcommand("run", "run one input under the engine");
  add_kernel(rn, o);
  rn->add_option("--seed", o.seed, "input seed");
  add_engine(rn, o);
  add_recognizer(rn, o);
  rn->add_option("-o,--out", o.out_path, "report file (default stdout)");
  rn->add_option("--trace", o.trace_path, "per-event trace CSV");

  auto* bn = app.add_subcommand("bench", "speedup against worker count");
  add_kernel(bn, o);
  bn->add_option("--workers-list", o.worker_list, "worker counts")->delimiter(',');
  bn->add_option("--test-seeds", o.cfg.test_seeds, "test seeds")->delimiter(',');
  add_engine(bn, o);
  add_recognizer(bn, o);
  bn->add_option("-o,--out", o.out_path, "CSV file (default stdout)");

  auto* lm = app.add_subcommand("limits", "dependmap prediction accuracy against training runs");
  lm->add_option("--variants", o.variants, "f variants")->delimiter(',');
  lm->add_option("--runs", o.runs, "training run counts")->delimiter(',');
  lm->add_option("--train-seeds", o.cfg.train_seeds, "training seeds")->delimiter(',');
  lm->add_option("--test-seeds", o.cfg.test_seeds, "test seeds")->delimiter(',');
  lm->add_option("--tie-tolerance", o.cfg.tie_tolerance, "relative Gini slack treated as a tie");
  lm->add_option("--param", o.params, "kernel parameter NAME=VALUE (repeatable)");
  lm->add_option("-o,--out", o.out_path, "CSV file (default stdout)");

  auto* va = app.add_subcommand("validate", "compare engine output with native runs");
  add_kernel(va, o);
  va->add_option("--test-seeds", o.cfg.test_seeds, "seeds")->delimiter(',');
  va->add_option("--workers-list", o.worker_list, "worker counts")->delimiter(',');
  va->add_option("--efficiencies", o.efficiencies, "efficiencies")->delimiter(',');
  add_engine(va, o);
  add_recognizer(va, o);
  va->add_option("-o,--out", o.out_path, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    finish_config(o);
    auto& cfg = o.cfg;

    if (rec->parsed()) {
      asc::RipChoice c;
      if (!o.asm_path.empty()) {
        asc::Program p = asc::parse(slurp(o.asm_path));
        asc::RecognizerOptions ro;
        if (o.threshold) ro.threshold = o.threshold;
        if (o.min_icount) ro.min_icount = o.min_icount;
        ro.rip = cfg.rip;
        ro.period = cfg.period;
        c = asc::recognize(p, p.initial_state({}), ro);
      } else {
        if (cfg.kernel.empty()) throw CLI::ValidationError("recognize", "--kernel or --asm is required");
        c = asc::recognize_kernel(cfg, o.seed);
      }
      emit(o.out_path, asc::recognition_report(c));
      return 0;
    }
    if (tr->parsed()) {
      if (cfg.train_seeds.empty()) throw CLI::ValidationError("--train-seeds", "at least one seed is required");
      asc::TrainResult r = asc::train_kernel(cfg);
      emit(o.out_path, r.model.to_json());
      if (!o.schema_path.empty()) emit(o.schema_path, asc::schema_report_json(cfg.kernel, r.model.schema));
      std::cerr << "trained " << r.model.trees.size() << " trees; training accuracy per bit "
                << asc::format_number(r.training_accuracy.per_bit) << ", whole state "
                << asc::format_number(r.training_accuracy.whole_state) << "\n";
      return 0;
    }
    auto model = load_model(o);
    if ((rn->parsed() || bn->parsed()) && !model && !cfg.oracle)
      throw CLI::ValidationError("--model", "either --model or --oracle is required");
    if (rn->parsed()) {
      cfg.engine.record_trace = !o.trace_path.empty();
      asc::RunReport r = asc::run_kernel(cfg, model ? &*model : nullptr, o.seed);
      emit(o.out_path, r.to_json());
      if (!o.trace_path.empty()) emit(o.trace_path, r.trace_csv());
      if (!r.validated) {
        std::cerr << "FAILED: " << r.failure << "\n";
        return kExitValidation;
      }
      return 0;
    }
    if (bn->parsed()) {
      auto rows = asc::bench(cfg, model ? &*model : nullptr, o.worker_list);
      emit(o.out_path, asc::bench_csv(rows));
      for (const auto& r : rows)
        if (!r.validated) return kExitValidation;
      return 0;
    }
    if (lm->parsed()) {
      emit(o.out_path, asc::limits_csv(asc::limits(o.variants, o.runs, cfg)));
      return 0;
    }
    if (va->parsed()) {
      auto cases = asc::validate(cfg, model ? &*model : nullptr, cfg.test_seeds, o.worker_list, o.efficiencies);
      emit(o.out_path, asc::validation_csv(cases));
      for (const auto& c : cases)
        if (!c.ok) return kExitValidation;
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const asc::RecognitionError& e) {
    std::cerr << "recognition failed: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
