// concon: generate, analyze, verify, train and report on confounded
// continual-learning scene datasets.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "concon/dataset.hpp"
#include "concon/error.hpp"
#include "concon/experiment.hpp"
#include "concon/hypothesis.hpp"
#include "concon/learner.hpp"
#include "concon/task.hpp"

namespace fs = std::filesystem;
using namespace concon;

namespace {

constexpr int kFastEpochs = 10;

struct TrainFlags {
  TrainConfig config;
  bool fast = false;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--epochs", config.epochs, "training epochs per task")->check(CLI::PositiveNumber);
    cmd.add_option("--lr", config.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    cmd.add_option("--batch", config.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
    cmd.add_option("--buffer", config.buffer_size, "replay buffer capacity")->check(CLI::PositiveNumber);
    cmd.add_option("--ewc-lambda", config.ewc_lambda, "EWC penalty weight")->check(CLI::NonNegativeNumber);
    cmd.add_option("--der-alpha", config.der_alpha, "DER distillation weight")->check(CLI::NonNegativeNumber);
    cmd.add_flag("--fast", fast, "10 epochs per task (overrides --epochs)");
  }

  TrainConfig resolved() const {
    TrainConfig c = config;
    if (fast) c.epochs = kFastEpochs;
    return c;
  }
};

std::vector<std::string> regime_names() {
  std::vector<std::string> names;
  for (Regime r : all_regimes()) names.emplace_back(to_string(r));
  return names;
}

void print_diagnostics(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) {
    std::cerr << (d.severity == Diagnostic::Severity::error ? "error" : "warning") << '[' << d.code
              << "]: " << d.message << '\n';
  }
}

// Validation problems are reported one per line before failing.
RuleSpec load_valid_spec(const fs::path& path) {
  RuleSpec spec = load_rule_spec(path);
  const auto diags = validate(spec);
  print_diagnostics(diags);
  if (has_errors(diags)) throw Error("validation", "rule spec " + path.string() + " is not generable");
  return spec;
}

void print_manifest(const DatasetManifest& m, const fs::path& out) {
  std::cout << "wrote " << m.total_scenes() << " scenes (" << m.task_count << " confounded tasks + unconfounded) to "
            << out.string() << "\ncontent digest " << m.content_digest << '\n';
}

int run_generate(const fs::path& spec_path, const fs::path& out, const GenerateOptions& options) {
  const RuleSpec spec = load_valid_spec(spec_path);
  print_manifest(generate(spec, options, out), out);
  return 0;
}

int run_verify(const fs::path& data) {
  const VerifyReport report = verify(data);
  for (const auto& v : report.violations) {
    std::cerr << "violation: " << v.file.string();
    for (const auto& r : v.reasons) std::cerr << "; " << r;
    std::cerr << '\n';
  }
  std::cout << report.files_checked << " files checked, " << report.violations.size() << " violations\n";
  return report.ok() ? 0 : 1;
}

int run_analyze(const fs::path& spec_path, const HypothesisLanguage& lang, const std::string& mode_name,
                const fs::path& data_dir, const fs::path& out) {
  const RuleSpec spec = load_valid_spec(spec_path);
  const ConsistencyMode mode = parse_consistency_mode(mode_name);
  std::optional<Dataset> data;
  if (!data_dir.empty()) data = load_dataset(data_dir);
  const AnalysisReport report = analyze(spec, lang, mode, data ? &*data : nullptr);
  const std::string text = format_report(report);
  std::ofstream file(out, std::ios::binary);
  if (!file || !(file << text)) throw Error("io", "cannot write " + out.string());
  for (const auto& c : report.bound_checks) {
    std::cout << c.name << " " << c.text << ": " << (c.jointly_consistent ? "consistent" : "inconsistent")
              << " with all tasks, " << (c.within_bounds ? "within" : "outside") << " joint bounds\n";
  }
  std::cout << report.joint.size() << " jointly consistent hypotheses; report written to " << out.string() << '\n';
  return 0;
}

int run_train(const fs::path& data_dir, const std::string& method, std::uint64_t seed, TrainConfig config,
              const fs::path& out) {
  config.seed = seed;
  const Dataset data = load_dataset(data_dir);
  const Regime regime = parse_regime(method);
  const RunResult run = run_regime(regime, data, config);
  save_run(run, seed, config, data, out);
  const RunMetrics m = evaluate_run(regime, seed, run.checkpoints, data);
  for (int t = 1; t <= m.task_count(); ++t) std::printf("T_%d: %.4f\n", t, m.current(t).overall);
  for (int t = 1; t < m.task_count(); ++t) std::printf("T_%d@T_%d: %.4f\n", t, m.task_count(), m.final_on(t).overall);
  std::printf("unconf: %.4f\n", m.unconfounded.overall);
  return 0;
}

fs::path dataset_of_runs(const fs::path& runs) {
  for (const auto& e : fs::recursive_directory_iterator(runs)) {
    if (!e.is_regular_file() || e.path().filename() != "run.json") continue;
    std::ifstream in(e.path());
    const auto meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_object() && meta.contains("dataset")) return meta["dataset"].get<std::string>();
  }
  throw Error("precondition", "no dataset recorded under " + runs.string() + "; pass --data");
}

int run_report(const fs::path& runs, const std::string& format, fs::path data_dir, fs::path out) {
  if (!fs::is_directory(runs)) throw Error("io", "no runs directory " + runs.string());
  if (data_dir.empty()) data_dir = dataset_of_runs(runs);
  if (out.empty()) out = runs;
  const Dataset data = load_dataset(data_dir);
  const EvalReport report = evaluate_saved_runs(runs, data);
  const ReportFormat f = parse_report_format(format);
  const fs::path path = emit_report(report, f, out);
  std::cout << (f == ReportFormat::markdown ? format_markdown(report) : format_csv(report));
  std::cerr << "report written to " << path.string() << '\n';
  return 0;
}

int run_experiment_cmd(const fs::path& spec_path, const GenerateOptions& options, const std::vector<std::string>& methods,
                       const std::vector<std::uint64_t>& seeds, const TrainConfig& config, const fs::path& out) {
  const RuleSpec spec = load_valid_spec(spec_path);
  const fs::path data_dir = out / "data";
  print_manifest(generate(spec, options, data_dir), data_dir);
  const Dataset data = load_dataset(data_dir);

  ExperimentConfig ec;
  for (const auto& m : methods) ec.regimes.push_back(parse_regime(m));
  ec.seeds = seeds;
  ec.train = config;
  const EvalReport report = run_experiment(data, ec, out / "runs");
  emit_report(report, ReportFormat::csv, out);
  emit_report(report, ReportFormat::markdown, out);
  std::cout << format_markdown(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confounded continual-learning scene benchmark"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  const auto regimes = regime_names();

  // generate
  auto* gen = app.add_subcommand("generate", "sample a dataset tree from a rule spec");
  fs::path gen_spec, gen_out;
  GenerateOptions gen_opts;
  std::string gen_mode = "uniform";
  gen->add_option("--spec", gen_spec, "rule-spec file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_opts.seed, "dataset seed");
  gen->add_option("--mode", gen_mode, "sampling mode")->check(CLI::IsMember({"uniform", "slot"}));
  gen->add_flag("--render", gen_opts.render, "also write a PNG per scene");
  gen->add_flag("--dedup", gen_opts.dedup, "drop repeated scenes within the run");

  // analyze
  auto* ana = app.add_subcommand("analyze", "enumerate hypotheses consistent with the tasks");
  fs::path ana_spec, ana_data, ana_out = "analysis.txt";
  HypothesisLanguage lang;
  std::string ana_mode = "exact";
  ana->add_option("--spec", ana_spec, "rule-spec file")->required()->check(CLI::ExistingFile);
  ana->add_option("--max-atoms", lang.max_atoms, "atoms per hypothesis")->check(CLI::Range(1, 4));
  ana->add_option("--max-literals", lang.max_literals_per_atom, "attribute literals per atom")->check(CLI::Range(1, 4));
  ana->add_option("--mode", ana_mode, "consistency mode")->check(CLI::IsMember({"exact", "empirical"}));
  ana->add_option("--data", ana_data, "dataset directory (empirical mode)");
  ana->add_option("--out", ana_out, "report file");

  // verify
  auto* ver = app.add_subcommand("verify", "re-check every scene file of a dataset");
  fs::path ver_data;
  ver->add_option("--data", ver_data, "dataset directory")->required();

  // train
  auto* trn = app.add_subcommand("train", "train one regime and save its checkpoints");
  fs::path trn_data, trn_out = "runs";
  std::string trn_method = "naive";
  std::uint64_t trn_seed = 0;
  TrainFlags trn_flags;
  trn->add_option("--data", trn_data, "dataset directory")->required();
  trn->add_option("--method", trn_method, "training regime")->check(CLI::IsMember(regimes));
  trn->add_option("--seed", trn_seed, "training seed");
  trn->add_option("--out", trn_out, "runs directory");
  trn_flags.add_to(*trn);

  // report
  auto* rep = app.add_subcommand("report", "evaluate saved runs and print a table");
  fs::path rep_runs, rep_data, rep_out;
  std::string rep_format = "md";
  rep->add_option("--runs", rep_runs, "runs directory")->required();
  rep->add_option("--format", rep_format, "output format")->check(CLI::IsMember({"md", "csv"}));
  rep->add_option("--data", rep_data, "dataset directory (default: the one recorded with the runs)");
  rep->add_option("--out", rep_out, "directory for the report file (default: the runs directory)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "generate, train every regime and seed, and report");
  fs::path exp_spec, exp_out;
  GenerateOptions exp_opts;
  std::string exp_mode = "uniform";
  std::vector<std::string> exp_methods{"naive", "joint", "cumulative", "shuffled", "er", "der", "ewc", "gdumb", "bgs"};
  std::vector<std::uint64_t> exp_seeds{0, 1, 2, 3, 4};
  TrainFlags exp_flags;
  exp->add_option("--spec", exp_spec, "rule-spec file")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", exp_out, "output directory")->required();
  exp->add_option("--data-seed", exp_opts.seed, "dataset seed");
  exp->add_option("--mode", exp_mode, "sampling mode")->check(CLI::IsMember({"uniform", "slot"}));
  exp->add_option("--methods", exp_methods, "training regimes")->check(CLI::IsMember(regimes))->delimiter(',');
  exp->add_option("--seeds", exp_seeds, "training seeds")->delimiter(',');
  exp_flags.add_to(*exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      gen_opts.mode = parse_sampling_mode(gen_mode);
      return run_generate(gen_spec, gen_out, gen_opts);
    }
    if (*ana) return run_analyze(ana_spec, lang, ana_mode, ana_data, ana_out);
    if (*ver) return run_verify(ver_data);
    if (*trn) return run_train(trn_data, trn_method, trn_seed, trn_flags.resolved(), trn_out);
    if (*rep) return run_report(rep_runs, rep_format, rep_data, rep_out);
    if (*exp) {
      exp_opts.mode = parse_sampling_mode(exp_mode);
      return run_experiment_cmd(exp_spec, exp_opts, exp_methods, exp_seeds, exp_flags.resolved(), exp_out);
    }
  } catch (const Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
