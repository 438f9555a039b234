#include "concon/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "concon/digest.hpp"
#include "concon/error.hpp"

namespace concon {
namespace fs = std::filesystem;
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string percent(const Summary& s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

std::string dataset_digest(const Dataset& data) {
  if (!data.manifest.content_digest.empty()) return data.manifest.content_digest;
  return sha256_hex(data.manifest.spec_digest + "/" + std::to_string(data.manifest.seed) + "/" +
                    std::string(to_string(data.manifest.mode)));
}

nlohmann::ordered_json config_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["buffer_size"] = c.buffer_size;
  j["ewc_lambda"] = c.ewc_lambda;
  j["der_alpha"] = c.der_alpha;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.buffer_size = j.at("buffer_size").get<int>();
  c.ewc_lambda = j.at("ewc_lambda").get<double>();
  c.der_alpha = j.at("der_alpha").get<double>();
  return c;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("io", "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text)) throw Error("io", "cannot write " + p.string());
}

}  // namespace

Accuracy RunMetrics::current(int t) const {
  const std::size_t row = matrix.size() == 1 ? 0 : static_cast<std::size_t>(t - 1);
  return matrix.at(row).at(static_cast<std::size_t>(t - 1));
}

Accuracy RunMetrics::final_on(int t) const { return matrix.back().at(static_cast<std::size_t>(t - 1)); }

double RunMetrics::average() const {
  double sum = 0.0;
  for (int t = 1; t <= task_count(); ++t) sum += final_on(t).overall;
  return sum / task_count();
}

std::vector<std::pair<std::string, double>> RunMetrics::metrics() const {
  const int T = task_count();
  const std::string last = "T" + std::to_string(T);
  std::vector<std::pair<std::string, double>> m;
  for (int t = 1; t <= T; ++t) {
    const auto a = current(t);
    const std::string name = "current/T" + std::to_string(t);
    m.emplace_back(name, a.overall);
    m.emplace_back(name + "/pos", a.positive);
    m.emplace_back(name + "/neg", a.negative);
  }
  for (int t = 1; t < T; ++t) m.emplace_back("old/T" + std::to_string(t) + "@" + last, final_on(t).overall);
  m.emplace_back("unconf", unconfounded.overall);
  m.emplace_back("unconf/pos", unconfounded.positive);
  m.emplace_back("unconf/neg", unconfounded.negative);
  m.emplace_back("average", average());
  for (std::size_t c = 0; c < matrix.size(); ++c) {
    for (int t = 1; t <= T; ++t) {
      m.emplace_back("matrix/C" + std::to_string(c + 1) + "/T" + std::to_string(t), matrix[c][t - 1].overall);
    }
  }
  return m;
}

RunMetrics evaluate_run(Regime regime, std::uint64_t seed, std::span<const Checkpoint> checkpoints,
                        const Dataset& data) {
  if (checkpoints.empty()) throw Error("precondition", "run has no checkpoints");
  const int T = data.task_count();
  std::vector<std::vector<Example>> test(T + 1);
  for (int t = 0; t <= T; ++t) test[t] = examples(data.subset(t, Split::test));

  RunMetrics r;
  r.regime = regime;
  r.seed = seed;
  for (const auto& c : checkpoints) {
    const Model model(c.params);
    auto& row = r.matrix.emplace_back();
    for (int t = 1; t <= T; ++t) row.push_back(evaluate(model, test[t]));
  }
  r.unconfounded = evaluate(Model(checkpoints.back().params), test[0]);
  return r;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  // Welford: identical values give exactly zero spread.
  double ss = 0.0;
  std::size_t k = 0;
  for (double v : values) {
    ++k;
    const double d = v - s.mean;
    s.mean += d / static_cast<double>(k);
    ss += d * (v - s.mean);
  }
  if (values.size() > 1) s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

Summary EvalReport::aggregate(Regime regime, const std::string& metric) const {
  std::vector<double> values;
  for (const auto& run : runs) {
    if (run.regime != regime) continue;
    for (const auto& [name, v] : run.metrics()) {
      if (name == metric) values.push_back(v);
    }
  }
  return summarize(values);
}

std::string config_digest(const ExperimentConfig& config) {
  nlohmann::ordered_json j;
  j["train"] = config_json(config.train);
  j["seeds"] = config.seeds;
  return sha256_hex(j.dump()).substr(0, 12);
}

EvalReport run_experiment(const Dataset& data, const ExperimentConfig& config, const fs::path& runs_dir) {
  if (config.regimes.empty()) throw Error("precondition", "no regimes requested");
  if (config.seeds.empty()) throw Error("precondition", "no seeds requested");
  check_config(config.train);

  EvalReport report;
  report.task_count = data.task_count();
  report.dataset_digest = dataset_digest(data).substr(0, 12);
  report.config_digest = config_digest(config);
  report.regimes = config.regimes;
  for (Regime regime : config.regimes) {
    for (std::uint64_t seed : config.seeds) {
      TrainConfig tc = config.train;
      tc.seed = seed;
      const RunResult run = run_regime(regime, data, tc);
      if (!runs_dir.empty()) save_run(run, seed, tc, data, runs_dir);
      report.runs.push_back(evaluate_run(regime, seed, run.checkpoints, data));
    }
  }
  return report;
}

void save_run(const RunResult& run, std::uint64_t seed, const TrainConfig& config, const Dataset& data,
              const fs::path& runs_dir) {
  const fs::path dir = runs_dir / std::string(to_string(run.regime)) / ("seed" + std::to_string(seed));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("io", "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t k = 0; k < run.checkpoints.size(); ++k) {
    save_checkpoint(run.checkpoints[k], dir / ("checkpoint_" + std::to_string(k + 1) + ".bin"));
  }
  std::string log;
  for (const auto& r : run.log) log += log_line(r) + "\n";
  write_text(dir / "log.jsonl", log);

  nlohmann::ordered_json meta;
  meta["regime"] = std::string(to_string(run.regime));
  meta["seed"] = seed;
  meta["checkpoints"] = run.checkpoints.size();
  meta["config"] = config_json(config);
  meta["dataset_digest"] = dataset_digest(data);
  if (!data.root.empty()) meta["dataset"] = fs::absolute(data.root).string();
  write_text(dir / "run.json", meta.dump(2) + "\n");
}

EvalReport evaluate_saved_runs(const fs::path& runs_dir, const Dataset& data) {
  if (!fs::is_directory(runs_dir)) throw Error("io", "no runs directory " + runs_dir.string());
  std::vector<fs::path> metas;
  for (const auto& e : fs::recursive_directory_iterator(runs_dir)) {
    if (e.is_regular_file() && e.path().filename() == "run.json") metas.push_back(e.path());
  }
  if (metas.empty()) throw Error("precondition", "no saved runs under " + runs_dir.string());

  struct Loaded {
    Regime regime;
    std::uint64_t seed;
    RunMetrics metrics;
  };
  std::vector<Loaded> loaded;
  ExperimentConfig config;
  for (const auto& meta_path : metas) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(read_text(meta_path));
    } catch (const nlohmann::json::exception& e) {
      throw Error("format", meta_path.string() + ": " + e.what());
    }
    const Regime regime = parse_regime(meta.at("regime").get<std::string>());
    const auto seed = meta.at("seed").get<std::uint64_t>();
    const auto n = meta.at("checkpoints").get<std::size_t>();
    if (meta.at("dataset_digest").get<std::string>() != dataset_digest(data)) {
      throw Error("precondition", meta_path.string() + " was trained on a different dataset");
    }
    config.train = config_from_json(meta.at("config"));
    std::vector<Checkpoint> checkpoints;
    for (std::size_t k = 1; k <= n; ++k) {
      checkpoints.push_back(load_checkpoint(meta_path.parent_path() / ("checkpoint_" + std::to_string(k) + ".bin")));
    }
    loaded.push_back({regime, seed, evaluate_run(regime, seed, checkpoints, data)});
  }
  // Regime order as in all_regimes(), then seed.
  std::sort(loaded.begin(), loaded.end(), [](const Loaded& a, const Loaded& b) {
    return std::pair(static_cast<int>(a.regime), a.seed) < std::pair(static_cast<int>(b.regime), b.seed);
  });

  EvalReport report;
  report.task_count = data.task_count();
  report.dataset_digest = dataset_digest(data).substr(0, 12);
  config.seeds.clear();
  for (const auto& l : loaded) {
    if (report.regimes.empty() || report.regimes.back() != l.regime) report.regimes.push_back(l.regime);
    if (std::find(config.seeds.begin(), config.seeds.end(), l.seed) == config.seeds.end()) config.seeds.push_back(l.seed);
    report.runs.push_back(l.metrics);
  }
  std::sort(config.seeds.begin(), config.seeds.end());
  report.config_digest = config_digest(config);
  return report;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "md" || s == "markdown") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  throw Error("format", "unknown report format '" + std::string(s) + "' (expected md or csv)");
}

std::string format_markdown(const EvalReport& report) {
  if (report.regimes.empty()) throw Error("precondition", "report has no regimes");
  const int T = report.task_count;
  const std::string last = "T_" + std::to_string(T);
  std::ostringstream out;
  out << "| Method |";
  for (int t = 1; t <= T; ++t) out << " T_" << t << " |";
  for (int t = 1; t < T; ++t) out << " T_" << t << "@" << last << " |";
  out << " Unconf. |\n|---|";
  for (int i = 0; i < 2 * T; ++i) out << "---|";
  out << '\n';
  for (Regime r : report.regimes) {
    out << "| " << to_string(r) << " |";
    for (int t = 1; t <= T; ++t) out << ' ' << percent(report.aggregate(r, "current/T" + std::to_string(t))) << " |";
    for (int t = 1; t < T; ++t) {
      out << ' ' << percent(report.aggregate(r, "old/T" + std::to_string(t) + "@T" + std::to_string(T))) << " |";
    }
    out << ' ' << percent(report.aggregate(r, "unconf")) << " |\n";
  }
  out << "\nAccuracy in percent, mean ± sample std over seeds (n = "
      << (report.runs.empty() ? 0 : report.aggregate(report.regimes.front(), "unconf").n) << ").\n";
  return out.str();
}

std::string format_csv(const EvalReport& report) {
  if (report.regimes.empty()) throw Error("precondition", "report has no regimes");
  std::string out = "regime,seed,metric,value\n";
  for (Regime r : report.regimes) {
    for (const auto& run : report.runs) {
      if (run.regime != r) continue;
      for (const auto& [name, v] : run.metrics()) {
        out += std::string(to_string(r)) + "," + std::to_string(run.seed) + "," + name + "," + format_double(v) + "\n";
      }
    }
  }
  return out;
}

std::string report_file_name(const EvalReport& report, ReportFormat format) {
  return "report_" + report.dataset_digest + "_" + report.config_digest +
         (format == ReportFormat::markdown ? ".md" : ".csv");
}

fs::path emit_report(const EvalReport& report, ReportFormat format, const fs::path& out_dir) {
  const std::string text = format == ReportFormat::markdown ? format_markdown(report) : format_csv(report);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("io", "cannot create " + out_dir.string() + ": " + ec.message());
  const fs::path path = out_dir / report_file_name(report, format);
  write_text(path, text);
  return path;
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line_no == 1) {
      if (line != "regime,seed,metric,value") throw Error("format", "csv: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::string_view fields[4];
    for (int i = 0; i < 3; ++i) {
      const auto comma = line.find(',');
      if (comma == std::string_view::npos) throw Error("format", "csv line " + std::to_string(line_no) + ": too few fields");
      fields[i] = line.substr(0, comma);
      line = line.substr(comma + 1);
    }
    fields[3] = line;
    CsvRow row;
    row.regime = fields[0];
    row.metric = fields[2];
    const auto [p1, e1] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), row.seed);
    const auto [p2, e2] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), row.value);
    if (e1 != std::errc{} || p1 != fields[1].data() + fields[1].size() || e2 != std::errc{} ||
        p2 != fields[3].data() + fields[3].size()) {
      throw Error("format", "csv line " + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(std::move(row));
  }
  if (line_no == 0) throw Error("format", "csv: empty document");
  return rows;
}

std::map<std::pair<std::string, std::string>, Summary> aggregate_csv(std::span<const CsvRow> rows) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : rows) values[{r.regime, r.metric}].push_back(r.value);
  std::map<std::pair<std::string, std::string>, Summary> out;
  for (const auto& [key, v] : values) out[key] = summarize(v);
  return out;
}

}  // namespace concon
