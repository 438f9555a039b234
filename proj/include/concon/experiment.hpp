#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "concon/dataset.hpp"
#include "concon/learner.hpp"

namespace concon {

struct ExperimentConfig {
  std::vector<Regime> regimes;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  TrainConfig train;  // train.seed is replaced by each entry of seeds
};

// Accuracies of one trained run.
struct RunMetrics {
  Regime regime = Regime::naive;
  std::uint64_t seed = 0;
  // matrix[c][t - 1]: checkpoint c evaluated on the test split of task t.
  std::vector<std::vector<Accuracy>> matrix;
  Accuracy unconfounded;  // final checkpoint on the unconfounded test split

  int task_count() const { return matrix.empty() ? 0 : static_cast<int>(matrix.front().size()); }
  // Accuracy on task t right after training on it (1-based). Runs with a
  // single checkpoint (joint, unconfounded) read it for every task.
  Accuracy current(int t) const;
  // Task t after the final checkpoint.
  Accuracy final_on(int t) const;
  // A_T: mean over tasks of final_on(t).
  double average() const;

  // Named scalar metrics in a fixed order: current/T{t}[/pos|/neg],
  // old/T{i}@T{T}, unconf[/pos|/neg], average, matrix/C{c}/T{t}.
  std::vector<std::pair<std::string, double>> metrics() const;
};

// Evaluates every checkpoint on every confounded test split, and the final
// checkpoint on the unconfounded test split.
RunMetrics evaluate_run(Regime regime, std::uint64_t seed, std::span<const Checkpoint> checkpoints,
                        const Dataset& data);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation; 0 for one value
  std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

struct EvalReport {
  int task_count = 0;
  std::string dataset_digest;
  std::string config_digest;
  std::vector<Regime> regimes;  // row order
  std::vector<RunMetrics> runs;

  // Mean / std over seeds of one named metric for one regime.
  Summary aggregate(Regime regime, const std::string& metric) const;
};

// Short stable digest of everything except the per-run seed, plus the seeds.
std::string config_digest(const ExperimentConfig& config);

// Trains every (regime, seed) pair. When runs_dir is non-empty each run is
// written there (see save_run). Throws Error("precondition") for an empty
// regime or seed list.
EvalReport run_experiment(const Dataset& data, const ExperimentConfig& config,
                          const std::filesystem::path& runs_dir = {});

// runs_dir/{regime}/seed{seed}/: checkpoint_{k}.bin, log.jsonl, run.json.
void save_run(const RunResult& run, std::uint64_t seed, const TrainConfig& config, const Dataset& data,
              const std::filesystem::path& runs_dir);

// Re-evaluates every saved run under runs_dir against data.
EvalReport evaluate_saved_runs(const std::filesystem::path& runs_dir, const Dataset& data);

enum class ReportFormat { markdown, csv };
ReportFormat parse_report_format(std::string_view s);

// Throws Error("precondition") for a report without regimes.
std::string format_markdown(const EvalReport& report);
std::string format_csv(const EvalReport& report);

// "report_{dataset digest}_{config digest}.{md|csv}"
std::string report_file_name(const EvalReport& report, ReportFormat format);
// Writes into out_dir; returns the file path. Throws Error("io").
std::filesystem::path emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& out_dir);

struct CsvRow {
  std::string regime;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

// Throws Error("format") on a malformed document.
std::vector<CsvRow> parse_csv(std::string_view text);
// (regime, metric) -> summary over seeds.
std::map<std::pair<std::string, std::string>, Summary> aggregate_csv(std::span<const CsvRow> rows);

}  // namespace concon
