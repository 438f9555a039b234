#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "concon/error.hpp"
#include "concon/experiment.hpp"
#include "support.hpp"

namespace concon {
namespace {

namespace fs = std::filesystem;
using testing::default_spec;
using testing::TempDir;

Dataset tiny() {
  RuleSpec s = default_spec(Variant::strict);
  s.counts = {30, 10, 10};
  return sample_dataset(s, {2});
}

ExperimentConfig quick(std::vector<Regime> regimes) {
  ExperimentConfig c;
  c.regimes = std::move(regimes);
  c.seeds = {0, 1};
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.train.buffer_size = 10;
  return c;
}

double metric(const RunMetrics& m, const std::string& name) {
  for (const auto& [k, v] : m.metrics()) {
    if (k == name) return v;
  }
  ADD_FAILURE() << "no metric " << name;
  return NAN;
}

TEST(Summary, SampleStandardDeviation) {
  const std::vector<double> same{0.7, 0.7, 0.7};
  EXPECT_EQ(summarize(same).std, 0.0);
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(s.n, 4u);
  const std::vector<double> one{0.3};
  EXPECT_EQ(summarize(one).std, 0.0);
}

TEST(RunMetrics, ConstantModelScores) {
  const Dataset d = tiny();
  // Zero parameters predict class 0: half right, all negatives, no positives.
  const std::vector<Checkpoint> ckpts{{1, Model{}.params(), {}}, {2, Model{}.params(), {}}, {3, Model{}.params(), {}}};
  const auto m = evaluate_run(Regime::naive, 0, ckpts, d);
  ASSERT_EQ(m.task_count(), 3);
  for (int t = 1; t <= 3; ++t) {
    EXPECT_EQ(m.current(t).overall, 0.5);
    EXPECT_EQ(m.current(t).positive, 0.0);
    EXPECT_EQ(m.current(t).negative, 1.0);
  }
  EXPECT_EQ(m.unconfounded.overall, 0.5);
  EXPECT_EQ(m.average(), 0.5);
  EXPECT_EQ(metric(m, "unconf/neg"), 1.0);
}

TEST(RunMetrics, AverageIsTheFinalRow) {
  RunMetrics m;
  m.matrix = {{{0.9}, {0.1}}, {{1.0}, {0.5}}};
  EXPECT_DOUBLE_EQ(m.average(), 0.75);
  EXPECT_EQ(m.current(1).overall, 0.9);
  EXPECT_EQ(m.current(2).overall, 0.5);
  EXPECT_EQ(m.final_on(1).overall, 1.0);
  EXPECT_EQ(metric(m, "old/T1@T2"), 1.0);
  EXPECT_EQ(metric(m, "matrix/C1/T2"), 0.1);

  RunMetrics single;
  single.matrix = {{{0.8}, {0.6}}};
  EXPECT_EQ(single.current(2).overall, 0.6);
  EXPECT_EQ(single.final_on(1).overall, 0.8);
}

TEST(RunMetrics, MetricNamesInOrder) {
  RunMetrics m;
  m.matrix.assign(3, std::vector<Accuracy>(3));
  std::vector<std::string> names;
  for (const auto& [k, v] : m.metrics()) names.push_back(k);
  ASSERT_EQ(names.size(), 9u + 2u + 3u + 1u + 9u);
  EXPECT_EQ(names.front(), "current/T1");
  EXPECT_EQ(names[1], "current/T1/pos");
  EXPECT_EQ(names[9], "old/T1@T3");
  EXPECT_EQ(names[11], "unconf");
  EXPECT_EQ(names[14], "average");
  EXPECT_EQ(names.back(), "matrix/C3/T3");
}

TEST(Experiment, EmptyListsArePreconditionErrors) {
  const Dataset d = tiny();
  for (ExperimentConfig c : {quick({}), [] {
                               auto c = quick({Regime::naive});
                               c.seeds.clear();
                               return c;
                             }()}) {
    try {
      run_experiment(d, c);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "precondition");
    }
  }
}

TEST(Experiment, ReportsAndSavedRunsAgree) {
  TempDir tmp("concon_experiment");
  const Dataset d = tiny();
  const auto config = quick({Regime::naive, Regime::joint});
  const auto report = run_experiment(d, config, tmp.path() / "runs");
  ASSERT_EQ(report.runs.size(), 4u);
  EXPECT_EQ(report.task_count, 3);
  EXPECT_EQ(report.config_digest, config_digest(config));
  EXPECT_TRUE(fs::exists(tmp.path() / "runs" / "naive" / "seed1" / "checkpoint_3.bin"));
  EXPECT_TRUE(fs::exists(tmp.path() / "runs" / "joint" / "seed0" / "log.jsonl"));

  const auto again = evaluate_saved_runs(tmp.path() / "runs", d);
  EXPECT_EQ(format_csv(again), format_csv(report));
  EXPECT_EQ(format_markdown(again), format_markdown(report));

  // CSV round trip reproduces the aggregates.
  const std::string csv = format_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "regime,seed,metric,value");
  const auto rows = parse_csv(csv);
  const auto agg = aggregate_csv(rows);
  for (Regime r : config.regimes) {
    for (const std::string name : {"average", "unconf", "current/T2/neg"}) {
      const auto a = report.aggregate(r, name);
      const auto& b = agg.at({std::string(to_string(r)), name});
      EXPECT_EQ(a.mean, b.mean);
      EXPECT_EQ(a.std, b.std);
      EXPECT_EQ(b.n, 2u);
    }
  }

  const std::string md = format_markdown(report);
  EXPECT_NE(md.find("| naive |"), std::string::npos) << md;
  EXPECT_NE(md.find("| joint |"), std::string::npos) << md;
  EXPECT_NE(md.find(" ± "), std::string::npos);

  const auto path = emit_report(report, ReportFormat::csv, tmp.path());
  EXPECT_EQ(path.filename(), report_file_name(report, ReportFormat::csv));
  EXPECT_EQ(path.filename().string(),
            "report_" + report.dataset_digest + "_" + report.config_digest + ".csv");
  EXPECT_EQ(report.dataset_digest.size(), 12u);
  EXPECT_EQ(report_file_name(report, ReportFormat::markdown).substr(path.filename().string().size() - 3), "md");
}

TEST(Experiment, ConfigDigestTracksSettings) {
  auto a = quick({Regime::naive});
  auto b = a;
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.train.learning_rate = 0.01;
  EXPECT_NE(config_digest(a), config_digest(b));
  b = a;
  b.seeds = {0, 1, 2};
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Csv, StrictHeaderAndFields) {
  for (const char* text : {"regime,seed,value\nnaive,0,x\n", "regime,seed,metric,value\nnaive,zero,average,0.5\n",
                           "regime,seed,metric,value\nnaive,0,average\n"}) {
    try {
      parse_csv(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "format");
    }
  }
  const auto rows = parse_csv("regime,seed,metric,value\nnaive,3,average,0.25\n");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].seed, 3u);
  EXPECT_EQ(rows[0].value, 0.25);
}

TEST(ReportFormat, Names) {
  EXPECT_EQ(parse_report_format("md"), ReportFormat::markdown);
  EXPECT_EQ(parse_report_format("markdown"), ReportFormat::markdown);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_THROW(parse_report_format("xlsx"), Error);
}

}  // namespace
}  // namespace concon
