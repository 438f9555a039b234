#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "concon/dataset.hpp"
#include "concon/mlp.hpp"

namespace concon {

using Model = Mlp<double>;
using Params = ParamVector<double>;

enum class Regime { naive, joint, cumulative, shuffled, er, der, ewc, gdumb, bgs, unconfounded };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);
std::span<const Regime> all_regimes();

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 0.001;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int buffer_size = 100;
  double ewc_lambda = 100.0;
  double der_alpha = 0.5;
  std::uint64_t seed = 0;

  AdamConfig<double> adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

// Throws Error("range") for batch_size < 1, epochs < 1, buffer_size < 1 or a
// non-positive learning rate.
void check_config(const TrainConfig& config);

struct Example {
  Scene scene;
  int label = 0;
  int task = 0;
  std::uint32_t pattern = 0;  // bit i set when confounder i+1 is present
};

std::vector<Example> examples(std::span<const LabeledScene> scenes);

struct BufferEntry {
  Example example;
  Eigen::Vector2d logits = Eigen::Vector2d::Zero();  // stored model output (der)
};

enum class BufferPolicy { reservoir, class_balanced, group_balanced };

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, BufferPolicy policy);

  std::size_t capacity() const { return capacity_; }
  BufferPolicy policy() const { return policy_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<BufferEntry>& entries() const { return entries_; }
  std::uint64_t seen() const { return seen_; }

  // reservoir: the n-th streamed entry replaces a uniform slot with
  //   probability capacity / n.
  // class_balanced / group_balanced: greedy quotas. While full, an entry
  //   whose group holds fewer than capacity / (groups seen) items evicts a
  //   random item of the currently largest group.
  void offer(const BufferEntry& entry, Rng& rng);

  // Group key under the buffer's policy: label, or (label, pattern).
  std::uint64_t group_of(const Example& e) const;

 private:
  std::size_t capacity_;
  BufferPolicy policy_;
  std::vector<BufferEntry> entries_;
  std::uint64_t seen_ = 0;
  std::vector<std::uint64_t> groups_seen_;
};

struct FisherState {
  Params fisher;  // summed over completed tasks
  Params anchor;  // parameters at the latest task boundary
};

// Mean over examples of the squared per-example cross-entropy gradient.
// Throws Error("precondition") for empty data.
Params compute_fisher(const Model& model, std::span<const Example> data);

struct Checkpoint {
  int task = 0;  // tasks trained so far (1-based boundary)
  Params params;
  AdamState<double> adam;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
// Throws Error("format") on a wrong magic, truncation or parameter count.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LogRecord {
  int task = 0;
  int epoch = 0;
  double loss = 0.0;       // mean batch loss over the epoch
  double train_acc = 0.0;  // accuracy on the epoch's current-data examples, before each step
};

std::string log_line(const LogRecord& r);  // one JSON object, no newline

struct RunResult {
  Regime regime = Regime::naive;
  std::vector<Checkpoint> checkpoints;
  std::vector<LogRecord> log;
};

// Trains one regime on the train splits of the confounded tasks (or of the
// unconfounded task for Regime::unconfounded). Checkpoints are taken after
// every task, or once for joint and unconfounded.
RunResult run_regime(Regime regime, const Dataset& data, const TrainConfig& config);

// Accuracy of a parameter vector on a list of examples.
struct Accuracy {
  double overall = 0.0;
  double positive = 0.0;
  double negative = 0.0;
};

Accuracy evaluate(const Model& model, std::span<const Example> data);

}  // namespace concon
