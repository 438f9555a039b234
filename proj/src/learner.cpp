#include "concon/learner.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "concon/error.hpp"

namespace concon {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kPartitionStream = 3;
constexpr std::uint64_t kBufferStream = 4;

constexpr char kCheckpointMagic[8] = {'C', 'O', 'N', 'C', 'K', 'P', 'T', '1'};

constexpr std::array<std::string_view, 10> kRegimeNames{"naive", "joint", "cumulative", "shuffled", "er",
                                                        "der",   "ewc",   "gdumb",      "bgs",      "unconfounded"};
constexpr std::array<Regime, 10> kRegimes{Regime::naive, Regime::joint, Regime::cumulative, Regime::shuffled,
                                          Regime::er,    Regime::der,   Regime::ewc,        Regime::gdumb,
                                          Regime::bgs,   Regime::unconfounded};

std::vector<Example> task_examples(const Dataset& data, int task) {
  if (task >= static_cast<int>(data.scenes.size())) {
    throw Error("precondition", "dataset has no task " + std::to_string(task));
  }
  return examples(data.subset(task, Split::train));
}

class Trainer {
 public:
  Trainer(Regime regime, const TrainConfig& config)
      : regime_(regime),
        config_(config),
        train_rng_(derive_seed(config.seed, {kTrainStream})),
        buffer_rng_(derive_seed(config.seed, {kBufferStream})),
        buffer_(static_cast<std::size_t>(config.buffer_size), policy_for(regime)) {
    reinitialize(derive_seed(config.seed, {kInitStream}));
  }

  void reinitialize(std::uint64_t seed) {
    Rng init(seed);
    model_ = Model::initialized(init);
    adam_ = AdamState<double>::zeros();
  }

  // Runs config.epochs passes over `data`. With `stream`, every example is
  // offered to the replay buffer once, right after the step that first
  // presents it.
  void train_task(int task, std::span<const Example> data, bool stream) {
    if (data.empty()) throw Error("precondition", "no training examples for task " + std::to_string(task));
    const bool replay = regime_ == Regime::er || regime_ == Regime::der || regime_ == Regime::bgs;
    const auto batch = static_cast<std::size_t>(config_.batch_size);
    std::vector<std::size_t> order(data.size());
    std::vector<std::size_t> pool;
    std::vector<Scene> scenes;
    std::vector<int> labels;
    Params grad;

    for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      train_rng_.shuffle(std::span(order));
      double loss_sum = 0.0;
      std::size_t batches = 0;
      std::size_t correct = 0;

      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        scenes.clear();
        labels.clear();
        for (std::size_t i = start; i < end; ++i) {
          scenes.push_back(data[order[i]].scene);
          labels.push_back(data[order[i]].label);
        }
        const std::size_t current = scenes.size();
        const FeatureMatrix<double> xc = featurize<double>(scenes);
        const LogitMatrix<double> zc = forward(model_, xc);
        for (std::size_t j = 0; j < current; ++j) {
          correct += predict(zc.col(static_cast<Eigen::Index>(j))) == labels[j] ? 1 : 0;
        }

        Penalty<double> penalty;
        if (regime_ == Regime::ewc && fisher_) penalty.ewc = EwcPenalty<double>{&fisher_->fisher, &fisher_->anchor, config_.ewc_lambda};

        double loss = 0.0;
        if (replay && buffer_.size() > 0) {
          const std::size_t r = std::min(buffer_.size(), batch);
          pool.resize(buffer_.size());
          std::iota(pool.begin(), pool.end(), std::size_t{0});
          for (std::size_t i = 0; i < r; ++i) std::swap(pool[i], pool[i + train_rng_.uniform_index(pool.size() - i)]);
          if (regime_ == Regime::der) {
            DistillPenalty<double> d;
            d.x = FeatureMatrix<double>::Zero(kObjectTypeCount, static_cast<Eigen::Index>(r));
            d.target.resize(kClassCount, static_cast<Eigen::Index>(r));
            for (std::size_t i = 0; i < r; ++i) {
              const auto& e = buffer_.entries()[pool[i]];
              d.x.col(static_cast<Eigen::Index>(i)) = featurize<double>(e.example.scene);
              d.target.col(static_cast<Eigen::Index>(i)) = e.logits;
            }
            d.alpha = config_.der_alpha;
            penalty.der = std::move(d);
            loss = loss_and_grad(model_, xc, labels, penalty, &grad);
          } else {
            for (std::size_t i = 0; i < r; ++i) {
              const auto& e = buffer_.entries()[pool[i]];
              scenes.push_back(e.example.scene);
              labels.push_back(e.example.label);
            }
            loss = loss_and_grad(model_, featurize<double>(scenes), labels, penalty, &grad);
          }
        } else {
          loss = loss_and_grad(model_, xc, labels, penalty, &grad);
        }
        adam_step(model_, adam_, grad, config_.adam());
        loss_sum += loss;
        ++batches;

        if (stream && epoch == 1) {
          for (std::size_t i = start; i < end; ++i) {
            buffer_.offer({data[order[i]], zc.col(static_cast<Eigen::Index>(i - start))}, buffer_rng_);
          }
        }
      }
      log_.push_back({task, epoch, loss_sum / static_cast<double>(batches),
                      static_cast<double>(correct) / static_cast<double>(data.size())});
    }
  }

  void checkpoint(int task) { checkpoints_.push_back({task, model_.params(), adam_}); }

  void accumulate_fisher(std::span<const Example> data) {
    Params f = compute_fisher(model_, data);
    if (fisher_) fisher_->fisher += f;
    else fisher_ = FisherState{std::move(f), {}};
    fisher_->anchor = model_.params();
  }

  ReplayBuffer& buffer() { return buffer_; }
  Rng& buffer_rng() { return buffer_rng_; }

  RunResult result() && { return {regime_, std::move(checkpoints_), std::move(log_)}; }

 private:
  static BufferPolicy policy_for(Regime r) {
    if (r == Regime::gdumb) return BufferPolicy::class_balanced;
    if (r == Regime::bgs) return BufferPolicy::group_balanced;
    return BufferPolicy::reservoir;
  }

  Regime regime_;
  TrainConfig config_;
  Rng train_rng_;
  Rng buffer_rng_;
  ReplayBuffer buffer_;
  Model model_;
  AdamState<double> adam_;
  std::optional<FisherState> fisher_;
  std::vector<Checkpoint> checkpoints_;
  std::vector<LogRecord> log_;
};

void write_vector(std::ostream& out, const Params& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Params read_vector(std::istream& in, std::uint64_t n) {
  Params v(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

std::string_view to_string(Regime r) { return kRegimeNames[static_cast<std::size_t>(r)]; }

Regime parse_regime(std::string_view s) {
  for (std::size_t i = 0; i < kRegimeNames.size(); ++i) {
    if (kRegimeNames[i] == s) return kRegimes[i];
  }
  throw Error("format", "unknown method '" + std::string(s) + "'");
}

std::span<const Regime> all_regimes() { return kRegimes; }

void check_config(const TrainConfig& c) {
  if (c.batch_size < 1) throw Error("range", "batch size must be at least 1");
  if (c.epochs < 1) throw Error("range", "epochs must be at least 1");
  if (c.buffer_size < 1) throw Error("range", "buffer size must be at least 1");
  if (!(c.learning_rate > 0.0)) throw Error("range", "learning rate must be positive");
  if (!(c.ewc_lambda >= 0.0) || !(c.der_alpha >= 0.0)) throw Error("range", "penalty weights must be non-negative");
}

std::vector<Example> examples(std::span<const LabeledScene> scenes) {
  std::vector<Example> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    Example e{s.scene, s.label, s.task, 0};
    for (std::size_t i = 0; i < s.confounders_present.size(); ++i) {
      if (s.confounders_present[i]) e.pattern |= 1U << i;
    }
    out.push_back(e);
  }
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, BufferPolicy policy) : capacity_(capacity), policy_(policy) {
  if (capacity == 0) throw Error("range", "buffer capacity must be at least 1");
  entries_.reserve(capacity);
}

std::uint64_t ReplayBuffer::group_of(const Example& e) const {
  if (policy_ == BufferPolicy::group_balanced) return (std::uint64_t{e.pattern} << 1) | static_cast<std::uint64_t>(e.label);
  return static_cast<std::uint64_t>(e.label);
}

void ReplayBuffer::offer(const BufferEntry& entry, Rng& rng) {
  ++seen_;
  if (policy_ == BufferPolicy::reservoir) {
    if (entries_.size() < capacity_) {
      entries_.push_back(entry);
    } else if (const auto j = rng.uniform_index(seen_); j < capacity_) {
      entries_[j] = entry;
    }
    return;
  }

  const std::uint64_t g = group_of(entry.example);
  if (std::find(groups_seen_.begin(), groups_seen_.end(), g) == groups_seen_.end()) groups_seen_.push_back(g);
  if (entries_.size() < capacity_) {
    entries_.push_back(entry);
    return;
  }
  std::map<std::uint64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < entries_.size(); ++i) members[group_of(entries_[i].example)].push_back(i);
  const std::size_t quota = capacity_ / groups_seen_.size();
  const auto it = members.find(g);
  if (it != members.end() && it->second.size() >= quota) return;
  // Largest group; the smallest key wins ties.
  auto largest = members.begin();
  for (auto m = members.begin(); m != members.end(); ++m) {
    if (m->second.size() > largest->second.size()) largest = m;
  }
  entries_[largest->second[rng.uniform_index(largest->second.size())]] = entry;
}

Params compute_fisher(const Model& model, std::span<const Example> data) {
  if (data.empty()) throw Error("precondition", "Fisher estimate needs data");
  Params f = Params::Zero(Model::kParamCount);
  Params grad;
  for (const auto& e : data) {
    const int label = e.label;
    loss_and_grad(model, featurize<double>(e.scene), std::span(&label, 1), {}, &grad);
    f += grad.cwiseProduct(grad);
  }
  return f / static_cast<double>(data.size());
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write checkpoint " + path.string());
  const auto task = static_cast<std::int32_t>(c.task);
  const auto n = static_cast<std::uint64_t>(c.params.size());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  out.write(reinterpret_cast<const char*>(&task), sizeof task);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  write_vector(out, c.params);
  write_vector(out, c.adam.m);
  write_vector(out, c.adam.v);
  out.write(reinterpret_cast<const char*>(&c.adam.step), sizeof c.adam.step);
  if (!out) throw Error("io", "cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot read checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kCheckpointMagic)) {
    throw Error("format", path.string() + ": not a checkpoint file");
  }
  std::int32_t task = 0;
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&task), sizeof task);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n != static_cast<std::uint64_t>(Model::kParamCount)) {
    throw Error("format", path.string() + ": unexpected parameter count");
  }
  Checkpoint c;
  c.task = task;
  c.params = read_vector(in, n);
  c.adam.m = read_vector(in, n);
  c.adam.v = read_vector(in, n);
  in.read(reinterpret_cast<char*>(&c.adam.step), sizeof c.adam.step);
  if (!in) throw Error("format", path.string() + ": truncated checkpoint");
  if (in.peek() != std::char_traits<char>::eof()) throw Error("format", path.string() + ": trailing bytes");
  return c;
}

std::string log_line(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["train_acc"] = r.train_acc;
  return j.dump();
}

RunResult run_regime(Regime regime, const Dataset& data, const TrainConfig& config) {
  check_config(config);
  const int T = data.task_count();
  Trainer trainer(regime, config);

  std::vector<std::vector<Example>> tasks(T + 1);
  if (regime == Regime::unconfounded) {
    tasks[0] = task_examples(data, 0);
  } else {
    for (int t = 1; t <= T; ++t) tasks[t] = task_examples(data, t);
  }
  if (regime == Regime::bgs) {
    for (int t = 1; t <= T; ++t) {
      for (const auto& s : data.subset(t, Split::train)) {
        if (static_cast<int>(s.confounders_present.size()) != T) {
          throw Error("precondition", "balanced group sampling needs confounder flags on every scene");
        }
      }
    }
  }

  switch (regime) {
    case Regime::unconfounded:
      trainer.train_task(0, tasks[0], false);
      trainer.checkpoint(0);
      break;
    case Regime::joint: {
      std::vector<Example> all;
      for (int t = 1; t <= T; ++t) all.insert(all.end(), tasks[t].begin(), tasks[t].end());
      trainer.train_task(1, all, false);
      trainer.checkpoint(T);
      break;
    }
    case Regime::cumulative:
    case Regime::shuffled: {
      std::vector<std::vector<Example>> stages(tasks.begin() + 1, tasks.end());
      if (regime == Regime::shuffled) {
        std::vector<Example> pool;
        for (const auto& s : stages) pool.insert(pool.end(), s.begin(), s.end());
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng partition(derive_seed(config.seed, {kPartitionStream}));
        partition.shuffle(std::span(idx));
        // Equal pseudo-tasks; each keeps the pool's original order so that a
        // single task sees exactly the stream the other regimes see.
        std::size_t begin = 0;
        for (int t = 0; t < T; ++t) {
          const std::size_t len = pool.size() / T + (static_cast<std::size_t>(t) < pool.size() % T ? 1 : 0);
          std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                        idx.begin() + static_cast<std::ptrdiff_t>(begin + len));
          std::sort(part.begin(), part.end());
          stages[t].clear();
          for (auto i : part) stages[t].push_back(pool[i]);
          begin += len;
        }
      }
      std::vector<Example> seen;
      for (int t = 1; t <= T; ++t) {
        seen.insert(seen.end(), stages[t - 1].begin(), stages[t - 1].end());
        trainer.train_task(t, seen, false);
        trainer.checkpoint(t);
      }
      break;
    }
    case Regime::gdumb:
      for (int t = 1; t <= T; ++t) {
        std::vector<std::size_t> idx(tasks[t].size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        trainer.buffer_rng().shuffle(std::span(idx));
        for (auto i : idx) trainer.buffer().offer({tasks[t][i], Eigen::Vector2d::Zero()}, trainer.buffer_rng());
        std::vector<Example> memory;
        for (const auto& e : trainer.buffer().entries()) memory.push_back(e.example);
        trainer.reinitialize(derive_seed(config.seed, {kInitStream, static_cast<std::uint64_t>(t)}));
        trainer.train_task(t, memory, false);
        trainer.checkpoint(t);
      }
      break;
    case Regime::naive:
    case Regime::ewc:
    case Regime::er:
    case Regime::der:
    case Regime::bgs: {
      const bool stream = regime == Regime::er || regime == Regime::der || regime == Regime::bgs;
      for (int t = 1; t <= T; ++t) {
        trainer.train_task(t, tasks[t], stream);
        if (regime == Regime::ewc) trainer.accumulate_fisher(tasks[t]);
        trainer.checkpoint(t);
      }
      break;
    }
  }
  return std::move(trainer).result();
}

Accuracy evaluate(const Model& model, std::span<const Example> data) {
  if (data.empty()) throw Error("precondition", "cannot evaluate on an empty split");
  std::vector<Scene> scenes;
  scenes.reserve(data.size());
  for (const auto& e : data) scenes.push_back(e.scene);
  const LogitMatrix<double> z = forward(model, featurize<double>(scenes));
  std::size_t hit[2] = {0, 0};
  std::size_t total[2] = {0, 0};
  for (std::size_t j = 0; j < data.size(); ++j) {
    const int y = data[j].label;
    ++total[y];
    if (predict(z.col(static_cast<Eigen::Index>(j))) == y) ++hit[y];
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  return {ratio(hit[0] + hit[1], data.size()), ratio(hit[1], total[1]), ratio(hit[0], total[0])};
}

}  // namespace concon
