#include "concon/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include "concon/digest.hpp"
#include "concon/error.hpp"
#include "concon/model_check.hpp"
#include "concon/render.hpp"

namespace concon {
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kMaxSlotRejections = 1'000'000;
constexpr std::uint64_t kRenderStream = 0x72656e646572ULL;
constexpr std::array<int, 2> kLabelOrder{1, 0};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("io", "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "short write to " + p.string());
}

std::string index_name(int index, std::string_view ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return std::string(buf) + std::string(ext);
}

std::string_view label_dir(int label) { return label == 1 ? "pos" : "neg"; }

int count_for(const SplitCounts& c, Split s) {
  switch (s) {
    case Split::train: return c.train;
    case Split::val: return c.val;
    case Split::test: return c.test;
  }
  return 0;
}

// Existence atoms that every model of pred must witness: the positive
// Exists leaves of its top-level conjunction.
void required_atoms(const Predicate& p, std::vector<ObjectPredicate>& out) {
  if (p.kind() == Predicate::Kind::exists) out.push_back(p.atom());
  else if (p.kind() == Predicate::Kind::all_of) {
    for (const auto& q : p.operands()) required_atoms(q, out);
  }
}

class Sampler {
 public:
  Sampler(const Predicate& pred, SamplingMode mode) : pred_(pred), mode_(mode) {
    if (mode_ == SamplingMode::uniform) {
      ranks_ = satisfying_ranks(pred);
      if (ranks_->empty()) throw Error("precondition", "cannot sample an unsatisfiable predicate: " + to_string(pred));
    } else {
      if (satisfying_set(pred)->empty()) {
        throw Error("precondition", "cannot sample an unsatisfiable predicate: " + to_string(pred));
      }
      required_atoms(pred, atoms_);
    }
  }

  Scene next(Rng& rng) {
    if (mode_ == SamplingMode::uniform) return scene_unrank((*ranks_)[rng.uniform_index(ranks_->size())]);
    for (std::uint64_t rejected = 0; rejected < kMaxSlotRejections; ++rejected) {
      if (auto s = try_slots(rng); s && eval_scene(pred_, *s)) return *s;
    }
    throw Error("stall", "slot sampling rejected " + std::to_string(kMaxSlotRejections) +
                             " consecutive scenes for " + to_string(pred_));
  }

 private:
  std::optional<Scene> try_slots(Rng& rng) const {
    std::vector<ObjectPredicate> slots;
    std::vector<std::size_t> choices;
    for (const auto& atom : atoms_) {
      choices.clear();
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].compatible(atom)) choices.push_back(i);
      }
      if (slots.size() < kObjectsPerScene) choices.push_back(slots.size());
      if (choices.empty()) return std::nullopt;
      const std::size_t pick = choices[rng.uniform_index(choices.size())];
      if (pick == slots.size()) slots.push_back(atom);
      else slots[pick] = slots[pick].merged(atom);
    }
    slots.resize(kObjectsPerScene);
    std::array<ObjectSpec, kObjectsPerScene> objects{};
    for (int i = 0; i < kObjectsPerScene; ++i) {
      ObjectPredicate filled = slots[i];
      for (int a = 0; a < 4; ++a) {
        const auto attr = static_cast<Attribute>(a);
        if (!filled.get(attr)) {
          filled.set(attr, static_cast<int>(rng.uniform_index(kAttributeCardinality[a])));
        }
      }
      objects[i] = ObjectSpec{*filled.shape, *filled.size, *filled.material, *filled.color};
    }
    return Scene::canonicalize(objects);
  }

  Predicate pred_;
  SamplingMode mode_;
  std::shared_ptr<const std::vector<std::uint32_t>> ranks_;
  std::vector<ObjectPredicate> atoms_;
};

struct ParsedRecord {
  LabeledScene scene;
  bool canonical_order = true;
};

ParsedRecord parse_record(std::string_view text, const std::string& where, int task_count) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("format", where + ": not valid JSON (" + e.what() + ")");
  }
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(name)) throw Error("format", where + ": missing field '" + name + "'");
    return j[name];
  };
  auto fail = [&](const std::string& what) { throw Error("format", where + ": " + what); };

  ParsedRecord out;
  const auto& objs = field("objects");
  if (!objs.is_array() || objs.size() != kObjectsPerScene) fail("field 'objects' must list exactly 4 objects");
  std::array<ObjectSpec, kObjectsPerScene> objects{};
  for (int i = 0; i < kObjectsPerScene; ++i) {
    const auto& o = objs[i];
    if (!o.is_object() || o.size() != 4) fail("object " + std::to_string(i) + " must have exactly 4 attributes");
    ObjectPredicate lits;
    for (const auto& [key, val] : o.items()) {
      auto a = parse_attribute(key);
      if (!a) fail("object " + std::to_string(i) + " has unknown attribute '" + key + "'");
      auto v = val.is_string() ? parse_value(*a, val.get<std::string>()) : std::nullopt;
      if (!v) fail("object " + std::to_string(i) + " has invalid " + key + " value");
      lits.set(*a, *v);
    }
    if (lits.literal_count() != 4) fail("object " + std::to_string(i) + " must set every attribute");
    objects[i] = ObjectSpec{*lits.shape, *lits.size, *lits.material, *lits.color};
    if (i > 0 && objects[i].type_index() < objects[i - 1].type_index()) out.canonical_order = false;
  }
  out.scene.scene = Scene::canonicalize(objects);

  const auto& label = field("label");
  if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1)) {
    fail("field 'label' must be 0 or 1");
  }
  out.scene.label = label.get<int>();
  const auto& task = field("task");
  if (!task.is_number_integer() || task.get<int>() < 0 || task.get<int>() > task_count) {
    fail("field 'task' must be an integer in [0, " + std::to_string(task_count) + "]");
  }
  out.scene.task = task.get<int>();
  const auto& split = field("split");
  if (!split.is_string()) fail("field 'split' must be a string");
  try {
    out.scene.split = parse_split(split.get<std::string>());
  } catch (const Error&) {
    fail("field 'split' must be train, val or test");
  }
  const auto& flags = field("confounders_present");
  if (!flags.is_array() || static_cast<int>(flags.size()) != task_count) {
    fail("field 'confounders_present' must hold " + std::to_string(task_count) + " booleans");
  }
  for (const auto& f : flags) {
    if (!f.is_boolean()) fail("field 'confounders_present' must hold booleans");
    out.scene.confounders_present.push_back(f.get<bool>());
  }
  return out;
}

}  // namespace

std::string_view to_string(SamplingMode m) { return m == SamplingMode::uniform ? "uniform" : "slot"; }

SamplingMode parse_sampling_mode(std::string_view s) {
  if (s == "uniform") return SamplingMode::uniform;
  if (s == "slot") return SamplingMode::slot;
  throw Error("format", "sampling mode must be 'uniform' or 'slot', got '" + std::string(s) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return {};
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("format", "unknown split '" + std::string(s) + "'");
}

std::shared_ptr<const std::vector<std::uint32_t>> satisfying_ranks(const Predicate& pred) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const std::vector<std::uint32_t>>> cache;
  const std::string key = to_json(pred).dump();
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const auto set = satisfying_set(pred);
  auto ranks = std::make_shared<std::vector<std::uint32_t>>();
  ranks->reserve(set->count());
  const auto words = set->words();
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (std::uint64_t bits = words[w]; bits; bits &= bits - 1) {
      ranks->push_back(static_cast<std::uint32_t>(w * 64 + std::countr_zero(bits)));
    }
  }
  std::lock_guard lock(mutex);
  if (cache.size() >= 64) cache.clear();
  return cache.emplace(key, std::move(ranks)).first->second;
}

std::vector<Scene> sample_scenes(const Predicate& pred, std::size_t n, Rng& rng, SamplingMode mode) {
  if (n == 0) return {};
  Sampler sampler(pred, mode);
  std::vector<Scene> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler.next(rng));
  return out;
}

int DatasetManifest::total_scenes() const {
  int n = 0;
  for (const auto& c : counts) n += c.count;
  return n;
}

int DatasetManifest::scenes_in_task(int task) const {
  int n = 0;
  for (const auto& c : counts) n += c.task == task ? c.count : 0;
  return n;
}

nlohmann::ordered_json DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool_version"] = tool_version;
  j["spec_file"] = "spec.json";
  j["spec_digest"] = spec_digest;
  j["seed"] = seed;
  j["mode"] = std::string(to_string(mode));
  j["variant"] = std::string(concon::to_string(variant));
  j["task_count"] = task_count;
  j["rendered"] = rendered;
  j["deduplicated"] = deduplicated;
  j["counts"] = nlohmann::ordered_json::array();
  for (const auto& c : counts) {
    nlohmann::ordered_json row;
    row["task"] = c.task;
    row["split"] = std::string(concon::to_string(c.split));
    row["label"] = c.label;
    row["count"] = c.count;
    row["path"] = subset_dir(c.task, c.split, c.label).generic_string();
    j["counts"].push_back(row);
  }
  j["total_scenes"] = total_scenes();
  j["content_digest"] = content_digest;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.spec_digest = j.at("spec_digest").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.mode = parse_sampling_mode(j.at("mode").get<std::string>());
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.task_count = j.at("task_count").get<int>();
    m.rendered = j.at("rendered").get<bool>();
    m.deduplicated = j.at("deduplicated").get<bool>();
    m.content_digest = j.at("content_digest").get<std::string>();
    for (const auto& row : j.at("counts")) {
      m.counts.push_back({row.at("task").get<int>(), parse_split(row.at("split").get<std::string>()),
                          row.at("label").get<int>(), row.at("count").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("format", std::string("malformed manifest: ") + e.what());
  }
  return m;
}

fs::path subset_dir(int task, Split split, int label) {
  return fs::path("t" + std::to_string(task)) / std::string(to_string(split)) / std::string(label_dir(label));
}

std::string scene_record(const LabeledScene& s) {
  nlohmann::ordered_json j;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : s.scene.objects()) {
    nlohmann::ordered_json obj;
    obj["shape"] = std::string(to_string(o.shape));
    obj["size"] = std::string(to_string(o.size));
    obj["material"] = std::string(to_string(o.material));
    obj["color"] = std::string(to_string(o.color));
    j["objects"].push_back(obj);
  }
  j["label"] = s.label;
  j["task"] = s.task;
  j["split"] = std::string(to_string(s.split));
  j["confounders_present"] = nlohmann::ordered_json::array();
  for (bool b : s.confounders_present) j["confounders_present"].push_back(b);
  return j.dump() + "\n";
}

LabeledScene parse_scene_record(std::string_view text, const std::string& where, int task_count) {
  return parse_record(text, where, task_count).scene;
}

namespace {

void require_valid(const RuleSpec& spec) {
  const auto diagnostics = validate(spec);
  if (!has_errors(diagnostics)) return;
  std::string msg = "rule spec has errors:";
  for (const auto& d : diagnostics) {
    if (d.severity == Diagnostic::Severity::error) msg += " [" + d.code + "] " + d.message + ";";
  }
  throw Error("validation", msg);
}

// Visits every generated scene in the fixed (task, split, label, index)
// order. Each subset draws from its own stream derived from the master seed.
template <typename OnSubset, typename OnScene>
void generate_scenes(const RuleSpec& spec, const GenerateOptions& options, OnSubset&& on_subset,
                     OnScene&& on_scene) {
  std::unordered_set<std::uint32_t> seen;
  for (const auto& task : compile(spec)) {
    for (Split split : kSplits) {
      for (int label : kLabelOrder) {
        const Predicate& pred = label == 1 ? task.positive : task.negative;
        const int n = count_for(spec.counts, split);
        on_subset(task.index, split, label, n);
        if (n == 0) continue;
        Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(task.index),
                                           static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(label)}));
        Sampler sampler(pred, options.mode);
        for (int i = 0; i < n; ++i) {
          Scene scene = sampler.next(rng);
          if (options.dedup) {
            std::uint64_t tries = 0;
            while (!seen.insert(scene_rank(scene)).second) {
              if (++tries >= kMaxSlotRejections) {
                throw Error("stall", "deduplication exhausted the satisfying set of " + to_string(pred));
              }
              scene = sampler.next(rng);
            }
          }
          LabeledScene rec{scene, label, task.index, split, {}};
          for (const auto& c : spec.confounders) rec.confounders_present.push_back(eval_scene(c, scene));
          on_scene(i, rec);
        }
      }
    }
  }
}

}  // namespace

DatasetManifest generate(const RuleSpec& spec, const GenerateOptions& options, const fs::path& out_dir) {
  require_valid(spec);
  const std::string spec_bytes = spec.source.empty() ? serialize_rule_spec(spec) : spec.source;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("io", "cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.spec_digest = sha256_hex(spec_bytes);
  manifest.seed = options.seed;
  manifest.mode = options.mode;
  manifest.variant = spec.variant;
  manifest.task_count = spec.task_count();
  manifest.rendered = options.render;
  manifest.deduplicated = options.dedup;
  write_file(out_dir / "spec.json", spec_bytes);

  Sha256 content;
  fs::path rel;
  auto add = [&](const std::string& name, std::string_view bytes) {
    write_file(out_dir / rel / name, bytes);
    content.update((rel / name).generic_string()).update(std::string_view("\0", 1)).update(bytes);
  };
  generate_scenes(
      spec, options,
      [&](int task, Split split, int label, int n) {
        rel = subset_dir(task, split, label);
        fs::create_directories(out_dir / rel, ec);
        if (ec) throw Error("io", "cannot create " + (out_dir / rel).string() + ": " + ec.message());
        manifest.counts.push_back({task, split, label, n});
      },
      [&](int i, const LabeledScene& rec) {
        add(index_name(i, ".json"), scene_record(rec));
        if (options.render) {
          Rng render_rng(derive_seed(options.seed, {kRenderStream, static_cast<std::uint64_t>(rec.task),
                                                    static_cast<std::uint64_t>(rec.split),
                                                    static_cast<std::uint64_t>(rec.label),
                                                    static_cast<std::uint64_t>(i)}));
          const auto png = render(rec.scene, render_rng);
          add(index_name(i, ".png"), std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
        }
      });
  manifest.content_digest = content.hex();
  write_file(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

Dataset sample_dataset(const RuleSpec& spec, const GenerateOptions& options) {
  require_valid(spec);
  Dataset ds;
  ds.spec = spec;
  ds.manifest.seed = options.seed;
  ds.manifest.mode = options.mode;
  ds.manifest.variant = spec.variant;
  ds.manifest.task_count = spec.task_count();
  ds.manifest.deduplicated = options.dedup;
  ds.manifest.spec_digest = sha256_hex(spec.source.empty() ? serialize_rule_spec(spec) : spec.source);
  ds.scenes.resize(static_cast<std::size_t>(spec.task_count()) + 1);
  generate_scenes(
      spec, options,
      [&](int task, Split split, int label, int n) { ds.manifest.counts.push_back({task, split, label, n}); },
      [&](int, const LabeledScene& rec) { ds.scenes[rec.task][static_cast<int>(rec.split)].push_back(rec); });
  return ds;
}

namespace {

struct LoadedHeader {
  RuleSpec spec;
  DatasetManifest manifest;
  std::string spec_bytes;
};

LoadedHeader load_header(const fs::path& dir) {
  LoadedHeader h;
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json mj;
  try {
    mj = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("format", manifest_path.string() + ": not valid JSON (" + e.what() + ")");
  }
  h.manifest = DatasetManifest::from_json(mj);
  h.spec_bytes = read_file(dir / "spec.json");
  h.spec = parse_rule_spec(h.spec_bytes);
  if (h.spec.task_count() != h.manifest.task_count) {
    throw Error("format", "manifest task_count disagrees with spec.json");
  }
  return h;
}

std::vector<fs::path> record_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

VerifyReport verify(const fs::path& dataset_dir) {
  const LoadedHeader h = load_header(dataset_dir);
  const auto tasks = compile(h.spec);
  VerifyReport report;

  if (sha256_hex(h.spec_bytes) != h.manifest.spec_digest) {
    report.violations.push_back({dataset_dir / "spec.json", {"spec digest does not match manifest"}});
  }

  for (const auto& c : h.manifest.counts) {
    const fs::path dir = dataset_dir / subset_dir(c.task, c.split, c.label);
    const auto files = record_files(dir);
    if (static_cast<int>(files.size()) != c.count) {
      report.violations.push_back({dir, {"expected " + std::to_string(c.count) + " scene files, found " +
                                         std::to_string(files.size())}});
    }
    for (const auto& file : files) {
      ++report.files_checked;
      const ParsedRecord rec = parse_record(read_file(file), file.string(), h.spec.task_count());
      const LabeledScene& s = rec.scene;
      std::vector<std::string> reasons;
      if (!rec.canonical_order) reasons.push_back("objects are not in canonical order");
      if (s.task != c.task) reasons.push_back("task " + std::to_string(s.task) + " stored under t" + std::to_string(c.task));
      if (s.split != c.split) reasons.push_back("split '" + std::string(to_string(s.split)) + "' stored under " + std::string(to_string(c.split)));
      if (s.label != c.label) reasons.push_back("label " + std::to_string(s.label) + " stored under " + std::string(label_dir(c.label)));
      const auto& task = tasks.at(static_cast<std::size_t>(s.task));
      const Predicate& defining = s.label == 1 ? task.positive : task.negative;
      if (!eval_scene(defining, s.scene)) {
        reasons.push_back("scene violates the defining predicate " + to_string(defining));
      }
      for (int i = 0; i < h.spec.task_count(); ++i) {
        if (s.confounders_present[i] != eval_scene(h.spec.confounders[i], s.scene)) {
          reasons.push_back("confounders_present[" + std::to_string(i) + "] is wrong");
        }
      }
      if (!reasons.empty()) report.violations.push_back({file, std::move(reasons)});
    }
  }
  return report;
}

Dataset load_dataset(const fs::path& dataset_dir) {
  LoadedHeader h = load_header(dataset_dir);
  Dataset ds;
  ds.root = dataset_dir;
  ds.spec = std::move(h.spec);
  ds.manifest = std::move(h.manifest);
  ds.scenes.resize(static_cast<std::size_t>(ds.spec.task_count()) + 1);
  for (int task = 0; task <= ds.spec.task_count(); ++task) {
    for (Split split : kSplits) {
      auto& out = ds.scenes[task][static_cast<int>(split)];
      for (int label : kLabelOrder) {
        for (const auto& file : record_files(dataset_dir / subset_dir(task, split, label))) {
          out.push_back(parse_record(read_file(file), file.string(), ds.spec.task_count()).scene);
        }
      }
    }
  }
  return ds;
}

}  // namespace concon
