#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "concon/rng.hpp"
#include "concon/scene.hpp"
#include "concon/task.hpp"

namespace concon {

inline constexpr const char* kToolVersion = "0.1.0";

enum class SamplingMode { uniform, slot };
enum class Split { train, val, test };

std::string_view to_string(SamplingMode m);
SamplingMode parse_sampling_mode(std::string_view s);
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};

struct LabeledScene {
  Scene scene;
  int label = 0;  // 1 = positive, 0 = negative
  int task = 0;   // 0 = unconfounded
  Split split = Split::train;
  std::vector<bool> confounders_present;  // one flag per confounder
};

// Ranks of all scenes satisfying pred, ascending; cached per predicate.
std::shared_ptr<const std::vector<std::uint32_t>> satisfying_ranks(const Predicate& pred);

// n scenes satisfying pred.
//   uniform: i.i.d. uniform over the satisfying set (with replacement).
//   slot:    pins one object per required existence atom of the top-level
//            conjunction (reusing a compatible pinned object at random), fills
//            free attributes uniformly and rejects until pred holds.
// Throws Error("precondition") for an unsatisfiable pred and Error("stall")
// after 10^6 consecutive slot-mode rejections.
std::vector<Scene> sample_scenes(const Predicate& pred, std::size_t n, Rng& rng, SamplingMode mode);

struct GenerateOptions {
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::uniform;
  bool render = false;
  bool dedup = false;  // drop exact multiset repeats within the run
};

struct SubsetCount {
  int task = 0;
  Split split = Split::train;
  int label = 0;
  int count = 0;
};

struct DatasetManifest {
  std::string spec_digest;     // SHA-256 of the rule-spec bytes
  std::string content_digest;  // SHA-256 over every scene file (path + bytes)
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::uniform;
  Variant variant = Variant::strict;
  int task_count = 0;
  bool rendered = false;
  bool deduplicated = false;
  std::string tool_version = kToolVersion;
  std::vector<SubsetCount> counts;

  int total_scenes() const;
  int scenes_in_task(int task) const;
  nlohmann::ordered_json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

// "t{K}/{split}/{pos|neg}"
std::filesystem::path subset_dir(int task, Split split, int label);

std::string scene_record(const LabeledScene& s);
// Throws Error("format") naming the offending field and `where`.
LabeledScene parse_scene_record(std::string_view text, const std::string& where, int task_count);

// Writes spec.json, manifest.json and t{K}/{split}/{pos|neg}/{index:06}.json.
// Throws Error("validation") if validate(spec) reports errors and
// Error("io") when out_dir is unwritable.
DatasetManifest generate(const RuleSpec& spec, const GenerateOptions& options,
                         const std::filesystem::path& out_dir);

struct Violation {
  std::filesystem::path file;
  std::vector<std::string> reasons;
};

struct VerifyReport {
  std::size_t files_checked = 0;
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Re-checks every scene file against its defining predicate and its
// confounder flags. Format problems throw Error("format").
VerifyReport verify(const std::filesystem::path& dataset_dir);

// In-memory view of a generated dataset.
struct Dataset {
  std::filesystem::path root;
  RuleSpec spec;
  DatasetManifest manifest;
  // scenes[task][split] lists positives then negatives, each in file order.
  std::vector<std::array<std::vector<LabeledScene>, 3>> scenes;

  int task_count() const { return spec.task_count(); }
  const std::vector<LabeledScene>& subset(int task, Split split) const {
    return scenes.at(task)[static_cast<int>(split)];
  }
};

Dataset load_dataset(const std::filesystem::path& dataset_dir);

// The scenes generate() would write for (spec, options), kept in memory.
// Rendering is ignored; the content digest is left empty.
Dataset sample_dataset(const RuleSpec& spec, const GenerateOptions& options);

}  // namespace concon
