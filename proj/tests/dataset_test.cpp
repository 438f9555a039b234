#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "concon/dataset.hpp"
#include "concon/error.hpp"
#include "concon/model_check.hpp"
#include "support.hpp"

namespace concon {
namespace {

namespace fs = std::filesystem;
using testing::default_spec;
using testing::TempDir;

RuleSpec small_spec(Variant v) {
  RuleSpec s = default_spec(v);
  s.counts = {20, 5, 5};
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Sampling, UniformScenesSatisfyThePredicate) {
  Rng rng(3);
  const Predicate p = testing::ground_truth() && !exists(Color::blue);
  for (const Scene& s : sample_scenes(p, 500, rng, SamplingMode::uniform)) EXPECT_TRUE(eval_scene(p, s));
}

TEST(Sampling, SlotScenesSatisfyThePredicate) {
  Rng rng(4);
  for (Variant v : {Variant::strict, Variant::disjoint}) {
    for (const auto& task : compile(default_spec(v))) {
      for (const Scene& s : sample_scenes(task.positive, 200, rng, SamplingMode::slot)) {
        EXPECT_TRUE(eval_scene(task.positive, s));
      }
      for (const Scene& s : sample_scenes(task.negative, 200, rng, SamplingMode::slot)) {
        EXPECT_TRUE(eval_scene(task.negative, s));
      }
    }
  }
}

// Uniform over the satisfying set: the share of red scenes among blue ones
// matches the exact ratio of model counts.
TEST(Sampling, UniformMatchesExactConditionalFrequency) {
  const Predicate blue = exists(Color::blue);
  const double p = static_cast<double>(model_count(blue && exists(Color::red))) / static_cast<double>(model_count(blue));
  const std::size_t n = 20000;
  Rng rng(5);
  std::size_t hits = 0;
  for (const Scene& s : sample_scenes(blue, n, rng, SamplingMode::uniform)) hits += eval_scene(exists(Color::red), s);
  const double sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(hits) / n, p, 5 * sigma);
}

TEST(Sampling, UnsatisfiableIsPrecondition) {
  Rng rng(1);
  const Predicate never = exists(Color::red) && !exists(Color::red);
  for (SamplingMode m : {SamplingMode::uniform, SamplingMode::slot}) {
    try {
      sample_scenes(never, 1, rng, m);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "precondition");
    }
  }
}

TEST(Generate, TreeVerifiesAndRerunsAreByteIdentical) {
  TempDir tmp("concon_dataset");
  const RuleSpec spec = small_spec(Variant::strict);
  const auto a = generate(spec, {7}, tmp.path() / "a");
  const auto b = generate(spec, {7}, tmp.path() / "b");
  const auto c = generate(spec, {8}, tmp.path() / "c");
  EXPECT_EQ(a.content_digest, b.content_digest);
  EXPECT_NE(a.content_digest, c.content_digest);
  EXPECT_EQ(read_file(tmp.path() / "a" / "manifest.json"), read_file(tmp.path() / "b" / "manifest.json"));
  EXPECT_EQ(read_file(tmp.path() / "a" / "t2" / "val" / "neg" / "000003.json"),
            read_file(tmp.path() / "b" / "t2" / "val" / "neg" / "000003.json"));

  EXPECT_EQ(a.total_scenes(), 4 * 60);
  EXPECT_EQ(a.scenes_in_task(1), 60);
  EXPECT_EQ(a.task_count, 3);
  EXPECT_EQ(a.tool_version, kToolVersion);
  const auto report = verify(tmp.path() / "a");
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.files_checked, 240u);
}

TEST(Generate, ManifestRoundTrip) {
  TempDir tmp("concon_manifest");
  const auto m = generate(small_spec(Variant::disjoint), {2, SamplingMode::slot}, tmp.path());
  const auto back = DatasetManifest::from_json(nlohmann::json::parse(read_file(tmp.path() / "manifest.json")));
  EXPECT_EQ(back.to_json().dump(), m.to_json().dump());
  EXPECT_EQ(back.mode, SamplingMode::slot);
  EXPECT_EQ(back.variant, Variant::disjoint);
}

TEST(Generate, InMemorySampleMatchesTheTree) {
  TempDir tmp("concon_memory");
  const RuleSpec spec = small_spec(Variant::disjoint);
  generate(spec, {5}, tmp.path());
  const Dataset disk = load_dataset(tmp.path());
  const Dataset mem = sample_dataset(spec, {5});
  ASSERT_EQ(disk.scenes.size(), mem.scenes.size());
  for (std::size_t t = 0; t < disk.scenes.size(); ++t) {
    for (int s = 0; s < 3; ++s) {
      ASSERT_EQ(disk.scenes[t][s].size(), mem.scenes[t][s].size());
      for (std::size_t i = 0; i < disk.scenes[t][s].size(); ++i) {
        EXPECT_EQ(scene_record(disk.scenes[t][s][i]), scene_record(mem.scenes[t][s][i]));
      }
    }
  }
  EXPECT_EQ(disk.manifest.spec_digest, mem.manifest.spec_digest);
}

TEST(Generate, LabelsAndConfounderFlags) {
  const RuleSpec spec = small_spec(Variant::strict);
  const Dataset d = sample_dataset(spec, {1});
  const auto tasks = compile(spec);
  for (int t = 0; t <= 3; ++t) {
    for (Split split : kSplits) {
      const auto& subset = d.subset(t, split);
      ASSERT_EQ(subset.size(), 2u * static_cast<std::size_t>(split == Split::train ? 20 : 5));
      for (const auto& s : subset) {
        EXPECT_TRUE(eval_scene(s.label ? tasks[t].positive : tasks[t].negative, s.scene));
        ASSERT_EQ(s.confounders_present.size(), 3u);
        for (int i = 0; i < 3; ++i) EXPECT_EQ(s.confounders_present[i], eval_scene(spec.confounders[i], s.scene));
      }
    }
  }
}

TEST(Generate, DedupKeepsScenesDistinct) {
  RuleSpec s = small_spec(Variant::strict);
  s.counts = {200, 50, 50};
  const Dataset d = sample_dataset(s, {3, SamplingMode::uniform, false, true});
  std::set<std::uint32_t> ranks;
  std::size_t n = 0;
  for (const auto& task : d.scenes) {
    for (const auto& split : task) {
      for (const auto& sc : split) {
        ranks.insert(scene_rank(sc.scene));
        ++n;
      }
    }
  }
  EXPECT_EQ(ranks.size(), n);
}

TEST(Generate, InvalidSpecIsValidationError) {
  TempDir tmp("concon_invalid");
  RuleSpec s = small_spec(Variant::strict);
  s.confounders[0] = !exists(Shape::sphere);
  try {
    generate(s, {}, tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "validation");
  }
}

TEST(Generate, RenderWritesPngs) {
  TempDir tmp("concon_render");
  RuleSpec s = small_spec(Variant::strict);
  s.counts = {2, 1, 1};
  const auto m = generate(s, {9, SamplingMode::uniform, true}, tmp.path());
  EXPECT_TRUE(m.rendered);
  const std::string png = read_file(tmp.path() / "t1" / "train" / "pos" / "000000.png");
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  EXPECT_TRUE(verify(tmp.path()).ok());
}

TEST(Verify, FlagsTamperedFiles) {
  TempDir tmp("concon_tamper");
  const RuleSpec spec = small_spec(Variant::strict);
  generate(spec, {4}, tmp.path());
  const fs::path victim = tmp.path() / "t1" / "train" / "pos" / "000000.json";
  LabeledScene rec = parse_scene_record(read_file(victim), victim.string(), 3);
  // A scene without spheres violates g; its flags now disagree too.
  const std::array<ObjectType, 4> cubes{0, 0, 0, 0};
  rec.scene = Scene::from_types(cubes);
  std::ofstream(victim, std::ios::binary) << scene_record(rec);
  const auto report = verify(tmp.path());
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].file.filename(), "000000.json");
  EXPECT_GE(report.violations[0].reasons.size(), 1u);
}

TEST(Verify, MissingFieldIsFormatError) {
  TempDir tmp("concon_format");
  generate(small_spec(Variant::strict), {4}, tmp.path());
  const fs::path victim = tmp.path() / "t0" / "test" / "neg" / "000001.json";
  auto j = nlohmann::json::parse(read_file(victim));
  j.erase("confounders_present");
  std::ofstream(victim, std::ios::binary) << j.dump() << "\n";
  try {
    verify(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "format");
    EXPECT_NE(std::string(e.what()).find("confounders_present"), std::string::npos) << e.what();
  }
}

TEST(Verify, SpecDigestMismatch) {
  TempDir tmp("concon_digest");
  generate(small_spec(Variant::strict), {4}, tmp.path());
  std::ofstream(tmp.path() / "spec.json", std::ios::app) << " ";
  const auto report = verify(tmp.path());
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].file.filename(), "spec.json");
}

TEST(SceneRecord, RoundTrip) {
  LabeledScene s;
  const std::array<ObjectType, 4> t{1, 30, 30, 90};
  s.scene = Scene::from_types(t);
  s.label = 1;
  s.task = 2;
  s.split = Split::val;
  s.confounders_present = {true, false, true};
  const std::string text = scene_record(s);
  EXPECT_EQ(text.back(), '\n');
  const LabeledScene back = parse_scene_record(text, "x", 3);
  EXPECT_EQ(scene_record(back), text);
}

}  // namespace
}  // namespace concon
