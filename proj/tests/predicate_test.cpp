#include <gtest/gtest.h>

#include "concon/error.hpp"
#include "concon/predicate.hpp"
#include "support.hpp"

namespace concon {
namespace {

Scene scene_of(std::initializer_list<ObjectSpec> objs) {
  std::vector<ObjectSpec> v(objs);
  return Scene::canonicalize(v);
}

constexpr ObjectSpec kSmallRedCube{Shape::cube, Size::small, Material::rubber, Color::red};
constexpr ObjectSpec kLargeBlueSphere{Shape::sphere, Size::large, Material::metal, Color::blue};
constexpr ObjectSpec kSmallGreenCyl{Shape::cylinder, Size::small, Material::rubber, Color::green};

TEST(ObjectPredicate, MatchesAndTypes) {
  ObjectPredicate p;
  p.shape = Shape::cube;
  p.size = Size::small;
  EXPECT_TRUE(p.matches(kSmallRedCube));
  EXPECT_FALSE(p.matches(kLargeBlueSphere));
  EXPECT_EQ(p.literal_count(), 2);
  int n = 0;
  for (int t = 0; t < 96; ++t) n += p.types().test(t);
  EXPECT_EQ(n, 16);
  EXPECT_EQ(ObjectPredicate{}.literal_count(), 0);
}

TEST(ObjectPredicate, CompatibleAndMerged) {
  ObjectPredicate a, b, c;
  a.shape = Shape::cube;
  b.color = Color::red;
  c.shape = Shape::sphere;
  EXPECT_TRUE(a.compatible(b));
  EXPECT_FALSE(a.compatible(c));
  const auto m = a.merged(b);
  EXPECT_EQ(m.shape, Shape::cube);
  EXPECT_EQ(m.color, Color::red);
}

TEST(Predicate, EvalScene) {
  const Scene s = scene_of({kSmallRedCube, kSmallRedCube, kLargeBlueSphere, kSmallGreenCyl});
  EXPECT_TRUE(eval_scene(testing::ground_truth(), s));
  EXPECT_TRUE(eval_scene(exists(Color::blue), s));
  EXPECT_FALSE(eval_scene(exists(Color::yellow), s));
  EXPECT_FALSE(eval_scene(!exists(Color::blue), s));
  EXPECT_TRUE(eval_scene(exists(Color::yellow) || exists(Shape::cylinder), s));
  EXPECT_FALSE(eval_scene(Predicate::exactly_one({exists(Color::red), exists(Color::blue)}), s));
  EXPECT_TRUE(eval_scene(Predicate::exactly_one({exists(Color::red), exists(Color::cyan)}), s));
  EXPECT_TRUE(eval_scene(Predicate::top(), s));
  EXPECT_FALSE(eval_scene(Predicate::bottom(), s));
  // The literals of one atom must hold on the same object.
  EXPECT_FALSE(eval_scene(exists(Shape::sphere, Color::red), s));
}

TEST(Predicate, FactoriesCollapse) {
  const Predicate a = exists(Color::red);
  EXPECT_EQ(Predicate::all_of({a}).kind(), Predicate::Kind::exists);
  EXPECT_EQ(Predicate::all_of({}).kind(), Predicate::Kind::top);
  EXPECT_EQ(Predicate::any_of({}).kind(), Predicate::Kind::bottom);
  EXPECT_EQ(Predicate::exactly_one({}).kind(), Predicate::Kind::bottom);
}

TEST(Predicate, ToString) {
  EXPECT_EQ(to_string(testing::ground_truth()), "(E(sphere) & E(small cube))");
  EXPECT_EQ(to_string(!exists(Material::metal)), "!E(metal)");
}

TEST(Predicate, JsonRoundTrip) {
  const Predicate p = Predicate::any_of({testing::ground_truth(), !exists(Size::large, Color::cyan),
                                         Predicate::exactly_one({exists(Color::red), exists(Shape::cube)}),
                                         Predicate::top()});
  const auto j = to_json(p);
  EXPECT_EQ(to_json(predicate_from_json(j)), j);
  EXPECT_EQ(to_json(predicate_from_json(nlohmann::json::parse(j.dump()))), j);
  EXPECT_EQ(predicate_from_json(nlohmann::json(false)).kind(), Predicate::Kind::bottom);
}

TEST(Predicate, JsonFormatErrors) {
  const char* bad[] = {
      R"({"exists": {"shape": "pyramid"}})", R"({"exists": {"texture": "rough"}})", R"({"all_of": []})",
      R"({"maybe": {}})",                   R"({"exists": {"shape": 3}})",          R"([1, 2])",
      R"({"not": true, "all_of": []})",
  };
  for (const char* text : bad) {
    try {
      predicate_from_json(nlohmann::json::parse(text));
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "format") << text;
    }
  }
}

}  // namespace
}  // namespace concon
