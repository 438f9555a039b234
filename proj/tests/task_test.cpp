#include <gtest/gtest.h>

#include "concon/error.hpp"
#include "concon/task.hpp"
#include "support.hpp"

namespace concon {
namespace {

using testing::ground_truth;
using testing::default_spec;

TEST(RuleSpec, BundledFilesMatchTheDefaultRules) {
  for (auto [file, variant] : {std::pair{"concon_paper.json", Variant::strict},
                               std::pair{"concon_paper_disjoint.json", Variant::disjoint}}) {
    const RuleSpec s = load_rule_spec(testing::bundled_spec(file));
    EXPECT_EQ(s.variant, variant);
    EXPECT_EQ(s.counts, SplitCounts{});
    EXPECT_TRUE(equivalent(s.ground_truth, ground_truth()));
    ASSERT_EQ(s.task_count(), 3);
    const auto expected = default_spec(variant).confounders;
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(equivalent(s.confounders[i], expected[i]));
    EXPECT_FALSE(s.source.empty());
  }
}

TEST(RuleSpec, StrictSchema) {
  const char* bad[] = {
      R"({"ground_truth": true, "confounders": [true], "variant": "strict", "colour": 1})",
      R"({"confounders": [true], "variant": "strict"})",
      R"({"ground_truth": true, "confounders": [true], "variant": "loose"})",
      R"({"ground_truth": true, "confounders": {}, "variant": "strict"})",
      R"({"ground_truth": true, "confounders": [true], "variant": "strict", "counts": {"train": -1}})",
      R"({"ground_truth": true, "confounders": [true], "variant": "strict", "counts": {"dev": 3}})",
      R"(not json)",
  };
  for (const char* text : bad) {
    try {
      parse_rule_spec(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "format") << text;
    }
  }
}

TEST(RuleSpec, SerializeRoundTrip) {
  RuleSpec s = default_spec(Variant::disjoint);
  s.counts = {10, 2, 3};
  const RuleSpec back = parse_rule_spec(serialize_rule_spec(s));
  EXPECT_EQ(back.name, s.name);
  EXPECT_EQ(back.variant, s.variant);
  EXPECT_EQ(back.counts, s.counts);
  EXPECT_EQ(to_json(back.ground_truth), to_json(s.ground_truth));
  EXPECT_EQ(serialize_rule_spec(back), serialize_rule_spec(s));
}

TEST(Compile, DefinitionsHold) {
  for (Variant v : {Variant::strict, Variant::disjoint}) {
    const RuleSpec spec = default_spec(v);
    const auto tasks = compile(spec);
    ASSERT_EQ(tasks.size(), 4u);
    EXPECT_TRUE(equivalent(tasks[0].positive, ground_truth()));
    EXPECT_TRUE(equivalent(tasks[0].negative, !ground_truth()));
    const auto& c = spec.confounders;
    for (int t = 1; t <= 3; ++t) {
      EXPECT_EQ(tasks[t].index, t);
      if (v == Variant::strict) {
        EXPECT_TRUE(equivalent(tasks[t].positive, ground_truth() && c[t - 1]));
        EXPECT_TRUE(equivalent(tasks[t].negative, !ground_truth() && !c[t - 1]));
      } else {
        std::vector<Predicate> pos{ground_truth(), c[t - 1]};
        for (int i = 0; i < 3; ++i) {
          if (i != t - 1) pos.push_back(!c[i]);
        }
        EXPECT_TRUE(equivalent(tasks[t].positive, Predicate::all_of(pos)));
        EXPECT_TRUE(equivalent(tasks[t].negative, !ground_truth() && !Predicate::any_of(c)));
      }
      // Every task is solved by g and by its own confounder.
      EXPECT_TRUE(implies(tasks[t].positive, ground_truth()).holds);
      EXPECT_TRUE(implies(tasks[t].positive, c[t - 1]).holds);
      EXPECT_TRUE(implies(tasks[t].negative, !c[t - 1]).holds);
    }
  }
}

TEST(Validate, PaperSpecs) {
  const auto strict = validate(default_spec(Variant::strict));
  EXPECT_FALSE(has_errors(strict));
  ASSERT_EQ(strict.size(), 1u);
  EXPECT_EQ(strict[0].code, "non-unique");
  EXPECT_EQ(strict[0].severity, Diagnostic::Severity::warning);
  EXPECT_TRUE(validate(default_spec(Variant::disjoint)).empty());
}

TEST(Validate, NamesTheConflictingConjuncts) {
  RuleSpec s = default_spec(Variant::strict);
  // c1 implied by g: the task-1 negative set !g & !c1 is fine, but a
  // confounder contradicting g empties the positive set.
  s.confounders[0] = !exists(Shape::sphere);
  const auto d = validate(s);
  ASSERT_TRUE(has_errors(d));
  EXPECT_EQ(d[0].code, "unsatisfiable");
  EXPECT_NE(d[0].message.find("task 1 positive"), std::string::npos) << d[0].message;
  EXPECT_NE(d[0].message.find("{g, c1}"), std::string::npos) << d[0].message;
}

TEST(Validate, DisjointNeedsRoomForEachConfounder) {
  RuleSpec s = default_spec(Variant::disjoint);
  s.confounders = {exists(Color::blue), exists(Color::blue) || exists(Color::red)};
  const auto d = validate(s);
  ASSERT_TRUE(has_errors(d));
  EXPECT_NE(d[0].message.find("{c1, not c2}"), std::string::npos) << d[0].message;
}

TEST(Validate, EmptyConfounders) {
  RuleSpec s = default_spec(Variant::strict);
  s.confounders.clear();
  const auto d = validate(s);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].code, "arity");
}

}  // namespace
}  // namespace concon
