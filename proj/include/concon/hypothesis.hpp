#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "concon/dataset.hpp"
#include "concon/model_check.hpp"
#include "concon/task.hpp"

namespace concon {

// Hypotheses are flat clauses: a single possibly-negated existence atom, or
// an all_of / any_of over 2..max_atoms possibly-negated atoms on distinct
// atoms. Atoms carry 1..max_literals_per_atom literals on distinct attributes.
struct HypothesisLanguage {
  int max_literals_per_atom = 2;
  int max_atoms = 3;
};

enum class Junction : std::uint8_t { all_of, any_of };

struct SignedAtom {
  std::uint16_t atom = 0;  // index into language_atoms()
  bool negated = false;
  friend auto operator<=>(const SignedAtom&, const SignedAtom&) = default;
};

struct Hypothesis {
  Junction junction = Junction::all_of;
  std::vector<SignedAtom> literals;  // ascending atom index
  int mdl = 0;

  // Sort key: (mdl, atom count, junction, literals).
  friend bool operator<(const Hypothesis& a, const Hypothesis& b);
  friend bool operator==(const Hypothesis& a, const Hypothesis& b) = default;
};

// Atoms of the language, ordered by literal count, then attribute values.
std::vector<ObjectPredicate> language_atoms(const HypothesisLanguage& lang);

// Attribute literals + binary connectives (an n-ary junction counts n - 1)
// + one per negation.
int description_length(const Predicate& pred);

Predicate to_predicate(const Hypothesis& h, const std::vector<ObjectPredicate>& atoms);

// Calls visit once per syntactic hypothesis in canonical order. Throws
// Error("range") unless 1 <= max_literals_per_atom <= 4 and 1 <= max_atoms <= 4.
void enumerate_hypotheses(const HypothesisLanguage& lang, const std::function<void(const Hypothesis&)>& visit);
std::uint64_t hypothesis_count(const HypothesisLanguage& lang);

enum class ConsistencyMode { exact, empirical };

std::string_view to_string(ConsistencyMode m);
ConsistencyMode parse_consistency_mode(std::string_view s);

// exact:     p_t <= h <= !n_t for every task;
// empirical: h labels every training scene of the given tasks correctly.
// Empirical mode without data throws Error("precondition").
bool consistent(const Predicate& h, std::span<const CompiledTask> tasks, ConsistencyMode mode,
                const Dataset* data = nullptr);

struct RankedHypothesis {
  Predicate predicate;
  std::string text;
  int mdl = 0;
};

struct BoundCheck {
  std::string name;
  Predicate predicate;
  std::string text;
  int mdl = 0;
  bool within_bounds = false;  // satisfies_bounds against the variant's joint bounds
  std::optional<Scene> counterexample;
  bool jointly_consistent = false;  // member of the joint consistent set (semantically)
};

struct AnalysisReport {
  Variant variant = Variant::strict;
  HypothesisLanguage language;
  ConsistencyMode mode = ConsistencyMode::exact;
  std::uint64_t enumerated = 0;
  // Semantically deduplicated, sorted by (mdl, canonical form).
  std::vector<std::vector<RankedHypothesis>> per_task;  // tasks 1..T
  std::vector<RankedHypothesis> joint;
  std::vector<RankedHypothesis> mdl_minimal_joint;
  bool ground_truth_mdl_minimal = false;
  std::vector<BoundCheck> bound_checks;  // "g", "any confounder"
};

// Throws Error("validation") if the spec has errors.
AnalysisReport analyze(const RuleSpec& spec, const HypothesisLanguage& lang, ConsistencyMode mode,
                       const Dataset* data = nullptr);

// Structured text: settings, bound checks, joint set, per-task sets.
std::string format_report(const AnalysisReport& report);

}  // namespace concon
