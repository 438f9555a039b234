#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "concon/model_check.hpp"
#include "concon/predicate.hpp"

namespace concon {

// Per-class sample counts for each split.
struct SplitCounts {
  int train = 3000;
  int val = 750;
  int test = 750;

  int per_class_total() const { return train + val + test; }
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct RuleSpec {
  std::string name;
  Predicate ground_truth;
  std::vector<Predicate> confounders;  // c_1 .. c_T
  Variant variant = Variant::strict;
  SplitCounts counts;
  // Bytes of the rule-spec document this spec was read from; the dataset
  // manifest records their SHA-256.
  std::string source;

  int task_count() const { return static_cast<int>(confounders.size()); }
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

// Strict schema: keys ground_truth, confounders, variant, counts, name.
// Unknown keys, missing required keys and malformed predicates throw
// Error("format").
RuleSpec parse_rule_spec(std::string_view text);
RuleSpec load_rule_spec(const std::filesystem::path& path);
// Canonical document for a programmatically built spec.
std::string serialize_rule_spec(const RuleSpec& spec);

struct CompiledTask {
  int index = 0;  // 0 = unconfounded, 1..T confounded
  Predicate positive;
  Predicate negative;
};

// Element 0 is the unconfounded pair (g, !g); element t is task t:
//   strict:   p_t = g & c_t,                  n_t = !g & !c_t
//   disjoint: p_t = g & c_t & !c_i (i != t),  n_t = !g & !c_1 & ... & !c_T
std::vector<CompiledTask> compile(const RuleSpec& spec);

struct Diagnostic {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  std::string code;
  std::string message;
};

// Never throws for domain problems; an empty error list means the spec can
// be generated.
std::vector<Diagnostic> validate(const RuleSpec& spec);
bool has_errors(std::span<const Diagnostic> diagnostics);

}  // namespace concon
