#include "concon/task.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "concon/error.hpp"

namespace concon {
namespace {

struct NamedPart {
  std::string name;
  Predicate pred;
};

// Conjuncts of p_t / n_t, labelled by their role in the rule spec.
std::vector<NamedPart> conjuncts(const RuleSpec& spec, int t, bool positive) {
  const int T = spec.task_count();
  std::vector<NamedPart> parts;
  const auto& g = spec.ground_truth;
  auto c = [&](int i) { return "c" + std::to_string(i); };
  if (t == 0) {
    parts.push_back(positive ? NamedPart{"g", g} : NamedPart{"not g", !g});
    return parts;
  }
  if (positive) {
    parts.push_back({"g", g});
    parts.push_back({c(t), spec.confounders[t - 1]});
    if (spec.variant == Variant::disjoint) {
      for (int i = 1; i <= T; ++i) {
        if (i != t) parts.push_back({"not " + c(i), !spec.confounders[i - 1]});
      }
    }
  } else {
    parts.push_back({"not g", !g});
    if (spec.variant == Variant::strict) {
      parts.push_back({"not " + c(t), !spec.confounders[t - 1]});
    } else {
      for (int i = 1; i <= T; ++i) parts.push_back({"not " + c(i), !spec.confounders[i - 1]});
    }
  }
  return parts;
}

Predicate conjoin(const std::vector<NamedPart>& parts) {
  std::vector<Predicate> ps;
  for (const auto& p : parts) ps.push_back(p.pred);
  return Predicate::all_of(std::move(ps));
}

// Deletion-based minimal unsatisfiable subset of an unsatisfiable conjunction.
std::vector<NamedPart> minimal_conflict(std::vector<NamedPart> parts) {
  for (std::size_t i = 0; i < parts.size();) {
    auto trial = parts;
    trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
    if (!trial.empty() && model_count(conjoin(trial)) == 0) parts = std::move(trial);
    else ++i;
  }
  return parts;
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::strict ? "strict" : "disjoint"; }

Variant parse_variant(std::string_view s) {
  if (s == "strict") return Variant::strict;
  if (s == "disjoint") return Variant::disjoint;
  throw Error("format", "variant must be 'strict' or 'disjoint', got '" + std::string(s) + "'");
}

RuleSpec parse_rule_spec(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("format", std::string("rule spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error("format", "rule spec must be a JSON object");

  static const std::set<std::string> known{"name", "ground_truth", "confounders", "variant", "counts"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw Error("format", "unknown rule spec key '" + key + "'");
  }
  for (const char* required : {"ground_truth", "confounders", "variant"}) {
    if (!doc.contains(required)) throw Error("format", std::string("missing rule spec key '") + required + "'");
  }

  RuleSpec spec;
  spec.source = std::string(text);
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) throw Error("format", "'name' must be a string");
    spec.name = doc["name"].get<std::string>();
  }
  spec.ground_truth = predicate_from_json(doc["ground_truth"]);
  if (!doc["confounders"].is_array()) throw Error("format", "'confounders' must be an array");
  for (const auto& c : doc["confounders"]) spec.confounders.push_back(predicate_from_json(c));
  if (!doc["variant"].is_string()) throw Error("format", "'variant' must be a string");
  spec.variant = parse_variant(doc["variant"].get<std::string>());

  if (doc.contains("counts")) {
    const auto& counts = doc["counts"];
    if (!counts.is_object()) throw Error("format", "'counts' must be an object");
    for (const auto& [key, val] : counts.items()) {
      if (!val.is_number_integer() || val.get<long long>() < 0) {
        throw Error("format", "count '" + key + "' must be a non-negative integer");
      }
      int n = val.get<int>();
      if (key == "train") spec.counts.train = n;
      else if (key == "val") spec.counts.val = n;
      else if (key == "test") spec.counts.test = n;
      else throw Error("format", "unknown counts key '" + key + "'");
    }
  }
  return spec;
}

RuleSpec load_rule_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot read rule spec " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_rule_spec(buf.str());
}

std::string serialize_rule_spec(const RuleSpec& spec) {
  nlohmann::ordered_json doc;
  if (!spec.name.empty()) doc["name"] = spec.name;
  doc["ground_truth"] = nlohmann::ordered_json::parse(to_json(spec.ground_truth).dump());
  doc["confounders"] = nlohmann::ordered_json::array();
  for (const auto& c : spec.confounders) doc["confounders"].push_back(nlohmann::ordered_json::parse(to_json(c).dump()));
  doc["variant"] = std::string(to_string(spec.variant));
  doc["counts"] = {{"train", spec.counts.train}, {"val", spec.counts.val}, {"test", spec.counts.test}};
  return doc.dump(2) + "\n";
}

std::vector<CompiledTask> compile(const RuleSpec& spec) {
  std::vector<CompiledTask> tasks;
  for (int t = 0; t <= spec.task_count(); ++t) {
    tasks.push_back({t, conjoin(conjuncts(spec, t, true)), conjoin(conjuncts(spec, t, false))});
  }
  return tasks;
}

std::vector<Diagnostic> validate(const RuleSpec& spec) {
  std::vector<Diagnostic> out;
  if (spec.confounders.empty()) {
    out.push_back({Diagnostic::Severity::error, "arity", "rule spec needs at least one confounder"});
    return out;
  }
  for (int t = 0; t <= spec.task_count(); ++t) {
    for (bool positive : {true, false}) {
      auto parts = conjuncts(spec, t, positive);
      if (model_count(conjoin(parts)) > 0) continue;
      std::string names;
      for (const auto& p : minimal_conflict(parts)) names += (names.empty() ? "" : ", ") + p.name;
      std::string set = (positive ? "positive" : "negative");
      out.push_back({Diagnostic::Severity::error, "unsatisfiable",
                     "task " + std::to_string(t) + " " + set + " set is empty: {" + names +
                         "} cannot hold together"});
    }
  }
  if (spec.variant == Variant::strict) {
    auto report = confounder_structure(spec.ground_truth, spec.confounders);
    if (!report.unique_solution) {
      std::string why;
      if (!report.exhaustive) why += "confounders are not exhaustive";
      if (report.jointly_satisfiable) why += std::string(why.empty() ? "" : "; ") + "confounders are jointly satisfiable";
      out.push_back({Diagnostic::Severity::warning, "non-unique",
                     "ground truth is not the unique joint solution (" + why + ")"});
    }
  }
  return out;
}

bool has_errors(std::span<const Diagnostic> diagnostics) {
  for (const auto& d : diagnostics) {
    if (d.severity == Diagnostic::Severity::error) return true;
  }
  return false;
}

}  // namespace concon
