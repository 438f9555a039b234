#include "concon/hypothesis.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <sstream>
#include <unordered_map>

#include "concon/error.hpp"
#include "concon/rng.hpp"

namespace concon {
namespace {

constexpr std::uint64_t kSampleSeed = 0x6879706f74686573ULL;
constexpr std::size_t kInitialSamples = 1024;
constexpr std::size_t kSampleCapacity = 4096;
constexpr std::uint64_t kTailMask =
    kSceneCount % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (kSceneCount % 64)) - 1;

void check_language(const HypothesisLanguage& lang) {
  if (lang.max_literals_per_atom < 1 || lang.max_literals_per_atom > 4 || lang.max_atoms < 1 ||
      lang.max_atoms > 4) {
    throw Error("range", "language bounds must lie in [1, 4] (got max_literals_per_atom=" +
                             std::to_string(lang.max_literals_per_atom) +
                             ", max_atoms=" + std::to_string(lang.max_atoms) + ")");
  }
}

int signed_mdl(const std::vector<SignedAtom>& lits, const std::vector<ObjectPredicate>& atoms) {
  int n = static_cast<int>(lits.size()) - 1;
  for (const auto& l : lits) n += atoms[l.atom].literal_count() + (l.negated ? 1 : 0);
  return n;
}

// Fixed set of scenes with one bit vector per language atom. Scenes can be
// appended up to the capacity given at construction.
class SampleGroup {
 public:
  SampleGroup(const std::vector<TypeMask>& atom_types, std::size_t capacity)
      : types_(&atom_types), stride_((capacity + 63) / 64), bits_(atom_types.size() * stride_, 0) {}

  bool full() const { return size_ == stride_ * 64; }
  std::size_t size() const { return size_; }

  void add(const Scene& scene) {
    if (full()) return;
    const TypeMask m = scene.mask();
    for (std::size_t a = 0; a < types_->size(); ++a) {
      if ((*types_)[a].intersects(m)) bits_[a * stride_ + size_ / 64] |= std::uint64_t{1} << (size_ % 64);
    }
    ++size_;
  }

  // Whether the clause labels every scene `expected`.
  bool all_equal(Junction j, std::span<const SignedAtom> lits, bool expected) const {
    const std::size_t used = (size_ + 63) / 64;
    for (std::size_t w = 0; w < used; ++w) {
      const std::uint64_t valid =
          (w + 1 < used || size_ % 64 == 0) ? ~std::uint64_t{0} : (std::uint64_t{1} << (size_ % 64)) - 1;
      std::uint64_t v = j == Junction::all_of ? ~std::uint64_t{0} : 0;
      for (const auto& l : lits) {
        std::uint64_t x = bits_[l.atom * stride_ + w];
        if (l.negated) x = ~x;
        v = j == Junction::all_of ? (v & x) : (v | x);
      }
      if (expected ? (~v & valid) != 0 : (v & valid) != 0) return false;
    }
    return true;
  }

 private:
  const std::vector<TypeMask>* types_;
  std::size_t stride_;
  std::vector<std::uint64_t> bits_;
  std::size_t size_ = 0;
};

struct TaskFilter {
  std::shared_ptr<const SceneSet> positive;
  std::shared_ptr<const SceneSet> negative;
  SampleGroup pos;
  SampleGroup neg;
};

struct Evaluation {
  std::uint64_t hash = 0;
  std::uint32_t consistent = 0;  // bit t-1 set when consistent with task t
};

class Analyzer {
 public:
  Analyzer(const RuleSpec& spec, const HypothesisLanguage& lang, ConsistencyMode mode, const Dataset* data)
      : atoms_(language_atoms(lang)), mode_(mode) {
    for (const auto& a : atoms_) types_.push_back(a.types());
    for (const auto& t : types_) atom_sets_.push_back(atom_set(t));

    const auto tasks = compile(spec);
    for (int t = 1; t <= spec.task_count(); ++t) {
      const std::size_t cap = mode == ConsistencyMode::exact ? kSampleCapacity
                                                             : data->subset(t, Split::train).size();
      TaskFilter f{satisfying_set(tasks[t].positive), satisfying_set(tasks[t].negative),
                   SampleGroup(types_, cap), SampleGroup(types_, cap)};
      if (mode == ConsistencyMode::exact) {
        Rng rng(derive_seed(kSampleSeed, {static_cast<std::uint64_t>(t)}));
        for (int label : {1, 0}) {
          const auto ranks = satisfying_ranks(label ? tasks[t].positive : tasks[t].negative);
          auto& group = label ? f.pos : f.neg;
          for (std::size_t i = 0; i < kInitialSamples; ++i) {
            group.add(scene_unrank((*ranks)[rng.uniform_index(ranks->size())]));
          }
        }
      } else {
        for (const auto& s : data->subset(t, Split::train)) (s.label ? f.pos : f.neg).add(s.scene);
      }
      filters_.push_back(std::move(f));
    }
  }

  const std::vector<ObjectPredicate>& atoms() const { return atoms_; }
  int task_count() const { return static_cast<int>(filters_.size()); }

  // nullopt when the clause is consistent with no task.
  std::optional<Evaluation> evaluate(const Hypothesis& h) {
    std::uint32_t candidates = 0;
    for (std::size_t t = 0; t < filters_.size(); ++t) {
      const auto& f = filters_[t];
      if (f.pos.all_equal(h.junction, h.literals, true) && f.neg.all_equal(h.junction, h.literals, false)) {
        candidates |= 1U << t;
      }
    }
    if (candidates == 0) return std::nullopt;

    // One pass over the full bitmaps: model-set hash plus, in exact mode,
    // the consistency check for every candidate task.
    const bool exact = mode_ == ConsistencyMode::exact;
    std::uint32_t alive = candidates;
    std::vector<std::pair<std::size_t, std::size_t>> failure(filters_.size(), {SIZE_MAX, 0});
    std::uint64_t hash = 0x84222325cbf29ce4ULL;
    std::array<const std::uint64_t*, 4> src{};
    for (std::size_t i = 0; i < h.literals.size(); ++i) src[i] = atom_sets_[h.literals[i].atom]->words().data();
    const bool conj = h.junction == Junction::all_of;

    for (std::size_t w = 0; w < SceneSet::kWords; ++w) {
      std::uint64_t v = conj ? ~std::uint64_t{0} : 0;
      for (std::size_t i = 0; i < h.literals.size(); ++i) {
        const std::uint64_t x = h.literals[i].negated ? ~src[i][w] : src[i][w];
        v = conj ? (v & x) : (v | x);
      }
      if (w + 1 == SceneSet::kWords) v &= kTailMask;
      hash = mix64(hash ^ v);
      if (!exact) continue;
      for (std::uint32_t rest = alive; rest != 0; rest &= rest - 1) {
        const int t = std::countr_zero(rest);
        const auto& f = filters_[t];
        const std::uint64_t missed = f.positive->words()[w] & ~v;
        const std::uint64_t wrong = f.negative->words()[w] & v;
        if (missed != 0 || wrong != 0) {
          alive &= ~(1U << t);
          const std::uint64_t bits = missed != 0 ? missed : wrong;
          failure[t] = {w * 64 + static_cast<std::size_t>(std::countr_zero(bits)), missed != 0 ? 1 : 0};
        }
      }
      if (alive == 0) break;
    }

    if (exact) {
      // Refine the sample filters with the counterexamples found.
      for (std::size_t t = 0; t < filters_.size(); ++t) {
        if (failure[t].first == SIZE_MAX) continue;
        const Scene s = scene_unrank(static_cast<std::int64_t>(failure[t].first));
        (failure[t].second ? filters_[t].pos : filters_[t].neg).add(s);
      }
    }
    if (alive == 0) return std::nullopt;
    return Evaluation{hash, alive};
  }

 private:
  std::vector<ObjectPredicate> atoms_;
  std::vector<TypeMask> types_;
  std::vector<std::shared_ptr<const SceneSet>> atom_sets_;
  std::vector<TaskFilter> filters_;
  ConsistencyMode mode_;
};

void keep_smallest(std::unordered_map<std::uint64_t, Hypothesis>& best, std::uint64_t hash, const Hypothesis& h) {
  auto [it, inserted] = best.try_emplace(hash, h);
  if (!inserted && h < it->second) it->second = h;
}

std::vector<RankedHypothesis> ranked(const std::unordered_map<std::uint64_t, Hypothesis>& best,
                                     const std::vector<ObjectPredicate>& atoms) {
  std::vector<Hypothesis> hs;
  hs.reserve(best.size());
  for (const auto& [hash, h] : best) hs.push_back(h);
  std::sort(hs.begin(), hs.end());
  std::vector<RankedHypothesis> out;
  out.reserve(hs.size());
  for (const auto& h : hs) {
    Predicate p = to_predicate(h, atoms);
    out.push_back({p, to_string(p), h.mdl});
  }
  return out;
}

}  // namespace

bool operator<(const Hypothesis& a, const Hypothesis& b) {
  if (a.mdl != b.mdl) return a.mdl < b.mdl;
  if (a.literals.size() != b.literals.size()) return a.literals.size() < b.literals.size();
  if (a.junction != b.junction) return a.junction < b.junction;
  return a.literals < b.literals;
}

std::vector<ObjectPredicate> language_atoms(const HypothesisLanguage& lang) {
  check_language(lang);
  std::vector<ObjectPredicate> atoms;
  for (int n = 1; n <= lang.max_literals_per_atom; ++n) {
    for (unsigned subset = 1; subset < 16; ++subset) {
      if (std::popcount(subset) != n) continue;
      std::vector<Attribute> attrs;
      for (int a = 0; a < 4; ++a) {
        if (subset & (1U << a)) attrs.push_back(static_cast<Attribute>(a));
      }
      // Odometer over the chosen attributes, first attribute slowest.
      std::vector<int> values(attrs.size(), 0);
      while (true) {
        ObjectPredicate atom;
        for (std::size_t i = 0; i < attrs.size(); ++i) atom.set(attrs[i], values[i]);
        atoms.push_back(atom);
        int i = static_cast<int>(attrs.size()) - 1;
        while (i >= 0 && ++values[i] == kAttributeCardinality[static_cast<int>(attrs[i])]) values[i--] = 0;
        if (i < 0) break;
      }
    }
  }
  return atoms;
}

int description_length(const Predicate& pred) {
  switch (pred.kind()) {
    case Predicate::Kind::top:
    case Predicate::Kind::bottom: return 0;
    case Predicate::Kind::exists: return pred.atom().literal_count();
    case Predicate::Kind::negation: return 1 + description_length(pred.operands()[0]);
    default: {
      int n = static_cast<int>(pred.operands().size()) - 1;
      for (const auto& op : pred.operands()) n += description_length(op);
      return n;
    }
  }
}

Predicate to_predicate(const Hypothesis& h, const std::vector<ObjectPredicate>& atoms) {
  std::vector<Predicate> ops;
  for (const auto& l : h.literals) {
    Predicate p = Predicate::exists(atoms.at(l.atom));
    ops.push_back(l.negated ? !p : p);
  }
  return h.junction == Junction::all_of ? Predicate::all_of(std::move(ops)) : Predicate::any_of(std::move(ops));
}

void enumerate_hypotheses(const HypothesisLanguage& lang, const std::function<void(const Hypothesis&)>& visit) {
  const auto atoms = language_atoms(lang);
  const int n = static_cast<int>(atoms.size());
  Hypothesis h;
  for (int k = 1; k <= lang.max_atoms && k <= n; ++k) {
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      h.literals.assign(k, {});
      for (unsigned signs = 0; signs < (1U << k); ++signs) {
        for (int i = 0; i < k; ++i) h.literals[i] = {static_cast<std::uint16_t>(idx[i]), ((signs >> i) & 1U) != 0};
        h.mdl = signed_mdl(h.literals, atoms);
        h.junction = Junction::all_of;
        visit(h);
        if (k > 1) {
          h.junction = Junction::any_of;
          visit(h);
        }
      }
      int i = k - 1;
      while (i >= 0 && idx[i] == n - k + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
}

std::uint64_t hypothesis_count(const HypothesisLanguage& lang) {
  const auto n = static_cast<std::uint64_t>(language_atoms(lang).size());
  std::uint64_t total = 0;
  std::uint64_t choose = 1;
  for (std::uint64_t k = 1; k <= static_cast<std::uint64_t>(lang.max_atoms) && k <= n; ++k) {
    choose = choose * (n - k + 1) / k;
    total += choose * (std::uint64_t{1} << k) * (k == 1 ? 1 : 2);
  }
  return total;
}

std::string_view to_string(ConsistencyMode m) { return m == ConsistencyMode::exact ? "exact" : "empirical"; }

ConsistencyMode parse_consistency_mode(std::string_view s) {
  if (s == "exact") return ConsistencyMode::exact;
  if (s == "empirical") return ConsistencyMode::empirical;
  throw Error("format", "unknown consistency mode '" + std::string(s) + "' (expected exact or empirical)");
}

bool consistent(const Predicate& h, std::span<const CompiledTask> tasks, ConsistencyMode mode, const Dataset* data) {
  if (mode == ConsistencyMode::exact) {
    const auto hs = satisfying_set(h);
    for (const auto& t : tasks) {
      if (!satisfying_set(t.positive)->subset_of(*hs)) return false;
      if (!(*satisfying_set(t.negative) & *hs).empty()) return false;
    }
    return true;
  }
  if (data == nullptr) throw Error("precondition", "empirical consistency needs a dataset");
  for (const auto& t : tasks) {
    if (t.index >= static_cast<int>(data->scenes.size())) {
      throw Error("precondition", "dataset has no task " + std::to_string(t.index));
    }
    for (const auto& s : data->subset(t.index, Split::train)) {
      if (eval_scene(h, s.scene) != (s.label == 1)) return false;
    }
  }
  return true;
}

AnalysisReport analyze(const RuleSpec& spec, const HypothesisLanguage& lang, ConsistencyMode mode, const Dataset* data) {
  check_language(lang);
  if (has_errors(validate(spec))) throw Error("validation", "rule spec has validation errors");
  if (mode == ConsistencyMode::empirical) {
    if (data == nullptr) throw Error("precondition", "empirical analysis needs a dataset");
    if (data->task_count() != spec.task_count()) {
      throw Error("precondition", "dataset has " + std::to_string(data->task_count()) + " tasks, spec has " +
                                      std::to_string(spec.task_count()));
    }
  }

  AnalysisReport report;
  report.variant = spec.variant;
  report.language = lang;
  report.mode = mode;

  Analyzer analyzer(spec, lang, mode, data);
  const int T = analyzer.task_count();
  const std::uint32_t all_tasks = (1U << T) - 1;
  std::vector<std::unordered_map<std::uint64_t, Hypothesis>> per_task(T);
  std::unordered_map<std::uint64_t, Hypothesis> joint;

  enumerate_hypotheses(lang, [&](const Hypothesis& h) {
    ++report.enumerated;
    const auto e = analyzer.evaluate(h);
    if (!e) return;
    for (int t = 0; t < T; ++t) {
      if (e->consistent & (1U << t)) keep_smallest(per_task[t], e->hash, h);
    }
    if (e->consistent == all_tasks) keep_smallest(joint, e->hash, h);
  });

  for (const auto& m : per_task) report.per_task.push_back(ranked(m, analyzer.atoms()));
  report.joint = ranked(joint, analyzer.atoms());
  for (const auto& h : report.joint) {
    if (h.mdl != report.joint.front().mdl) break;
    report.mdl_minimal_joint.push_back(h);
  }

  const auto tasks = compile(spec);
  const std::span<const CompiledTask> confounded(tasks.begin() + 1, tasks.end());
  const Bounds bounds = joint_bounds(spec.variant, spec.ground_truth, spec.confounders);
  const auto g_set = satisfying_set(spec.ground_truth);
  for (const auto& h : report.mdl_minimal_joint) {
    if (*satisfying_set(h.predicate) == *g_set) report.ground_truth_mdl_minimal = true;
  }

  const std::pair<std::string, Predicate> named[] = {{"g", spec.ground_truth},
                                                     {"any confounder", Predicate::any_of(spec.confounders)}};
  for (const auto& [name, pred] : named) {
    BoundCheck c;
    c.name = name;
    c.predicate = pred;
    c.text = to_string(pred);
    c.mdl = description_length(pred);
    const Implication result = satisfies_bounds(pred, bounds);
    c.within_bounds = result.holds;
    c.counterexample = result.counterexample;
    c.jointly_consistent = consistent(pred, confounded, mode, data);
    report.bound_checks.push_back(std::move(c));
  }
  return report;
}

std::string format_report(const AnalysisReport& report) {
  std::ostringstream out;
  out << "variant: " << to_string(report.variant) << '\n'
      << "mode: " << to_string(report.mode) << '\n'
      << "language: max_literals_per_atom=" << report.language.max_literals_per_atom
      << " max_atoms=" << report.language.max_atoms << '\n'
      << "hypotheses enumerated: " << report.enumerated << "\n\n";

  out << "[bound checks]\n";
  for (const auto& c : report.bound_checks) {
    out << c.name << ": " << c.text << " (mdl " << c.mdl << ")\n"
        << "  within joint bounds: " << (c.within_bounds ? "yes" : "no") << '\n';
    if (c.counterexample) out << "  counterexample: " << describe(*c.counterexample) << '\n';
    out << "  jointly consistent: " << (c.jointly_consistent ? "yes" : "no") << '\n';
  }

  out << "\n[joint] " << report.joint.size() << " distinct hypotheses\n";
  out << "ground truth among mdl-minimal: " << (report.ground_truth_mdl_minimal ? "yes" : "no") << '\n';
  for (const auto& h : report.joint) out << "  " << h.mdl << "  " << h.text << '\n';

  for (std::size_t t = 0; t < report.per_task.size(); ++t) {
    out << "\n[task " << t + 1 << "] " << report.per_task[t].size() << " distinct hypotheses\n";
    for (const auto& h : report.per_task[t]) out << "  " << h.mdl << "  " << h.text << '\n';
  }
  return out.str();
}

}  // namespace concon
