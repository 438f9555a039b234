#include "concon/model_check.hpp"

#include <bit>
#include <map>
#include <mutex>
#include <string>

#include "concon/error.hpp"
#include "concon/rng.hpp"

namespace concon {
namespace {

constexpr std::uint64_t kTailMask =
    (kSceneCount % 64) == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (kSceneCount % 64)) - 1;

std::mutex g_cache_mutex;

std::map<std::pair<std::uint64_t, std::uint64_t>, std::shared_ptr<const SceneSet>>& atom_cache() {
  static std::map<std::pair<std::uint64_t, std::uint64_t>, std::shared_ptr<const SceneSet>> cache;
  return cache;
}

constexpr std::size_t kPredicateCacheLimit = 256;

std::map<std::string, std::shared_ptr<const SceneSet>>& predicate_cache() {
  static std::map<std::string, std::shared_ptr<const SceneSet>> cache;
  return cache;
}

SceneSet compute(const Predicate& pred) {
  switch (pred.kind()) {
    case Predicate::Kind::top: return SceneSet::all();
    case Predicate::Kind::bottom: return SceneSet::none();
    case Predicate::Kind::exists: return *atom_set(pred.atom().types());
    case Predicate::Kind::negation: return ~compute(pred.operands()[0]);
    case Predicate::Kind::all_of: {
      SceneSet acc = SceneSet::all();
      for (const auto& p : pred.operands()) acc &= compute(p);
      return acc;
    }
    case Predicate::Kind::any_of: {
      SceneSet acc;
      for (const auto& p : pred.operands()) acc |= compute(p);
      return acc;
    }
    case Predicate::Kind::exactly_one: {
      SceneSet one, any;
      for (const auto& p : pred.operands()) {
        SceneSet c = compute(p);
        auto ow = one.words();
        auto aw = any.words();
        auto cw = c.words();
        for (std::size_t i = 0; i < SceneSet::kWords; ++i) {
          ow[i] = (ow[i] & ~cw[i]) | (~aw[i] & cw[i]);
          aw[i] |= cw[i];
        }
      }
      return one;
    }
  }
  return {};
}

void require_confounders(std::span<const Predicate> cs) {
  if (cs.empty()) throw Error("arity", "at least one confounder is required");
}

}  // namespace

SceneSet SceneSet::all() {
  SceneSet s;
  std::fill(s.words_.begin(), s.words_.end(), ~std::uint64_t{0});
  s.clear_tail();
  return s;
}

void SceneSet::clear_tail() noexcept { words_.back() &= kTailMask; }

std::uint64_t SceneSet::count() const noexcept {
  std::uint64_t n = 0;
  for (auto w : words_) n += static_cast<std::uint64_t>(std::popcount(w));
  return n;
}

bool SceneSet::empty() const noexcept {
  for (auto w : words_) {
    if (w) return false;
  }
  return true;
}

std::optional<std::uint32_t> SceneSet::first() const noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i]) return static_cast<std::uint32_t>(i * 64 + std::countr_zero(words_[i]));
  }
  return std::nullopt;
}

bool SceneSet::subset_of(const SceneSet& other) const noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] & ~other.words_[i]) return false;
  }
  return true;
}

std::uint64_t SceneSet::hash() const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (auto w : words_) h = mix64(h ^ w);
  return h;
}

SceneSet& SceneSet::operator&=(const SceneSet& o) noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
  return *this;
}

SceneSet& SceneSet::operator|=(const SceneSet& o) noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
  return *this;
}

SceneSet& SceneSet::operator^=(const SceneSet& o) noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] ^= o.words_[i];
  return *this;
}

SceneSet& SceneSet::subtract(const SceneSet& o) noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~o.words_[i];
  return *this;
}

SceneSet& SceneSet::flip() noexcept {
  for (auto& w : words_) w = ~w;
  clear_tail();
  return *this;
}

std::shared_ptr<const SceneSet> atom_set(const TypeMask& types) {
  const auto key = std::make_pair(types.lo, types.hi);
  {
    std::lock_guard lock(g_cache_mutex);
    if (auto it = atom_cache().find(key); it != atom_cache().end()) return it->second;
  }
  auto set = std::make_shared<SceneSet>();
  auto scenes = all_scenes();
  auto words = set->words();
  for (std::uint32_t r = 0; r < kSceneCount; ++r) {
    const auto& t = scenes[r].types();
    if (types.test(t[0]) || types.test(t[1]) || types.test(t[2]) || types.test(t[3])) {
      words[r >> 6] |= std::uint64_t{1} << (r & 63);
    }
  }
  std::lock_guard lock(g_cache_mutex);
  return atom_cache().emplace(key, std::move(set)).first->second;
}

std::shared_ptr<const SceneSet> satisfying_set(const Predicate& pred) {
  if (pred.kind() == Predicate::Kind::exists) return atom_set(pred.atom().types());
  const std::string key = to_json(pred).dump();
  {
    std::lock_guard lock(g_cache_mutex);
    if (auto it = predicate_cache().find(key); it != predicate_cache().end()) return it->second;
  }
  auto set = std::make_shared<const SceneSet>(compute(pred));
  std::lock_guard lock(g_cache_mutex);
  if (predicate_cache().size() >= kPredicateCacheLimit) predicate_cache().clear();
  return predicate_cache().emplace(key, std::move(set)).first->second;
}

std::uint64_t model_count(const Predicate& pred) { return satisfying_set(pred)->count(); }

Implication implies(const Predicate& p, const Predicate& q) {
  SceneSet violations = *satisfying_set(p);
  violations.subtract(*satisfying_set(q));
  Implication out;
  if (auto first = violations.first()) {
    out.holds = false;
    out.counterexample = scene_unrank(*first);
  }
  return out;
}

bool equivalent(const Predicate& p, const Predicate& q) {
  return *satisfying_set(p) == *satisfying_set(q);
}

Bounds joint_bounds(Variant variant, const Predicate& g, std::span<const Predicate> confounders) {
  require_confounders(confounders);
  std::vector<Predicate> cs(confounders.begin(), confounders.end());
  if (variant == Variant::strict) {
    return {g && Predicate::any_of(cs), g || Predicate::all_of(cs)};
  }
  return {g && Predicate::exactly_one(cs), g || Predicate::any_of(cs)};
}

Implication satisfies_bounds(const Predicate& r, const Bounds& bounds) {
  if (auto low = implies(bounds.lower, r); !low) return low;
  return implies(r, bounds.upper);
}

StructureReport confounder_structure(const Predicate& /*g*/, std::span<const Predicate> confounders) {
  require_confounders(confounders);
  std::vector<Predicate> cs(confounders.begin(), confounders.end());

  StructureReport report;
  const auto uncovered = satisfying_set(!Predicate::any_of(cs));
  report.exhaustive = uncovered->empty();
  if (auto r = uncovered->first()) report.non_exhaustive_witness = scene_unrank(*r);

  const auto joint = satisfying_set(Predicate::all_of(cs));
  report.jointly_satisfiable = !joint->empty();
  if (auto r = joint->first()) report.joint_witness = scene_unrank(*r);

  report.unique_solution = report.exhaustive && !report.jointly_satisfiable;
  return report;
}

}  // namespace concon
