#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "concon/predicate.hpp"
#include "concon/scene.hpp"

namespace concon {

// Bitmap over scene ranks [0, kSceneCount).
class SceneSet {
 public:
  static constexpr std::size_t kWords = (kSceneCount + 63) / 64;

  SceneSet() : words_(kWords, 0) {}
  static SceneSet all();
  static SceneSet none() { return {}; }

  bool test(std::uint32_t rank) const noexcept { return (words_[rank >> 6] >> (rank & 63)) & 1U; }
  void set(std::uint32_t rank) noexcept { words_[rank >> 6] |= std::uint64_t{1} << (rank & 63); }

  std::uint64_t count() const noexcept;
  bool empty() const noexcept;
  // Lowest set rank (the lexicographically first scene), if any.
  std::optional<std::uint32_t> first() const noexcept;
  bool subset_of(const SceneSet& other) const noexcept;
  // 64-bit content hash, stable within one build.
  std::uint64_t hash() const noexcept;

  SceneSet& operator&=(const SceneSet& o) noexcept;
  SceneSet& operator|=(const SceneSet& o) noexcept;
  SceneSet& operator^=(const SceneSet& o) noexcept;
  SceneSet& subtract(const SceneSet& o) noexcept;  // this &= ~o
  SceneSet& flip() noexcept;

  friend SceneSet operator&(SceneSet a, const SceneSet& b) { return a &= b; }
  friend SceneSet operator|(SceneSet a, const SceneSet& b) { return a |= b; }
  friend SceneSet operator~(SceneSet a) { return a.flip(); }
  friend bool operator==(const SceneSet&, const SceneSet&) = default;

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<std::uint64_t> words() noexcept { return words_; }

 private:
  void clear_tail() noexcept;
  std::vector<std::uint64_t> words_;
};

// Scenes satisfying an existence atom, cached by type mask.
std::shared_ptr<const SceneSet> atom_set(const TypeMask& types);

// Scenes satisfying pred. Results for whole predicates are cached.
std::shared_ptr<const SceneSet> satisfying_set(const Predicate& pred);

std::uint64_t model_count(const Predicate& pred);

struct Implication {
  bool holds = true;
  std::optional<Scene> counterexample;  // lexicographically first, when !holds

  explicit operator bool() const noexcept { return holds; }
};

// p <= q in the implication order.
Implication implies(const Predicate& p, const Predicate& q);
bool equivalent(const Predicate& p, const Predicate& q);

enum class Variant { strict, disjoint };

struct Bounds {
  Predicate lower;
  Predicate upper;
};

// Joint constraints on a predicate that solves every task:
//   strict:   g & (c_1 | ... | c_T)         <= r <= g | (c_1 & ... & c_T)
//   disjoint: g & one_of(c_1, ..., c_T)     <= r <= g | (c_1 | ... | c_T)
// Throws Error("arity") on an empty confounder list.
Bounds joint_bounds(Variant variant, const Predicate& g, std::span<const Predicate> confounders);

// lower <= r <= upper; the counterexample comes from the first failing side.
Implication satisfies_bounds(const Predicate& r, const Bounds& bounds);

struct StructureReport {
  bool exhaustive = false;
  std::optional<Scene> non_exhaustive_witness;  // satisfies no confounder
  bool jointly_satisfiable = false;
  std::optional<Scene> joint_witness;  // satisfies every confounder
  bool unique_solution = false;        // exhaustive && !jointly_satisfiable
};

// g is accepted for interface symmetry; the conditions depend only on the
// confounders. Throws Error("arity") on an empty confounder list.
StructureReport confounder_structure(const Predicate& g, std::span<const Predicate> confounders);

}  // namespace concon
