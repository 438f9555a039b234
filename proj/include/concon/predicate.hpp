#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "concon/scene.hpp"

namespace concon {

// Conjunction of attribute literals over a single object; at most one value
// per attribute. No literals means "any object".
struct ObjectPredicate {
  std::optional<Shape> shape;
  std::optional<Size> size;
  std::optional<Material> material;
  std::optional<Color> color;

  bool matches(const ObjectSpec& o) const noexcept;
  TypeMask types() const noexcept;
  int literal_count() const noexcept;

  std::optional<int> get(Attribute a) const noexcept;
  void set(Attribute a, int value);

  // Two literal sets can hold on the same object.
  bool compatible(const ObjectPredicate& other) const noexcept;
  ObjectPredicate merged(const ObjectPredicate& other) const;

  friend bool operator==(const ObjectPredicate&, const ObjectPredicate&) = default;
};

// Immutable predicate AST over scenes. Copies share structure.
class Predicate {
 public:
  enum class Kind : std::uint8_t { top, bottom, exists, negation, all_of, any_of, exactly_one };

  Predicate();  // top

  static Predicate top();
  static Predicate bottom();
  static Predicate exists(ObjectPredicate atom);
  static Predicate negation(Predicate operand);
  // Single-element lists collapse to the element; empty all_of is top,
  // empty any_of / exactly_one is bottom.
  static Predicate all_of(std::vector<Predicate> operands);
  static Predicate any_of(std::vector<Predicate> operands);
  static Predicate exactly_one(std::vector<Predicate> operands);

  Kind kind() const noexcept;
  const ObjectPredicate& atom() const;
  std::span<const Predicate> operands() const noexcept;

 private:
  struct Node;
  explicit Predicate(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

inline Predicate operator!(const Predicate& p) { return Predicate::negation(p); }
inline Predicate operator&&(const Predicate& a, const Predicate& b) { return Predicate::all_of({a, b}); }
inline Predicate operator||(const Predicate& a, const Predicate& b) { return Predicate::any_of({a, b}); }

// Shorthand builders for atoms: exists(Shape::sphere), exists(Size::small, Shape::cube).
template <typename... Values>
Predicate exists(Values... values) {
  ObjectPredicate atom;
  auto put = [&atom](auto v) {
    using V = decltype(v);
    if constexpr (std::is_same_v<V, Shape>) atom.shape = v;
    else if constexpr (std::is_same_v<V, Size>) atom.size = v;
    else if constexpr (std::is_same_v<V, Material>) atom.material = v;
    else atom.color = v;
  };
  (put(values), ...);
  return Predicate::exists(atom);
}

bool eval_scene(const Predicate& pred, const Scene& scene);

// Compact infix form, e.g. "(E(sphere) & E(small cube))".
std::string to_string(const Predicate& pred);
std::string to_string(const ObjectPredicate& atom);

// Textual rule form: {"exists": {...}}, {"all_of": [...]}, {"any_of": [...]},
// {"not": ...}, {"exactly_one": [...]}, true, false.
nlohmann::json to_json(const Predicate& pred);
// Throws Error("format") on malformed input.
Predicate predicate_from_json(const nlohmann::json& j);

}  // namespace concon
