#include "concon/predicate.hpp"

#include "concon/error.hpp"

namespace concon {

struct Predicate::Node {
  Kind kind = Kind::top;
  ObjectPredicate atom;
  std::vector<Predicate> operands;
};

bool ObjectPredicate::matches(const ObjectSpec& o) const noexcept {
  return (!shape || *shape == o.shape) && (!size || *size == o.size) &&
         (!material || *material == o.material) && (!color || *color == o.color);
}

TypeMask ObjectPredicate::types() const noexcept {
  TypeMask m;
  for (int t = 0; t < kObjectTypeCount; ++t) {
    if (matches(ObjectSpec::from_type(static_cast<ObjectType>(t)))) m.set(t);
  }
  return m;
}

int ObjectPredicate::literal_count() const noexcept {
  return int{shape.has_value()} + int{size.has_value()} + int{material.has_value()} +
         int{color.has_value()};
}

std::optional<int> ObjectPredicate::get(Attribute a) const noexcept {
  auto as_int = [](const auto& opt) -> std::optional<int> {
    if (!opt) return std::nullopt;
    return static_cast<int>(*opt);
  };
  switch (a) {
    case Attribute::shape: return as_int(shape);
    case Attribute::size: return as_int(size);
    case Attribute::material: return as_int(material);
    case Attribute::color: return as_int(color);
  }
  return std::nullopt;
}

void ObjectPredicate::set(Attribute a, int value) {
  if (value < 0 || value >= kAttributeCardinality[static_cast<int>(a)]) {
    throw Error("range", "value out of range for attribute " + std::string(to_string(a)));
  }
  switch (a) {
    case Attribute::shape: shape = static_cast<Shape>(value); break;
    case Attribute::size: size = static_cast<Size>(value); break;
    case Attribute::material: material = static_cast<Material>(value); break;
    case Attribute::color: color = static_cast<Color>(value); break;
  }
}

bool ObjectPredicate::compatible(const ObjectPredicate& other) const noexcept {
  for (int i = 0; i < 4; ++i) {
    auto a = static_cast<Attribute>(i);
    auto x = get(a);
    auto y = other.get(a);
    if (x && y && *x != *y) return false;
  }
  return true;
}

ObjectPredicate ObjectPredicate::merged(const ObjectPredicate& other) const {
  ObjectPredicate out = *this;
  for (int i = 0; i < 4; ++i) {
    auto a = static_cast<Attribute>(i);
    if (auto v = other.get(a)) out.set(a, *v);
  }
  return out;
}

Predicate::Predicate() : Predicate(top()) {}

Predicate Predicate::top() {
  static const auto node = std::make_shared<const Node>(Node{Kind::top, {}, {}});
  return Predicate(node);
}

Predicate Predicate::bottom() {
  static const auto node = std::make_shared<const Node>(Node{Kind::bottom, {}, {}});
  return Predicate(node);
}

Predicate Predicate::exists(ObjectPredicate atom) {
  return Predicate(std::make_shared<const Node>(Node{Kind::exists, atom, {}}));
}

Predicate Predicate::negation(Predicate operand) {
  return Predicate(std::make_shared<const Node>(Node{Kind::negation, {}, {std::move(operand)}}));
}

Predicate Predicate::all_of(std::vector<Predicate> operands) {
  if (operands.empty()) return top();
  if (operands.size() == 1) return operands.front();
  return Predicate(std::make_shared<const Node>(Node{Kind::all_of, {}, std::move(operands)}));
}

Predicate Predicate::any_of(std::vector<Predicate> operands) {
  if (operands.empty()) return bottom();
  if (operands.size() == 1) return operands.front();
  return Predicate(std::make_shared<const Node>(Node{Kind::any_of, {}, std::move(operands)}));
}

Predicate Predicate::exactly_one(std::vector<Predicate> operands) {
  if (operands.empty()) return bottom();
  if (operands.size() == 1) return operands.front();
  return Predicate(std::make_shared<const Node>(Node{Kind::exactly_one, {}, std::move(operands)}));
}

Predicate::Kind Predicate::kind() const noexcept { return node_->kind; }

const ObjectPredicate& Predicate::atom() const {
  if (node_->kind != Kind::exists) throw Error("kind", "predicate is not an existence atom");
  return node_->atom;
}

std::span<const Predicate> Predicate::operands() const noexcept { return node_->operands; }

bool eval_scene(const Predicate& pred, const Scene& scene) {
  switch (pred.kind()) {
    case Predicate::Kind::top: return true;
    case Predicate::Kind::bottom: return false;
    case Predicate::Kind::exists:
      for (int i = 0; i < kObjectsPerScene; ++i) {
        if (pred.atom().matches(scene.object(i))) return true;
      }
      return false;
    case Predicate::Kind::negation: return !eval_scene(pred.operands()[0], scene);
    case Predicate::Kind::all_of:
      for (const auto& p : pred.operands()) {
        if (!eval_scene(p, scene)) return false;
      }
      return true;
    case Predicate::Kind::any_of:
      for (const auto& p : pred.operands()) {
        if (eval_scene(p, scene)) return true;
      }
      return false;
    case Predicate::Kind::exactly_one: {
      int n = 0;
      for (const auto& p : pred.operands()) n += eval_scene(p, scene) ? 1 : 0;
      return n == 1;
    }
  }
  return false;
}

std::string to_string(const ObjectPredicate& atom) {
  std::string s;
  auto add = [&s](std::string_view v) {
    if (!s.empty()) s += ' ';
    s.append(v);
  };
  if (atom.size) add(to_string(*atom.size));
  if (atom.color) add(to_string(*atom.color));
  if (atom.material) add(to_string(*atom.material));
  if (atom.shape) add(to_string(*atom.shape));
  if (s.empty()) s = "object";
  return s;
}

std::string to_string(const Predicate& pred) {
  auto join = [&pred](std::string_view sep) {
    std::string s = "(";
    bool first = true;
    for (const auto& p : pred.operands()) {
      if (!first) s.append(sep);
      s += to_string(p);
      first = false;
    }
    return s + ")";
  };
  switch (pred.kind()) {
    case Predicate::Kind::top: return "T";
    case Predicate::Kind::bottom: return "F";
    case Predicate::Kind::exists: return "E(" + to_string(pred.atom()) + ")";
    case Predicate::Kind::negation: return "!" + to_string(pred.operands()[0]);
    case Predicate::Kind::all_of: return join(" & ");
    case Predicate::Kind::any_of: return join(" | ");
    case Predicate::Kind::exactly_one: return "one_of" + join(", ");
  }
  return {};
}

nlohmann::json to_json(const Predicate& pred) {
  using nlohmann::json;
  auto list = [&pred] {
    json arr = json::array();
    for (const auto& p : pred.operands()) arr.push_back(to_json(p));
    return arr;
  };
  switch (pred.kind()) {
    case Predicate::Kind::top: return true;
    case Predicate::Kind::bottom: return false;
    case Predicate::Kind::exists: {
      json lits = json::object();
      for (int i = 0; i < 4; ++i) {
        auto a = static_cast<Attribute>(i);
        if (auto v = pred.atom().get(a)) lits[std::string(to_string(a))] = std::string(value_name(a, *v));
      }
      return json{{"exists", lits}};
    }
    case Predicate::Kind::negation: return json{{"not", to_json(pred.operands()[0])}};
    case Predicate::Kind::all_of: return json{{"all_of", list()}};
    case Predicate::Kind::any_of: return json{{"any_of", list()}};
    case Predicate::Kind::exactly_one: return json{{"exactly_one", list()}};
  }
  return nullptr;
}

Predicate predicate_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return j.get<bool>() ? Predicate::top() : Predicate::bottom();
  if (!j.is_object() || j.size() != 1) {
    throw Error("format", "predicate must be true, false, or a single-key object: " + j.dump());
  }
  const std::string key = j.begin().key();
  const nlohmann::json& body = j.begin().value();
  auto list = [&](const std::string& name) {
    if (!body.is_array() || body.empty()) {
      throw Error("format", "'" + name + "' expects a non-empty array");
    }
    std::vector<Predicate> ops;
    for (const auto& item : body) ops.push_back(predicate_from_json(item));
    return ops;
  };
  if (key == "exists") {
    if (!body.is_object()) throw Error("format", "'exists' expects an object of attribute literals");
    ObjectPredicate atom;
    for (const auto& [attr, val] : body.items()) {
      auto a = parse_attribute(attr);
      if (!a) throw Error("format", "unknown attribute '" + attr + "'");
      if (!val.is_string()) throw Error("format", "attribute '" + attr + "' expects a string value");
      auto v = parse_value(*a, val.get<std::string>());
      if (!v) throw Error("format", "unknown " + attr + " value '" + val.get<std::string>() + "'");
      atom.set(*a, *v);
    }
    return Predicate::exists(atom);
  }
  if (key == "not") return Predicate::negation(predicate_from_json(body));
  if (key == "all_of") return Predicate::all_of(list(key));
  if (key == "any_of") return Predicate::any_of(list(key));
  if (key == "exactly_one") return Predicate::exactly_one(list(key));
  throw Error("format", "unknown predicate operator '" + key + "'");
}

}  // namespace concon
