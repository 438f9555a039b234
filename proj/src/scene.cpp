#include "concon/scene.hpp"

#include <algorithm>
#include <mutex>

#include "concon/error.hpp"

namespace concon {
namespace {

constexpr std::array<std::string_view, kShapeCount> kShapeNames{"cube", "sphere", "cylinder"};
constexpr std::array<std::string_view, kSizeCount> kSizeNames{"small", "large"};
constexpr std::array<std::string_view, kMaterialCount> kMaterialNames{"metal", "rubber"};
constexpr std::array<std::string_view, kColorCount> kColorNames{
    "gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"};
constexpr std::array<std::string_view, 4> kAttributeNames{"shape", "size", "material", "color"};

// kMultichoose[v][m]: number of non-decreasing sequences of length m with
// values in [v, kObjectTypeCount).
struct MultichooseTable {
  std::array<std::array<std::uint32_t, kObjectsPerScene + 1>, kObjectTypeCount + 1> c{};

  constexpr MultichooseTable() {
    for (int v = 0; v <= kObjectTypeCount; ++v) c[v][0] = 1;
    for (int m = 1; m <= kObjectsPerScene; ++m) {
      c[kObjectTypeCount][m] = 0;
      // sequences over [v, n): first value is v (then length m-1 over [v, n))
      // or every value is > v.
      for (int v = kObjectTypeCount - 1; v >= 0; --v) c[v][m] = c[v][m - 1] + c[v + 1][m];
    }
  }
};

constexpr MultichooseTable kMultichoose{};
static_assert(kMultichoose.c[0][kObjectsPerScene] == kSceneCount);

}  // namespace

std::string_view to_string(Shape v) { return kShapeNames[static_cast<int>(v)]; }
std::string_view to_string(Size v) { return kSizeNames[static_cast<int>(v)]; }
std::string_view to_string(Material v) { return kMaterialNames[static_cast<int>(v)]; }
std::string_view to_string(Color v) { return kColorNames[static_cast<int>(v)]; }
std::string_view to_string(Attribute a) { return kAttributeNames[static_cast<int>(a)]; }

std::string_view value_name(Attribute a, int index) {
  switch (a) {
    case Attribute::shape: return kShapeNames.at(index);
    case Attribute::size: return kSizeNames.at(index);
    case Attribute::material: return kMaterialNames.at(index);
    case Attribute::color: return kColorNames.at(index);
  }
  return {};
}

std::optional<int> parse_value(Attribute a, std::string_view name) {
  for (int i = 0; i < kAttributeCardinality[static_cast<int>(a)]; ++i) {
    if (value_name(a, i) == name) return i;
  }
  return std::nullopt;
}

std::optional<Attribute> parse_attribute(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (kAttributeNames[i] == name) return static_cast<Attribute>(i);
  }
  return std::nullopt;
}

std::string describe(const ObjectSpec& o) {
  std::string s;
  s.append(to_string(o.size)).append(" ");
  s.append(to_string(o.color)).append(" ");
  s.append(to_string(o.material)).append(" ");
  s.append(to_string(o.shape));
  return s;
}

Scene Scene::canonicalize(std::span<const ObjectSpec> objects) {
  if (objects.size() != kObjectsPerScene) {
    throw Error("arity", "a scene needs exactly 4 objects, got " + std::to_string(objects.size()));
  }
  Scene s;
  for (int i = 0; i < kObjectsPerScene; ++i) s.types_[i] = objects[i].type_index();
  std::sort(s.types_.begin(), s.types_.end());
  return s;
}

Scene Scene::from_types(std::span<const ObjectType> types) {
  if (types.size() != kObjectsPerScene) {
    throw Error("arity", "a scene needs exactly 4 objects, got " + std::to_string(types.size()));
  }
  Scene s;
  for (int i = 0; i < kObjectsPerScene; ++i) {
    if (types[i] >= kObjectTypeCount) {
      throw Error("range", "object type " + std::to_string(types[i]) + " out of range");
    }
    s.types_[i] = types[i];
  }
  std::sort(s.types_.begin(), s.types_.end());
  return s;
}

std::array<ObjectSpec, kObjectsPerScene> Scene::objects() const {
  std::array<ObjectSpec, kObjectsPerScene> out;
  for (int i = 0; i < kObjectsPerScene; ++i) out[i] = object(i);
  return out;
}

std::string describe(const Scene& s) {
  std::string out = "{";
  for (int i = 0; i < kObjectsPerScene; ++i) {
    if (i) out += ", ";
    out += describe(s.object(i));
  }
  return out + "}";
}

std::uint32_t scene_rank(const Scene& scene) {
  std::uint32_t rank = 0;
  int lo = 0;
  const auto& t = scene.types();
  for (int pos = 0; pos < kObjectsPerScene; ++pos) {
    const int remaining = kObjectsPerScene - pos - 1;
    for (int x = lo; x < t[pos]; ++x) rank += kMultichoose.c[x][remaining];
    lo = t[pos];
  }
  return rank;
}

Scene scene_unrank(std::int64_t index) {
  if (index < 0 || index >= static_cast<std::int64_t>(kSceneCount)) {
    throw Error("range", "scene index " + std::to_string(index) + " outside [0, " +
                             std::to_string(kSceneCount) + ")");
  }
  auto rest = static_cast<std::uint32_t>(index);
  std::array<ObjectType, kObjectsPerScene> types{};
  int x = 0;
  for (int pos = 0; pos < kObjectsPerScene; ++pos) {
    const int remaining = kObjectsPerScene - pos - 1;
    while (rest >= kMultichoose.c[x][remaining]) {
      rest -= kMultichoose.c[x][remaining];
      ++x;
    }
    types[pos] = static_cast<ObjectType>(x);
  }
  return Scene::from_types(types);
}

std::span<const Scene> all_scenes() {
  static const std::vector<Scene> table = [] {
    std::vector<Scene> v;
    v.reserve(kSceneCount);
    for (const Scene& s : enumerate_scenes()) v.push_back(s);
    return v;
  }();
  return table;
}

SceneEnumeration::iterator& SceneEnumeration::iterator::operator++() {
  std::array<ObjectType, kObjectsPerScene> t = current_.types();
  int pos = kObjectsPerScene - 1;
  while (pos >= 0 && t[pos] == kObjectTypeCount - 1) --pos;
  if (pos < 0) {
    done_ = true;
    return *this;
  }
  const auto next = static_cast<ObjectType>(t[pos] + 1);
  for (int i = pos; i < kObjectsPerScene; ++i) t[i] = next;
  current_ = Scene::from_types(t);
  return *this;
}

}  // namespace concon
