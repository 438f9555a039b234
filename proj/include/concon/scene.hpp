#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace concon {

// Attribute domains. The enumerator order is part of the on-disk contract:
// object type indices and scene ranks are derived from it.
enum class Shape : std::uint8_t { cube, sphere, cylinder };
enum class Size : std::uint8_t { small, large };
enum class Material : std::uint8_t { metal, rubber };
enum class Color : std::uint8_t { gray, red, blue, green, brown, purple, cyan, yellow };

enum class Attribute : std::uint8_t { shape, size, material, color };

inline constexpr int kShapeCount = 3;
inline constexpr int kSizeCount = 2;
inline constexpr int kMaterialCount = 2;
inline constexpr int kColorCount = 8;
inline constexpr int kObjectTypeCount = kShapeCount * kSizeCount * kMaterialCount * kColorCount;
inline constexpr int kObjectsPerScene = 4;
// Size-4 multisets over 96 types: C(96 + 4 - 1, 4).
inline constexpr std::uint32_t kSceneCount = 3'764'376;

inline constexpr std::array<int, 4> kAttributeCardinality{kShapeCount, kSizeCount,
                                                         kMaterialCount, kColorCount};

std::string_view to_string(Shape v);
std::string_view to_string(Size v);
std::string_view to_string(Material v);
std::string_view to_string(Color v);
std::string_view to_string(Attribute a);

// Name of value `index` of attribute `a` ("sphere", "large", ...).
std::string_view value_name(Attribute a, int index);
// Inverse of value_name; nullopt for unknown names.
std::optional<int> parse_value(Attribute a, std::string_view name);
std::optional<Attribute> parse_attribute(std::string_view name);

using ObjectType = std::uint8_t;

struct ObjectSpec {
  Shape shape{};
  Size size{};
  Material material{};
  Color color{};

  // Lexicographic in (shape, size, material, color).
  constexpr ObjectType type_index() const noexcept {
    return static_cast<ObjectType>(
        ((static_cast<int>(shape) * kSizeCount + static_cast<int>(size)) * kMaterialCount +
         static_cast<int>(material)) *
            kColorCount +
        static_cast<int>(color));
  }

  static constexpr ObjectSpec from_type(ObjectType t) noexcept {
    ObjectSpec o;
    o.color = static_cast<Color>(t % kColorCount);
    t /= kColorCount;
    o.material = static_cast<Material>(t % kMaterialCount);
    t /= kMaterialCount;
    o.size = static_cast<Size>(t % kSizeCount);
    o.shape = static_cast<Shape>(t / kSizeCount);
    return o;
  }

  constexpr int value(Attribute a) const noexcept {
    switch (a) {
      case Attribute::shape: return static_cast<int>(shape);
      case Attribute::size: return static_cast<int>(size);
      case Attribute::material: return static_cast<int>(material);
      case Attribute::color: return static_cast<int>(color);
    }
    return 0;
  }

  friend constexpr bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

// "large blue metal sphere"
std::string describe(const ObjectSpec& o);

// Set of object types, one bit per type.
struct TypeMask {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  constexpr void set(int t) noexcept {
    if (t < 64) lo |= std::uint64_t{1} << t;
    else hi |= std::uint64_t{1} << (t - 64);
  }
  constexpr bool test(int t) const noexcept {
    return t < 64 ? (lo >> t) & 1U : (hi >> (t - 64)) & 1U;
  }
  constexpr bool intersects(const TypeMask& o) const noexcept {
    return (lo & o.lo) != 0 || (hi & o.hi) != 0;
  }
  constexpr bool empty() const noexcept { return lo == 0 && hi == 0; }

  friend constexpr bool operator==(const TypeMask&, const TypeMask&) = default;
};

// Canonical multiset of four objects, sorted by type index. Positions are
// not part of a scene.
class Scene {
 public:
  // Four copies of object type 0.
  constexpr Scene() = default;

  // Sorts the input; throws Error("arity") unless exactly four objects.
  static Scene canonicalize(std::span<const ObjectSpec> objects);
  static Scene from_types(std::span<const ObjectType> types);

  constexpr const std::array<ObjectType, kObjectsPerScene>& types() const noexcept { return types_; }
  ObjectSpec object(int i) const { return ObjectSpec::from_type(types_[i]); }
  std::array<ObjectSpec, kObjectsPerScene> objects() const;

  TypeMask mask() const noexcept {
    TypeMask m;
    for (ObjectType t : types_) m.set(t);
    return m;
  }

  friend constexpr bool operator==(const Scene&, const Scene&) = default;
  friend constexpr auto operator<=>(const Scene&, const Scene&) = default;

 private:
  std::array<ObjectType, kObjectsPerScene> types_{};
};

std::string describe(const Scene& s);

// Position of a scene in the lexicographic order of all canonical scenes.
std::uint32_t scene_rank(const Scene& scene);
// Throws Error("range") unless 0 <= index < kSceneCount.
Scene scene_unrank(std::int64_t index);

// Every canonical scene in rank order (built once, ~15 MB).
std::span<const Scene> all_scenes();

// Forward range over all canonical scenes in rank order, generated by
// successor stepping (independent of all_scenes()).
class SceneEnumeration {
 public:
  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Scene;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    explicit iterator(bool done) : done_(done) {}

    const Scene& operator*() const { return current_; }
    iterator& operator++();
    void operator++(int) { ++*this; }
    bool operator==(const iterator& o) const { return done_ == o.done_ && (done_ || current_ == o.current_); }

   private:
    Scene current_{};
    bool done_ = true;
  };

  iterator begin() const { return iterator(false); }
  iterator end() const { return iterator(true); }
};

inline SceneEnumeration enumerate_scenes() { return {}; }

}  // namespace concon
