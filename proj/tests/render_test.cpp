#include <gtest/gtest.h>

#include <png.h>

#include <cmath>

#include "concon/error.hpp"
#include "concon/render.hpp"

namespace concon {
namespace {

// Independent decoder: libpng's simplified read API.
Image decode(const std::vector<std::uint8_t>& bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) throw std::runtime_error(png.message);
  png.format = PNG_FORMAT_RGB;
  Image img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  img.rgb.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) throw std::runtime_error(png.message);
  return img;
}

Scene mixed_scene() {
  const std::array<ObjectSpec, 4> objs{
      ObjectSpec{Shape::cube, Size::small, Material::rubber, Color::red},
      ObjectSpec{Shape::sphere, Size::large, Material::metal, Color::blue},
      ObjectSpec{Shape::cylinder, Size::small, Material::metal, Color::yellow},
      ObjectSpec{Shape::cylinder, Size::large, Material::rubber, Color::green},
  };
  return Scene::canonicalize(objs);
}

TEST(Render, PngDecodesToTheRaster) {
  const RenderConfig config;
  Rng rng(1);
  const Scene s = mixed_scene();
  const auto pos = place_objects(s, rng, config);
  const Image raster = rasterize(s, pos, config);
  const Image back = decode(encode_png(raster));
  EXPECT_EQ(back.width, 224);
  EXPECT_EQ(back.height, 224);
  EXPECT_EQ(back.rgb, raster.rgb);
}

TEST(Render, DeterministicPerSeed) {
  Rng a(42), b(42), c(43);
  const Scene s = mixed_scene();
  const auto pa = render(s, a);
  EXPECT_EQ(pa, render(s, b));
  EXPECT_NE(pa, render(s, c));
}

TEST(Render, PlacementKeepsObjectsInsideAndApart) {
  const RenderConfig config;
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    const Scene s = scene_unrank(static_cast<std::int64_t>(rng.uniform_index(kSceneCount)));
    const auto pos = place_objects(s, rng, config);
    for (int i = 0; i < 4; ++i) {
      const int ri = config.radius(s.object(i).size);
      EXPECT_GE(pos[i].x - ri, 0);
      EXPECT_LE(pos[i].x + ri, config.image_size);
      EXPECT_GE(pos[i].y - ri, 0);
      EXPECT_LE(pos[i].y + ri, config.image_size);
      for (int j = i + 1; j < 4; ++j) {
        const int rj = config.radius(s.object(j).size);
        EXPECT_GE(std::hypot(pos[i].x - pos[j].x, pos[i].y - pos[j].y), ri + rj + config.gap);
      }
    }
  }
}

TEST(Render, CentresCarryTheObjectColour) {
  const RenderConfig config;
  Rng rng(3);
  const Scene s = mixed_scene();
  const auto pos = place_objects(s, rng, config);
  const Image img = rasterize(s, pos, config);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(img.at(pos[i].x, pos[i].y), config.colors[static_cast<int>(s.object(i).color)]);
  }
  // Metal highlight sits up and to the left of the centre.
  for (int i = 0; i < 4; ++i) {
    const int r = config.radius(s.object(i).size);
    const Rgb px = img.at(pos[i].x - r / 3, pos[i].y - r / 3);
    if (s.object(i).material == Material::metal) EXPECT_EQ(px, config.highlight);
    else EXPECT_NE(px, config.highlight);
  }
}

TEST(Render, CrowdedCanvasStalls) {
  RenderConfig config;
  config.image_size = 70;
  const std::array<ObjectType, 4> large{95, 95, 95, 95};
  Rng rng(1);
  try {
    place_objects(Scene::from_types(large), rng, config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "stall");
  }
}

}  // namespace
}  // namespace concon
