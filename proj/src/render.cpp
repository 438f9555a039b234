#include "concon/render.hpp"

#include <png.h>

#include <cmath>

#include "concon/error.hpp"

namespace concon {
namespace {

constexpr int kMaxLayoutRejections = 10'000;

void put(Image& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  const auto i = (static_cast<std::size_t>(y) * img.width + x) * 3;
  img.rgb[i] = c.r;
  img.rgb[i + 1] = c.g;
  img.rgb[i + 2] = c.b;
}

// Pixel centres (x + 0.5, y + 0.5) are tested against each shape.
bool inside_ellipse(double px, double py, double cx, double cy, double rx, double ry) {
  const double dx = (px - cx) / rx;
  const double dy = (py - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

bool inside_shape(const ObjectSpec& o, double px, double py, double cx, double cy, double r) {
  switch (o.shape) {
    case Shape::sphere: return inside_ellipse(px, py, cx, cy, r, r);
    case Shape::cube: {
      const double h = r / std::sqrt(2.0);
      return std::abs(px - cx) <= h && std::abs(py - cy) <= h;
    }
    case Shape::cylinder: {
      const double hw = 0.5 * r;
      const double body = 0.6 * r;
      const double cap = 0.2 * r;
      if (std::abs(px - cx) <= hw && std::abs(py - cy) <= body) return true;
      return inside_ellipse(px, py, cx, cy - body, hw, cap) || inside_ellipse(px, py, cx, cy + body, hw, cap);
    }
  }
  return false;
}

}  // namespace

std::array<Position, kObjectsPerScene> place_objects(const Scene& scene, Rng& rng,
                                                     const RenderConfig& config) {
  std::array<int, kObjectsPerScene> radius{};
  for (int i = 0; i < kObjectsPerScene; ++i) radius[i] = config.radius(scene.object(i).size);

  std::array<Position, kObjectsPerScene> pos{};
  for (int attempt = 0; attempt < kMaxLayoutRejections; ++attempt) {
    for (int i = 0; i < kObjectsPerScene; ++i) {
      const auto span = static_cast<std::uint64_t>(config.image_size - 2 * radius[i]);
      pos[i].x = radius[i] + static_cast<int>(rng.uniform_index(span));
      pos[i].y = radius[i] + static_cast<int>(rng.uniform_index(span));
    }
    bool ok = true;
    for (int i = 0; i < kObjectsPerScene && ok; ++i) {
      for (int j = i + 1; j < kObjectsPerScene && ok; ++j) {
        const double dx = pos[i].x - pos[j].x;
        const double dy = pos[i].y - pos[j].y;
        ok = std::sqrt(dx * dx + dy * dy) >= radius[i] + radius[j] + config.gap;
      }
    }
    if (ok) return pos;
  }
  throw Error("stall", "object placement rejected " + std::to_string(kMaxLayoutRejections) +
                           " consecutive layouts");
}

Image rasterize(const Scene& scene, const std::array<Position, kObjectsPerScene>& positions,
                const RenderConfig& config) {
  Image img;
  img.width = img.height = config.image_size;
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) put(img, x, y, config.background);
  }

  for (int i = 0; i < kObjectsPerScene; ++i) {
    const ObjectSpec o = scene.object(i);
    const int r = config.radius(o.size);
    const double cx = positions[i].x;
    const double cy = positions[i].y;
    const Rgb fill = config.colors[static_cast<int>(o.color)];
    const double hx = cx - r / 3.0;
    const double hy = cy - r / 3.0;
    const double hr = r / 4.0;
    for (int y = positions[i].y - r; y <= positions[i].y + r; ++y) {
      for (int x = positions[i].x - r; x <= positions[i].x + r; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        if (!inside_shape(o, px, py, cx, cy, r)) continue;
        const bool shine = o.material == Material::metal && inside_ellipse(px, py, hx, hy, hr, hr);
        put(img, x, y, shine ? config.highlight : fill);
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error("png", std::string("cannot size PNG: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error("png", std::string("cannot encode PNG: ") + png.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> render(const Scene& scene, Rng& rng, const RenderConfig& config) {
  return encode_png(rasterize(scene, place_objects(scene, rng, config), config));
}

}  // namespace concon
