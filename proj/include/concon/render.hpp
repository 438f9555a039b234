#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "concon/rng.hpp"
#include "concon/scene.hpp"

namespace concon {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RenderConfig {
  int image_size = 224;
  int small_radius = 18;
  int large_radius = 32;
  int gap = 4;  // minimum clearance between bounding discs
  Rgb background{214, 214, 214};
  Rgb highlight{255, 255, 255};
  // Indexed by Color.
  std::array<Rgb, kColorCount> colors{{
      {87, 87, 87},     // gray
      {173, 35, 35},    // red
      {42, 75, 215},    // blue
      {29, 105, 20},    // green
      {129, 74, 25},    // brown
      {129, 38, 192},   // purple
      {41, 208, 208},   // cyan
      {255, 238, 51},   // yellow
  }};

  int radius(Size s) const { return s == Size::small ? small_radius : large_radius; }
};

struct Position {
  int x = 0;
  int y = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

// Rejection-samples whole layouts: every shape lies inside the canvas and
// bounding discs keep `gap` px of clearance. Throws Error("stall") after
// 10'000 consecutive rejected layouts.
std::array<Position, kObjectsPerScene> place_objects(const Scene& scene, Rng& rng,
                                                     const RenderConfig& config = {});

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb at(int x, int y) const {
    const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

// cube: axis-aligned square inscribed in the bounding disc; sphere: disc;
// cylinder: upright body with elliptical caps. Metal objects carry a white
// highlight disc up and to the left of the centre.
Image rasterize(const Scene& scene, const std::array<Position, kObjectsPerScene>& positions,
                const RenderConfig& config = {});

std::vector<std::uint8_t> encode_png(const Image& image);

// place_objects + rasterize + encode_png.
std::vector<std::uint8_t> render(const Scene& scene, Rng& rng, const RenderConfig& config = {});

}  // namespace concon
