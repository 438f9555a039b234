#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "concon/learner.hpp"
#include "concon/predicate.hpp"
#include "concon/task.hpp"

namespace concon::testing {

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Scenes over a sub-universe of m object types: C(m + 3, 4).
inline std::uint64_t scenes_over(std::uint64_t types) { return binomial(types + 3, 4); }

inline Predicate ground_truth() { return exists(Shape::sphere) && exists(Size::small, Shape::cube); }

inline RuleSpec default_spec(Variant variant) {
  RuleSpec s;
  s.name = variant == Variant::strict ? "concon_paper" : "concon_paper_disjoint";
  s.ground_truth = ground_truth();
  s.confounders = {exists(Color::blue), exists(Material::metal), exists(Size::large)};
  s.variant = variant;
  return s;
}

inline std::filesystem::path bundled_spec(const std::string& name) {
  return std::filesystem::path(CONCON_SOURCE_DIR) / "specs" / name;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

enum class LossKind { ce, ce_ewc, ce_der };

// Worst relative error between the analytic gradient and central finite
// differences (step h) over one random (model, batch, penalty) draw. The
// comparison uses 32 coordinates with nonzero analytic gradient, 8 uniform
// coordinates and one random direction. Draws with a hidden pre-activation
// within 1e-3 of the relu kink are redrawn: finite differences are not
// meaningful there.
double gradient_check_draw(LossKind kind, Rng& rng, double h = 1e-5);

}  // namespace concon::testing
