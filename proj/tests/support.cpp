#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace concon::testing {
namespace {

struct Draw {
  Model model;
  FeatureMatrix<double> x;
  std::vector<int> labels;
  Params fisher;
  Params anchor;
  Penalty<double> penalty;
};

Scene random_scene(Rng& rng) { return scene_unrank(static_cast<std::int64_t>(rng.uniform_index(kSceneCount))); }

FeatureMatrix<double> random_batch(Rng& rng, std::size_t n) {
  std::vector<Scene> scenes;
  for (std::size_t i = 0; i < n; ++i) scenes.push_back(random_scene(rng));
  return featurize<double>(scenes);
}

bool near_kink(const Model& m, const FeatureMatrix<double>& x) {
  if (x.cols() == 0) return false;
  const Eigen::MatrixXd pre = (m.w1() * x).colwise() + m.b1();
  return pre.cwiseAbs().minCoeff() < 1e-3;
}

}  // namespace

double gradient_check_draw(LossKind kind, Rng& rng, double h) {
  Draw d;
  while (true) {
    Params p(Model::kParamCount);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = rng.uniform(-0.5, 0.5);
    d.model = Model(p);
    const std::size_t n = 1 + rng.uniform_index(8);
    d.x = random_batch(rng, n);
    d.labels.assign(n, 0);
    for (auto& y : d.labels) y = static_cast<int>(rng.uniform_index(2));
    d.penalty = {};
    if (kind == LossKind::ce_ewc) {
      d.fisher = Params(Model::kParamCount);
      d.anchor = Params(Model::kParamCount);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        d.fisher(i) = rng.uniform(0.0, 1.0);
        d.anchor(i) = p(i) + rng.uniform(-0.1, 0.1);
      }
      d.penalty.ewc = EwcPenalty<double>{&d.fisher, &d.anchor, rng.uniform(0.1, 10.0)};
    }
    if (kind == LossKind::ce_der) {
      DistillPenalty<double> der;
      const std::size_t r = 1 + rng.uniform_index(6);
      der.x = random_batch(rng, r);
      der.target = LogitMatrix<double>(kClassCount, static_cast<Eigen::Index>(r));
      for (Eigen::Index i = 0; i < der.target.size(); ++i) der.target(i) = rng.uniform(-2.0, 2.0);
      der.alpha = rng.uniform(0.1, 2.0);
      d.penalty.der = std::move(der);
    }
    if (!near_kink(d.model, d.x) && !(d.penalty.der && near_kink(d.model, d.penalty.der->x))) break;
  }

  Params grad;
  loss_and_grad(d.model, d.x, d.labels, d.penalty, &grad);
  auto loss_at = [&](const Params& p) { return loss_and_grad(Model(p), d.x, d.labels, d.penalty); };

  std::vector<Eigen::Index> coords;
  std::vector<Eigen::Index> nonzero;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (grad(i) != 0.0) nonzero.push_back(i);
  }
  for (int k = 0; k < 32 && !nonzero.empty(); ++k) coords.push_back(nonzero[rng.uniform_index(nonzero.size())]);
  for (int k = 0; k < 8; ++k) coords.push_back(static_cast<Eigen::Index>(rng.uniform_index(Model::kParamCount)));

  std::vector<double> analytic;
  std::vector<double> numeric;
  const Params& base = d.model.params();
  for (Eigen::Index i : coords) {
    Params plus = base, minus = base;
    plus(i) += h;
    minus(i) -= h;
    analytic.push_back(grad(i));
    numeric.push_back((loss_at(plus) - loss_at(minus)) / (2 * h));
  }
  Params dir(Model::kParamCount);
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.uniform(-1.0, 1.0);
  dir.normalize();
  analytic.push_back(grad.dot(dir));
  numeric.push_back((loss_at(base + h * dir) - loss_at(base - h * dir)) / (2 * h));

  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max(std::sqrt(std::max(na, nn)), 1e-12);
  return std::sqrt(diff) / scale;
}

}  // namespace concon::testing
