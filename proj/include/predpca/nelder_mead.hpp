#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace predpca {

struct NelderMeadOptions {
  int max_evals = 600;
  double ftol = 1e-9;        // spread of simplex values, relative to 1 + |f_best|
  double xtol = 1e-6;        // max vertex distance from the best vertex
  double initial_step = 0.5;
  double fabs_tol = 0.0;     // also stop once the simplex values agree to this, whatever its size
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = false;
};

/// Downhill simplex minimisation. Non-finite objective values are treated as
/// +inf, which lets callers encode box constraints and failed factorizations.
template <class Objective>
NelderMeadResult nelder_mead(Objective&& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& opt = {}) {
  const Eigen::Index d = x0.size();
  const auto eval = [&](const Eigen::VectorXd& x, int& evals) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  NelderMeadResult res;
  std::vector<Eigen::VectorXd> pts(d + 1, x0);
  std::vector<double> vals(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) pts[i + 1](i) += opt.initial_step;
  for (Eigen::Index i = 0; i <= d; ++i) vals[i] = eval(pts[i], res.evals);

  std::vector<std::size_t> order(d + 1);
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[d - 1];

    double spread = 0.0;
    for (std::size_t i : order) spread = std::max(spread, (pts[i] - pts[best]).lpNorm<Eigen::Infinity>());
    const bool flat = std::isfinite(vals[worst]) &&
                      vals[worst] - vals[best] <= opt.ftol * (1.0 + std::abs(vals[best]));
    const bool level = std::isfinite(vals[worst]) && vals[worst] - vals[best] <= opt.fabs_tol;
    if ((flat && spread <= opt.xtol) || level) {
      res.converged = true;
      break;
    }
    if (res.evals >= opt.max_evals) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = eval(reflected, res.evals);
    if (fr < vals[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(expanded, res.evals);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd contracted = outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                                               : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(contracted, res.evals);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i : order) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i], res.evals);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(it - vals.begin())];
  res.f = *it;
  return res;
}

}  // namespace predpca
