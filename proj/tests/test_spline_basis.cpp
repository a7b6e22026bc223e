#include <gtest/gtest.h>

#include "predpca/spline_basis.hpp"
#include "test_util.hpp"

using namespace predpca;
using testutil::random_locations;

namespace {

// Residual norm of regressing y on the columns of X, via normal equations.
double residual_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  return (y - X * beta).norm();
}

Eigen::MatrixXd affine_design(std::span<const Location> locs) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(locs.size()), 3);
  for (std::size_t i = 0; i < locs.size(); ++i)
    a.row(static_cast<Eigen::Index>(i)) << 1.0, locs[i].x_km, locs[i].y_km;
  return a;
}

}  // namespace

TEST(TpsKernel, Values) {
  EXPECT_EQ(tps_kernel(0.0), 0.0);
  EXPECT_EQ(tps_kernel(1.0), 0.0);
  EXPECT_NEAR(tps_kernel(2.0), 4.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(tps_kernel(1e-8), 0.0, 1e-14);
}

TEST(TpsBasis, SquareIsFullRank) {
  Rng rng(1);
  const auto locs = random_locations(10, 100.0, rng);
  const auto b = tps_basis(locs, 10, 3);
  ASSERT_EQ(b.basis.rows(), 10);
  ASSERT_EQ(b.basis.cols(), 10);
  EXPECT_EQ(b.knots.size(), 7u);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(b.basis);
  EXPECT_EQ(lu.rank(), 10);
}

TEST(TpsBasis, AffineSurfaceInSpan) {
  Rng rng(2);
  const auto locs = random_locations(60, 300.0, rng);
  const auto b = tps_basis(locs, 10, 1);
  Eigen::VectorXd f(60);
  for (int i = 0; i < 60; ++i) f(i) = 2.0 - 0.3 * locs[i].x_km + 0.07 * locs[i].y_km;
  EXPECT_LT(residual_norm(b.basis, f), 1e-8 * f.norm());
}

TEST(TpsBasis, InterceptThenStandardizedColumns) {
  Rng rng(3);
  const auto locs = random_locations(50, 200.0, rng);
  const auto b = tps_basis(locs, 10, 2);
  EXPECT_TRUE((b.basis.col(0).array() == 1.0).all());
  const Eigen::MatrixXd w = b.without_intercept();
  ASSERT_EQ(w.cols(), 9);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    EXPECT_NEAR(w.col(c).mean(), 0.0, 1e-10);
    EXPECT_NEAR(sample_sd(w.col(c)), 1.0, 1e-10);
  }
}

TEST(TpsBasis, SmoothSurfaceBeatsAffine) {
  Rng rng(4);
  const auto locs = random_locations(200, 1000.0, rng);
  const auto b = tps_basis(locs, 10, 0);
  Eigen::VectorXd f(200);
  for (int i = 0; i < 200; ++i) f(i) = std::sin(locs[i].x_km / 200.0) * std::cos(locs[i].y_km / 200.0);
  const double tss = (f.array() - f.mean()).square().sum();
  const double r2_spline = 1.0 - std::pow(residual_norm(b.basis, f), 2) / tss;
  const double r2_affine = 1.0 - std::pow(residual_norm(affine_design(locs), f), 2) / tss;
  EXPECT_GT(r2_spline, r2_affine);
}

TEST(TpsBasis, KnotsAreFarthestPoints) {
  std::vector<Location> locs{{0, 0}, {1, 0}, {10, 0}, {0, 10}, {5, 5}, {1, 1}};
  // Oracle: greedy selection written out directly, from the same seeded start.
  const auto idx = farthest_point_knots(locs, 4, 9);
  ASSERT_EQ(idx.size(), 4u);
  std::vector<std::size_t> oracle{idx[0]};
  while (oracle.size() < 4) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < locs.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t k : oracle) d = std::min(d, std::hypot(locs[i].x_km - locs[k].x_km, locs[i].y_km - locs[k].y_km));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    oracle.push_back(best);
  }
  EXPECT_EQ(idx, oracle);
}

TEST(EvalBasis, TrainingLocationsReproduceBasis) {
  Rng rng(5);
  const auto locs = random_locations(40, 150.0, rng);
  const auto b = tps_basis(locs, 10, 4);
  EXPECT_LT((eval_basis(b, locs) - b.basis).cwiseAbs().maxCoeff(), 1e-10);
  const std::vector<Location> one{locs[13]};
  EXPECT_LT((eval_basis(b, one).row(0) - b.basis.row(13)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EvalBasis, MidpointMatchesDirectKernel) {
  Rng rng(6);
  const auto locs = random_locations(30, 80.0, rng);
  const auto b = tps_basis(locs, 8, 5);
  const Location& k0 = b.knots[0];
  const Location& k1 = b.knots[1];
  const Location mid{(k0.x_km + k1.x_km) / 2.0, (k0.y_km + k1.y_km) / 2.0};
  const std::vector<Location> pts{mid};
  const Eigen::MatrixXd row = eval_basis(b, pts);
  for (std::size_t k = 0; k < b.knots.size(); ++k) {
    const double r = std::hypot(mid.x_km - b.knots[k].x_km, mid.y_km - b.knots[k].y_km);
    const double eta = r > 0.0 ? r * r * std::log(r) : 0.0;
    const Eigen::Index c = static_cast<Eigen::Index>(k) + 3;
    EXPECT_NEAR(row(0, c), (eta - b.center(c)) / b.scale(c), 1e-10);
  }
  EXPECT_NEAR(row(0, 1), (mid.x_km - b.center(1)) / b.scale(1), 1e-12);
}

TEST(EvalBasis, RejectsNonFinite) {
  Rng rng(7);
  const auto locs = random_locations(20, 50.0, rng);
  const auto b = tps_basis(locs, 6, 0);
  const std::vector<Location> bad{{std::nan(""), 1.0}};
  EXPECT_THROW(eval_basis(b, bad), ValidationError);
}

TEST(TpsBasis, TranslationStaysInColumnSpace) {
  Rng rng(8);
  const auto locs = random_locations(80, 400.0, rng);
  auto shifted = locs;
  for (auto& l : shifted) {
    l.x_km += 123.4;
    l.y_km -= 56.7;
  }
  const auto b = tps_basis(locs, 10, 11);
  const auto bs = tps_basis(shifted, 10, 11);
  for (Eigen::Index c = 0; c < bs.basis.cols(); ++c)
    EXPECT_LT(residual_norm(b.basis, bs.basis.col(c)), 1e-8 * bs.basis.col(c).norm()) << c;
}

TEST(TpsBasis, Deterministic) {
  Rng rng(9);
  const auto locs = random_locations(70, 300.0, rng);
  const auto a = tps_basis(locs, 10, 42);
  const auto b = tps_basis(locs, 10, 42);
  EXPECT_EQ(a.basis, b.basis);
  EXPECT_EQ(a.knots, b.knots);
}

TEST(TpsBasis, Errors) {
  std::vector<Location> dup{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0, 0}};
  try {
    tps_basis(dup, 4);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("coincident points"), std::string::npos);
  }
  std::vector<Location> ok{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 3}};
  try {
    tps_basis(ok, 2);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("rank below affine span"), std::string::npos);
  }
  EXPECT_THROW(tps_basis(ok, 6), ValidationError);
  std::vector<Location> line{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}};
  EXPECT_THROW(tps_basis(line, 3), ValidationError);
}
