#include <gtest/gtest.h>

#include "predpca/pred_pca.hpp"
#include "test_util.hpp"

using namespace predpca;
using testutil::direct_objective;
using testutil::random_matrix;
using testutil::signed_deviation;
using testutil::unit;

namespace {

CovariateBasis basis_of(const Eigen::MatrixXd& z) { return CovariateBasis(z, {}); }

Eigen::MatrixXd projector(const Eigen::MatrixXd& z) {
  return z * (z.transpose() * z).inverse() * z.transpose();
}

double constrained_oracle(const Eigen::MatrixXd& R, const Eigen::MatrixXd& P, double lambda, Eigen::VectorXd v) {
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 3000; ++it) {
    Eigen::VectorXd w = P * (R * v);
    if (w.norm() == 0.0) break;
    w.normalize();
    const Eigen::VectorXd y = R.transpose() * w;
    Eigen::VectorXd next(y.size());
    for (Eigen::Index j = 0; j < y.size(); ++j)
      next(j) = std::copysign(std::max(std::abs(y(j)) - lambda, 0.0), y(j));
    if (next.norm() == 0.0) break;
    best = std::min(best, direct_objective(R, w, next, lambda));
    if ((next - v).norm() < 1e-13 * v.norm()) break;
    v = next;
  }
  return best;
}

std::vector<double> zeros(int k) { return std::vector<double>(static_cast<std::size_t>(k), 0.0); }

}  // namespace

TEST(SolveAlpha, OrthonormalBasisIsProjection) {
  Rng rng(1);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(15, 4, rng));
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(15, 4);
  const Eigen::MatrixXd R = random_matrix(15, 3, rng);
  const Eigen::VectorXd v = random_matrix(3, 1, rng).col(0);
  const Eigen::VectorXd W = R * v / v.squaredNorm();
  EXPECT_LT((solve_alpha(basis_of(Q), R, v) - Q.transpose() * W).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SolveAlpha, ExactWhenTargetInSpan) {
  Rng rng(2);
  const Eigen::MatrixXd Z = random_matrix(6, 5, rng);
  const Eigen::VectorXd v = random_matrix(3, 1, rng).col(0);
  // R v / v'v lies in col(Z) by construction.
  const Eigen::MatrixXd R = Z * random_matrix(5, 3, rng);
  const Eigen::VectorXd alpha = solve_alpha(basis_of(Z), R, v);
  EXPECT_LT((Z * alpha - R * v / v.squaredNorm()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SolveAlpha, HandNormalEquations) {
  const Eigen::MatrixXd Z = (Eigen::MatrixXd(5, 2) << 1, 0.5, 1, -1.0, 1, 2.0, 1, 0.0, 1, 1.5).finished();
  const Eigen::MatrixXd R = (Eigen::MatrixXd(5, 3) << 0.2, 1.0, -0.5,  //
                             1.1, -0.3, 0.4,                          //
                             -0.7, 0.8, 0.9,                          //
                             0.5, 0.5, -1.2,                          //
                             1.4, -0.6, 0.3)
                                .finished();
  const Eigen::Vector3d v(0.6, -0.2, 0.9);
  const Eigen::VectorXd W = R * v / v.squaredNorm();
  // 2x2 normal equations solved by the explicit inverse formula.
  double a = 0, b = 0, d = 0, r0 = 0, r1 = 0;
  for (int i = 0; i < 5; ++i) {
    a += Z(i, 0) * Z(i, 0);
    b += Z(i, 0) * Z(i, 1);
    d += Z(i, 1) * Z(i, 1);
    r0 += Z(i, 0) * W(i);
    r1 += Z(i, 1) * W(i);
  }
  const double det = a * d - b * b;
  const Eigen::Vector2d oracle((d * r0 - b * r1) / det, (-b * r0 + a * r1) / det);
  EXPECT_LT((solve_alpha(basis_of(Z), R, v) - oracle).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SolveAlpha, Errors) {
  Rng rng(3);
  Eigen::MatrixXd Z = random_matrix(8, 3, rng);
  Z.col(2) = Z.col(0) * 2.0 - Z.col(1);
  EXPECT_THROW(basis_of(Z), NumericalError);
  EXPECT_THROW(basis_of(random_matrix(3, 3, rng)), ValidationError);
  const CovariateBasis ok = basis_of(random_matrix(8, 3, rng));
  EXPECT_THROW(solve_alpha(ok, random_matrix(8, 2, rng), Eigen::VectorXd::Zero(2)), ValidationError);
}

TEST(CovariateBasis, AssembleAddsIntercept) {
  Rng rng(4);
  const Eigen::MatrixXd g = random_matrix(10, 2, rng), s = random_matrix(10, 3, rng);
  const CovariateBasis b = CovariateBasis::assemble(g, s);
  EXPECT_EQ(b.cols(), 6);
  EXPECT_EQ(b.matrix().col(0), Eigen::VectorXd::Ones(10));
  EXPECT_EQ(b.column_names().front(), "intercept");
  EXPECT_EQ(b.column_names()[1], "gis_1");
  EXPECT_EQ(b.column_names()[5], "tps_3");
}

TEST(Rank1Predictive, ExactRecoveryInSpan) {
  Rng rng(5);
  const Eigen::MatrixXd Z = random_matrix(20, 4, rng);
  const Eigen::VectorXd a0 = random_matrix(4, 1, rng).col(0);
  const Eigen::VectorXd v0 = random_matrix(6, 1, rng).col(0) * 2.0;
  const Eigen::MatrixXd R = unit(Z * a0) * v0.transpose();
  const PredictiveRank1Fit fit = rank1_predictive(R, basis_of(Z), 0.0, Eigen::VectorXd::Ones(6).normalized());
  EXPECT_NEAR(fit.objective_trace.back(), 0.0, 1e-10);
  EXPECT_LT(signed_deviation(unit(fit.v_tilde), unit(v0)), 1e-10);
  EXPECT_NEAR(fit.fitted_u.norm(), 1.0, 1e-10);
}

TEST(Rank1Predictive, VacuousConstraintMatchesUnconstrained) {
  Rng rng(6);
  const Eigen::MatrixXd Z = random_matrix(25, 6, rng);
  const Eigen::MatrixXd R = Z * random_matrix(6, 5, rng);
  const Eigen::VectorXd init = leading_right_singular_vector(R);
  const PredictiveRank1Fit pred = rank1_predictive(R, basis_of(Z), 0.0, init, {.tol = 1e-12, .max_iter = 2000});
  const Rank1Fit trad = rank1_sparse(R, 0.0, init, {.tol = 1e-12, .max_iter = 2000});
  EXPECT_LT(signed_deviation(pred.v_tilde, trad.v_tilde), 1e-8);
  EXPECT_LT(signed_deviation(pred.u_tilde, trad.u_tilde), 1e-8);
}

TEST(Rank1Predictive, MatchesMultiStartOracle) {
  Rng rng(7);
  const Eigen::MatrixXd R = random_matrix(20, 5, rng);
  const Eigen::MatrixXd Z = random_matrix(20, 4, rng);
  const double lambda = 0.2;
  const Eigen::MatrixXd P = projector(Z);
  double oracle = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 100; ++s) oracle = std::min(oracle, constrained_oracle(R, P, lambda, random_matrix(5, 1, rng).col(0)));
  const PredictiveRank1Fit fit = rank1_predictive_path(R, basis_of(Z), lambda, {.tol = 1e-12, .max_iter = 5000});
  EXPECT_LE(direct_objective(R, fit.u_tilde, fit.v_tilde, lambda), oracle + 1e-6);
}

TEST(Rank1Predictive, OneStepIsProjectedPowerIteration) {
  Rng rng(8);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(18, 5, rng));
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(18, 5);
  const Eigen::MatrixXd R = random_matrix(18, 4, rng);
  const Eigen::VectorXd v = unit(random_matrix(4, 1, rng).col(0));
  const PredictiveRank1Fit fit = rank1_predictive(R, basis_of(Q), 0.0, v, {.tol = 1e-6, .max_iter = 1});
  const Eigen::VectorXd expect = unit(Q * Q.transpose() * R * v);
  EXPECT_LT((fit.u_tilde - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fit.v_tilde - R.transpose() * expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rank1Predictive, ObjectiveNonIncreasingUnitFactor) {
  Rng rng(9);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::MatrixXd R = random_matrix(30, 7, rng);
    const CovariateBasis Z = basis_of(random_matrix(30, 5, rng));
    const double lambda = rng.uniform(0.0, 0.7) * lambda_max(R, PcaMethod::predictive, &Z);
    PredictiveRank1Fit fit;
    try {
      fit = rank1_predictive(R, Z, lambda, unit(random_matrix(7, 1, rng).col(0)));
    } catch (const FullyThresholdedError&) {
      continue;
    }
    ++checked;
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
      EXPECT_LE(fit.objective_trace[i], fit.objective_trace[i - 1] + 1e-12);
    EXPECT_NEAR(fit.u_tilde.norm(), 1.0, 1e-12);
  }
  EXPECT_GT(checked, 80);
}

TEST(Rank1Predictive, LambdaMaxThresholds) {
  Rng rng(10);
  const Eigen::MatrixXd R = random_matrix(20, 6, rng);
  const CovariateBasis Z = basis_of(random_matrix(20, 4, rng));
  const double top = lambda_max(R, PcaMethod::predictive, &Z);
  EXPECT_THROW(rank1_predictive_path(R, Z, top * 1.0000001), FullyThresholdedError);
  EXPECT_NO_THROW(rank1_predictive_path(R, Z, top * 0.5));
}

TEST(FitPredictive, SpannedDataAgreesWithTraditional) {
  Rng rng(11);
  const int n = 200;
  const Eigen::MatrixXd Z = [&] {
    Eigen::MatrixXd z(n, 6);
    z.col(0).setOnes();
    z.rightCols(5) = random_matrix(n, 5, rng);
    return z;
  }();
  Eigen::MatrixXd X = Z * random_matrix(6, 8, rng) * Eigen::VectorXd::LinSpaced(8, 3.0, 0.5).asDiagonal();
  X += 1e-3 * random_matrix(n, 8, rng);
  X = testutil::centered(X);
  const CovariateBasis basis = basis_of(Z);
  const PcModel pred = fit_predictive(X, basis, 3, zeros(3));
  const PcModel trad = fit_traditional(X, 3, zeros(3));
  for (int l = 0; l < 3; ++l) {
    EXPECT_GT(std::abs(pred.components[l].loading.dot(trad.components[l].loading)), 0.99);
    EXPECT_LT((pred.components[l].score - X * pred.components[l].loading).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_TRUE(pred.components[l].alpha.has_value());
    EXPECT_EQ(pred.components[l].alpha->size(), 6);
  }
  EXPECT_EQ(pred.basis_columns.size(), 6u);
}

TEST(FitPredictive, RankOneInSpanExplainsEverything) {
  Rng rng(12);
  const Eigen::MatrixXd Z = random_matrix(40, 4, rng);
  const Eigen::MatrixXd X = unit(Z * random_matrix(4, 1, rng).col(0)) * random_matrix(1, 5, rng) * 4.0;
  const PcModel m = fit_predictive(X, basis_of(Z), 1, zeros(1));
  EXPECT_NEAR(m.scores().squaredNorm() / X.squaredNorm(), 1.0, 1e-10);
}

TEST(FitPredictive, DeflatesWithConstrainedFactor) {
  Rng rng(13);
  const Eigen::MatrixXd X = testutil::centered(random_matrix(30, 6, rng));
  const CovariateBasis Z = basis_of(random_matrix(30, 4, rng));
  const PcModel m = fit_predictive(X, Z, 2, zeros(2));
  // Second component must equal a rank-1 fit on X - w1 v1~'.
  const PredictiveRank1Fit first = rank1_predictive_path(X, Z, 0.0);
  const Eigen::MatrixXd R2 = X - first.u_tilde * first.v_tilde.transpose();
  const PredictiveRank1Fit second = rank1_predictive_path(R2, Z, 0.0);
  EXPECT_LT(signed_deviation(m.components[1].loading, unit(second.v_tilde)), 1e-10);
}

TEST(ProjectScores, IgnoresBasisArtifacts) {
  Rng rng(14);
  const Eigen::MatrixXd X = testutil::centered(random_matrix(30, 5, rng));
  PcModel m = fit_predictive(X, basis_of(random_matrix(30, 4, rng)), 2, zeros(2));
  const Eigen::MatrixXd before = project_scores(X, m);
  for (auto& c : m.components) c.alpha = Eigen::VectorXd::Constant(4, 99.0);
  m.basis_columns = {"a", "b"};
  EXPECT_EQ(project_scores(X, m), before);
  EXPECT_LT((before - X * m.loadings()).cwiseAbs().maxCoeff(), 1e-12);
}
