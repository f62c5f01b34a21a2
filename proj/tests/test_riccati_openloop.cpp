#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mflq/errors.hpp"
#include "mflq/riccati_feedback.hpp"
#include "mflq/riccati_openloop.hpp"
#include "test_models.hpp"

using namespace mflq;

namespace {

TimeGridFn zero_leader_gains(const ModelParams& p) {
  const BlockVec zero{Mat::Zero(p.dims.m0, p.dims.n0), Mat::Zero(p.dims.m0, p.dims.n)};
  return TimeGridFn(p.T, {zero, zero});
}

double max_transpose_gap(const OpenLoopFollowerSolution& fol) {
  double worst = 0.0;
  for (int k = 0; k <= fol.sol.steps(); ++k) {
    worst = std::max(worst, inf_norm(fol.Kbar(k).transpose() - fol.P0(k)));
  }
  return worst;
}

double max_asymmetry(const TimeGridFn& sol, int block) {
  double worst = 0.0;
  for (int k = 0; k <= sol.steps(); ++k) {
    const Mat& m = sol.block(k, block);
    worst = std::max(worst, inf_norm(m - m.transpose()));
  }
  return worst;
}

}  // namespace

TEST_CASE("bundled model landmarks at t = 0") {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p);
  CHECK(fol.solvability_ok);
  CHECK(fol.K(0)(0, 0) == doctest::Approx(5.11543732e-02).epsilon(1e-7));
  CHECK(fol.P(0)(0, 0) == doctest::Approx(0.2554938626476).epsilon(1e-9));
  // Gamma = Ghat = 1 forces Pbar = -P and kills the leader cross blocks
  CHECK(inf_norm(fol.P(0) + fol.Pbar(0)) < 1e-12);
  CHECK(inf_norm(fol.Kbar(0)) < 1e-12);
  CHECK(inf_norm(fol.P0(0)) < 1e-12);

  const StackedLeaderSolution leader = solve_leader_stacked(p, fol);
  const Mat& Pc = leader.Pcal.block(0, 0);
  CHECK(Pc(0, 0) == doctest::Approx(0.0482086994).epsilon(1e-7));
  CHECK(Pc(0, 1) == doctest::Approx(-0.0257302961).epsilon(1e-7));
  CHECK(Pc(1, 0) == doctest::Approx(-0.0257302961).epsilon(1e-7));
  CHECK(Pc(1, 1) == doctest::Approx(0.6834170188).epsilon(1e-7));
}

TEST_CASE("stacked solution keeps the auxiliary rows structurally zero") {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p, 400);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol, 400);
  const int half = p.dims.n0 + p.dims.n;
  double worst = 0.0;
  for (int k = 0; k <= leader.Pcal.steps(); ++k) {
    worst = std::max(worst, inf_norm(leader.Pcal.block(k, 0).bottomRows(half)));
  }
  CHECK(worst < 1e-13);
}

TEST_CASE("cross blocks stay transposes of each other along the flow") {
  CHECK(max_transpose_gap(solve_follower_system(table1_model(), 400)) < 1e-12);
  CHECK(max_transpose_gap(solve_follower_system(testing::general_scalar_model(), 400)) < 1e-10);
  CHECK(max_transpose_gap(solve_follower_system(testing::nonscalar_model(), 400)) < 1e-8);
}

TEST_CASE("symmetric blocks stay symmetric on a nonscalar model") {
  const OpenLoopFollowerSolution fol = solve_follower_system(testing::nonscalar_model(), 400);
  CHECK(max_asymmetry(fol.sol, OpenLoopFollowerSolution::bK) < 1e-8);
  CHECK(max_asymmetry(fol.sol, OpenLoopFollowerSolution::bP) < 1e-8);
  CHECK(max_asymmetry(fol.sol, OpenLoopFollowerSolution::bPbar) < 1e-8);
}

TEST_CASE("staggered residuals sit well inside the module tolerance") {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p);
  const BlockRhs rhs = [&](double, const BlockVec& y) { return openloop_follower_rhs(p, y); };
  CHECK(residual_staggered(fol.sol, rhs) < 1e-7);

  const StackedLeaderSolution leader = solve_leader_stacked(p, fol);
  CHECK(leader.staggered_residual >= 0.0);
  CHECK(leader.staggered_residual < 1e-7);
}

TEST_CASE("the open-loop system is the zero-gain follower consistency system") {
  // mapping: P = M, Pbar = Mbar, K = Lam0, Kbar = Lambar, P0 = M0
  for (const ModelParams& p :
       {testing::general_scalar_model(), testing::nonscalar_model()}) {
    const int K = 300;
    const OpenLoopFollowerSolution fol = solve_follower_system(p, K);
    const FiniteNFeedbackSolution fin = solve_finite_N(p, 0, zero_leader_gains(p), K);
    double worst = 0.0;
    for (int k = 0; k <= K; ++k) {
      worst = std::max(worst, inf_norm(fol.P(k) - fin.M(k)));
      worst = std::max(worst, inf_norm(fol.Pbar(k) - fin.Mbar(k)));
      worst = std::max(worst, inf_norm(fol.K(k) - fin.Lam0(k)));
      worst = std::max(worst, inf_norm(fol.Kbar(k) - fin.Lambar(k)));
      worst = std::max(worst, inf_norm(fol.P0(k) - fin.M0(k)));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("grid refinement self-convergence") {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution coarse = solve_follower_system(p, 2000);
  const OpenLoopFollowerSolution fine = solve_follower_system(p, 4000);
  const double d = rel_diff({coarse.P(0)}, {fine.P(0)});
  CHECK(d < 1e-10);
}

TEST_CASE("a singular control weight trips the solvability flags") {
  ModelParams p = testing::general_scalar_model();
  p.follower_cost.R = Mat::Zero(1, 1);
  p.follower_dyn.D = Mat::Zero(1, 1);  // Upsilon vanishes identically
  const OpenLoopFollowerSolution fol = solve_follower_system(p, 200);
  CHECK(!fol.solvability_ok);
  CHECK(!fol.solvability_notes.empty());
}

TEST_CASE("stacked assembly rejects a foreign grid") {
  const ModelParams p = table1_model();
  ModelParams other = p;
  other.T = 2.0;
  const OpenLoopFollowerSolution fol = solve_follower_system(other, 200);
  CHECK_THROWS_AS(solve_leader_stacked(p, fol, 400), ValidationError);
}
