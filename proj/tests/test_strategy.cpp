#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "mflq/errors.hpp"
#include "mflq/rng.hpp"
#include "mflq/strategy.hpp"
#include "test_models.hpp"

using namespace mflq;

namespace {

Vec draw_vec(NoiseStream& st, std::uint64_t& e, int dim) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = st.normal(e++);
  return v;
}

}  // namespace

TEST_CASE("open-loop control satisfies the stationarity condition at random samples") {
  for (const ModelParams& p :
       {table1_model(), testing::general_scalar_model(), testing::nonscalar_model()}) {
    const OpenLoopFollowerSolution fol = solve_follower_system(p, 400);
    NoiseStream st(hash64(7, 11, 13));
    const std::uint64_t pick_id = hash64(7, 11, 99);
    std::uint64_t e = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int k = static_cast<int>(uniform01(pick_id, trial) * fol.sol.steps());
      const Vec xbar_i = draw_vec(st, e, p.dims.n);
      const Vec xbar = draw_vec(st, e, p.dims.n);
      const Vec x0 = draw_vec(st, e, p.dims.n0);
      const Vec phi = draw_vec(st, e, p.dims.n);
      worst = std::max(worst, openloop_stationarity_residual(p, fol, k, xbar_i, xbar, x0, phi));
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("open-loop follower control matches the gain formula") {
  const ModelParams p = testing::nonscalar_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p, 400);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol, 400);
  const OpenLoopPolicy pol = build_openloop_policy(p, fol, leader);

  NoiseStream st(hash64(3, 5, 7));
  std::uint64_t e = 0;
  const int k = 137;
  const double t = fol.sol.time_at(k);
  const Vec xbar_i = draw_vec(st, e, p.dims.n);
  const Vec xbar = draw_vec(st, e, p.dims.n);
  const Vec x0 = draw_vec(st, e, p.dims.n0);
  const Vec phi = draw_vec(st, e, p.dims.n);

  const Vec u = openloop_follower_control(pol, t, xbar_i, xbar, x0, phi);
  const Mat& iU = fol.Ups_pinv[k];
  const Vec manual = -iU * (fol.Psi2[k] * xbar_i + fol.Psi3[k] * xbar + fol.Psi1[k] * x0 +
                            p.follower_dyn.B.transpose() * phi);
  CHECK(inf_norm((u - manual).eval()) < 1e-12);
}

TEST_CASE("open-loop leader control applies L0 to the stacked state") {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p, 400);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol, 400);
  const OpenLoopPolicy pol = build_openloop_policy(p, fol, leader);

  NoiseStream st(hash64(17, 19, 23));
  std::uint64_t e = 0;
  const int k = 61;
  const Vec X = draw_vec(st, e, leader.s);
  const Vec u0 = openloop_leader_control(pol, pol.stacked.time_at(k), X);
  CHECK(inf_norm((u0 - leader.L0[k] * X).eval()) < 1e-12);
}

TEST_CASE("feedback policy blocks agree with their defining formulas") {
  const ModelParams p = testing::nonscalar_model();
  const FeedbackSolution fb = solve_feedback_joint(p, 400);
  const FeedbackPolicy pol = build_feedback_policy(p, fb);

  const int k = 211;
  const Mat Ahat = p.follower_dyn.A + p.follower_dyn.G +
                   p.follower_dyn.B * (fb.Kx[k] + fb.Kxbar[k]);
  const Mat Fhat = p.follower_dyn.F + p.follower_dyn.B * fb.K0[k];
  CHECK(inf_norm(pol.mean_field.block(k, FeedbackPolicy::mAhat) - Ahat) < 1e-12);
  CHECK(inf_norm(pol.mean_field.block(k, FeedbackPolicy::mFhat) - Fhat) < 1e-12);
  CHECK(inf_norm(pol.leader_gains.block(k, FeedbackPolicy::lP0) - fb.P0[k]) < 1e-12);
  CHECK(inf_norm(pol.leader_gains.block(k, FeedbackPolicy::lPbar) - fb.Pbar[k]) < 1e-12);

  NoiseStream st(hash64(29, 31, 37));
  std::uint64_t e = 0;
  const double t = pol.follower_gains.time_at(k);
  const Vec xi = draw_vec(st, e, p.dims.n);
  const Vec xbar = draw_vec(st, e, p.dims.n);
  const Vec x0 = draw_vec(st, e, p.dims.n0);
  const Vec u = feedback_follower_control(pol, t, xi, xbar, x0);
  const Vec manual = fb.Kx[k] * xi + fb.Kxbar[k] * xbar + fb.K0[k] * x0;
  CHECK(inf_norm((u - manual).eval()) < 1e-12);

  const Vec u0 = feedback_leader_control(pol, t, x0, xbar);
  CHECK(inf_norm((u0 - (fb.P0[k] * x0 + fb.Pbar[k] * xbar)).eval()) < 1e-12);
}

TEST_CASE("controls reject times outside the horizon") {
  const ModelParams p = table1_model();
  const FeedbackSolution fb = solve_feedback_joint(p, 100);
  const FeedbackPolicy pol = build_feedback_policy(p, fb);
  const Vec x0 = Vec::Ones(p.dims.n0);
  const Vec xbar = Vec::Ones(p.dims.n);
  CHECK_THROWS_AS(feedback_leader_control(pol, -0.01, x0, xbar), ValidationError);
  CHECK_THROWS_AS(feedback_leader_control(pol, p.T + 0.01, x0, xbar), ValidationError);
}

TEST_CASE("finite-N policy at the limit gains reproduces the limit policy") {
  const ModelParams p = testing::general_scalar_model();
  const int K = 800;
  const FeedbackSolution fb = solve_feedback_joint(p, K);
  const TimeGridFn gains = leader_gain_grid(fb);
  const FiniteNFeedbackSolution fin = solve_finite_N(p, 0, gains, K);
  const FeedbackPolicy limit = build_feedback_policy(p, fb);
  const FeedbackPolicy recovered = build_feedback_policy(p, fin, gains);
  double worst = 0.0;
  for (int k = 0; k <= K; ++k) {
    for (int b = 0; b < FeedbackPolicy::gain_count; ++b) {
      worst = std::max(worst, inf_norm(limit.follower_gains.block(k, b) -
                                       recovered.follower_gains.block(k, b)));
    }
  }
  CHECK(worst < 1e-5);
}
