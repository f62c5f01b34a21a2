#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mflq/costs.hpp"
#include "mflq/errors.hpp"
#include "mflq/rng.hpp"
#include "test_models.hpp"

using namespace mflq;

namespace {

// Exact second moment of the closed-loop stacked state: for
// dX = Acl X dt + Ccl X dW the matrix M_X = E[X X^T] obeys
// dM_X/dt = Acl M_X + M_X Acl^T + Ccl M_X Ccl^T. The leader diffusion
// correction is then the time integral of tr(D0^T K D0 u0 u0^T) with
// u0 = L0 X, which gives an ODE oracle for the simulated correction.
double lyapunov_s_T(const ModelParams& p, const OpenLoopPolicy& pol) {
  const int K = pol.stacked.steps();
  const int n0 = p.dims.n0;

  Vec X0 = Vec::Zero(pol.s);
  X0.head(n0) = p.init.leader_mean;
  X0.segment(n0, p.dims.n) = p.init.follower_mean;
  Mat MX = X0 * X0.transpose();
  MX.topLeftCorner(n0, n0) += p.init.leader_cov;

  const auto rhs = [&](double t, const Mat& M) {
    const BlockVec b = pol.stacked.eval(t);
    const Mat& Acl = b[OpenLoopPolicy::sAcl];
    const Mat& Ccl = b[OpenLoopPolicy::sCcl];
    return (Acl * M + M * Acl.transpose() + Ccl * M * Ccl.transpose()).eval();
  };

  std::vector<double> integrand(K + 1);
  for (int k = 0; k <= K; ++k) {
    const Mat& L0 = pol.stacked.block(k, OpenLoopPolicy::sL0);
    const Mat& Km = pol.stacked.block(k, OpenLoopPolicy::sKmat);
    const Mat W = p.leader_dyn.D0.transpose() * Km * p.leader_dyn.D0;
    integrand[k] = (W * (L0 * MX * L0.transpose())).trace();
    if (k == K) break;
    const double t0 = pol.stacked.time_at(k);
    const double t1 = pol.stacked.time_at(k + 1);
    const double dt = t1 - t0;
    const double tm = 0.5 * (t0 + t1);
    const Mat k1 = rhs(t0, MX);
    const Mat k2 = rhs(tm, MX + 0.5 * dt * k1);
    const Mat k3 = rhs(tm, MX + 0.5 * dt * k2);
    const Mat k4 = rhs(t1, MX + dt * k3);
    MX += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return trapezoid(integrand, p.T);
}

}  // namespace

TEST_CASE("bundled model closed forms hit their reference values") {
  const ModelParams p = table1_model();
  const FeedbackSolution fb = solve_feedback_joint(p);
  CHECK(closed_form_social_feedback(p, fb) == doctest::Approx(5.640711342082).epsilon(1e-9));
  CHECK(closed_form_leader_feedback(p, fb) == doctest::Approx(19.091897736232).epsilon(1e-9));

  const OpenLoopFollowerSolution fol = solve_follower_system(p);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol);
  CHECK(closed_form_leader_openloop(p, leader) == doctest::Approx(19.333265806693).epsilon(1e-9));
  CHECK(closed_form_social_openloop(p, fol, leader, 0.134506) ==
        doctest::Approx(5.607746).epsilon(2e-5));
}

TEST_CASE("feedback closed forms agree with direct sampling of the value function") {
  const ModelParams p = testing::general_scalar_model();
  const FeedbackSolution fb = solve_feedback_joint(p);
  const Mat M = fb.M(0), Mbar = fb.Mbar(0), Lam0 = fb.Lam0(0), Lambar = fb.Lambar(0);
  const Mat Th1 = fb.Th1(0), Th2 = fb.Th2(0), Th3 = fb.Th3(0);
  const Vec xb = p.init.follower_mean;
  const Vec xb0 = p.init.leader_mean;
  const double s_f = std::sqrt(p.init.follower_cov(0, 0));
  const double s_l = std::sqrt(p.init.leader_cov(0, 0));

  NoiseStream st{hash64(101, 103, 107), false};
  const int draws = 1000000;
  double acc_soc = 0.0, acc_lead = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double xi = xb(0) + s_f * st.normal(2 * i);
    const double xi0 = xb0(0) + s_l * st.normal(2 * i + 1);
    acc_soc += M(0, 0) * xi * xi + Lam0(0, 0) * xi0 * xi0 + 2.0 * xi0 * Lambar(0, 0) * xb(0);
    acc_lead += Th1(0, 0) * xi0 * xi0 + 2.0 * xb(0) * Th3(0, 0) * xi0;
  }
  const double sampled_social = acc_soc / draws + xb(0) * Mbar(0, 0) * xb(0);
  const double sampled_leader = acc_lead / draws + xb(0) * Th2(0, 0) * xb(0);

  CHECK(sampled_social == doctest::Approx(closed_form_social_feedback(p, fb)).epsilon(2e-2));
  CHECK(sampled_leader == doctest::Approx(closed_form_leader_feedback(p, fb)).epsilon(2e-2));
}

TEST_CASE("simulated diffusion correction matches the second-moment oracle") {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol);
  const OpenLoopPolicy pol = build_openloop_policy(p, fol, leader);

  const double lyap = lyapunov_s_T(p, pol);
  CHECK(lyap == doctest::Approx(0.134506).epsilon(1e-2));

  SimConfig cfg;
  cfg.N = 10;
  cfg.paths = 400;
  cfg.sim_steps = 500;
  cfg.store_every = 5;
  cfg.seed = 90210;
  const Ensemble ens = simulate_openloop(p, pol, cfg);
  CHECK(openloop_s_T(p, ens) == doctest::Approx(lyap).epsilon(0.10));
}

TEST_CASE("the correction term vanishes exactly when its channels are absent") {
  CHECK(!openloop_s_T_vanishes(table1_model()));

  ModelParams quiet = testing::general_scalar_model();
  quiet.leader_dyn.D0 = Mat::Zero(1, 1);
  quiet.leader_dyn.Gbar0 = Mat::Zero(1, 1);
  quiet.leader_dyn.B0 = Mat::Zero(1, 1);
  CHECK(openloop_s_T_vanishes(quiet));
  CHECK(openloop_s_T(quiet, Ensemble{}) == 0.0);

  CHECK_THROWS_AS(openloop_s_T(table1_model(), Ensemble{}), ValidationError);
}

TEST_CASE("cost reports assemble the empirical and closed-form pieces") {
  const ModelParams p = table1_model();
  const FeedbackSolution fb = solve_feedback_joint(p, 500);
  const FeedbackPolicy pol = build_feedback_policy(p, fb);
  SimConfig cfg;
  cfg.N = 20;
  cfg.paths = 30;
  cfg.sim_steps = 200;
  cfg.store_every = 10;
  cfg.seed = 7007;
  const Ensemble ens = simulate_feedback(p, pol, cfg);
  const CostReport rep = cost_report_feedback(p, fb, ens);

  CHECK(rep.mode == "feedback");
  CHECK(rep.N == 20);
  CHECK(rep.paths == 30);
  CHECK(rep.J0_mean == ens.J0_mean());
  CHECK(rep.per_capita_social == ens.Jsoc_mean() / 20.0);
  CHECK(rep.meanfield_gap == ens.sup_gap());
  CHECK(rep.closed_form_social == closed_form_social_feedback(p, fb));
  CHECK(rep.s_T == 0.0);
  CHECK(std::isnan(rep.epsilon_hat));
}

TEST_CASE("riccati gap study recovers the 1/N rate") {
  const ModelParams p = table1_model();
  const FeedbackSolution fb = solve_feedback_joint(p, 400);
  const ConvergenceStudy study = riccati_gap_study(p, fb, {10, 20, 40}, 400);
  CHECK(study.status == "ok");
  CHECK(study.slope > -1.3);
  CHECK(study.slope < -0.7);

  CHECK_THROWS_AS(riccati_gap_study(p, fb, {10, 20}, 400), ValidationError);
}

TEST_CASE("a population-independent system reports no measurable rate") {
  // The population size only enters through the D- and C-weighted blocks
  // and the leader gain loop, so removing those channels makes the finite-N
  // system coincide with its limit for every N and leaves the rate fit with
  // nothing to measure.
  ModelParams p = testing::general_scalar_model();
  p.follower_dyn.C = Mat::Zero(1, 1);
  p.follower_dyn.D = Mat::Zero(1, 1);
  p.follower_dyn.Gbar = Mat::Zero(1, 1);
  p.follower_dyn.Fbar = Mat::Zero(1, 1);
  p.leader_dyn.B0 = Mat::Zero(1, 1);
  p.leader_dyn.D0 = Mat::Zero(1, 1);
  const FeedbackSolution fb = solve_feedback_joint(p, 200);
  const ConvergenceStudy study = riccati_gap_study(p, fb, {4, 8, 16}, 200);
  CHECK(study.status == "not-applicable");
}

TEST_CASE("a zero-magnitude probe cannot beat the base profile") {
  const ModelParams p = table1_model();
  const FeedbackSolution fb = solve_feedback_joint(p, 400);
  SimConfig cfg;
  cfg.N = 10;
  cfg.store_every = 10;
  ProbeConfig pc;
  pc.n_shapes = 1;
  pc.magnitudes = {0.0};
  pc.paths = 20;
  pc.sim_steps = 100;
  const EpsilonEstimate est = epsilon_probe_leader_feedback(p, fb, cfg, pc);
  CHECK(est.epsilon_hat == 0.0);
  CHECK(est.se == 0.0);
  CHECK(est.best_probe_cost == est.base_cost);
}

TEST_CASE("probes flag a weakened profile but not the equilibrium") {
  const ModelParams p = table1_model();
  const FeedbackSolution fb = solve_feedback_joint(p, 400);
  const FeedbackPolicy pol = build_feedback_policy(p, fb);

  FeedbackPolicy weak = pol;
  std::vector<BlockVec> vals = pol.follower_gains.values();
  for (auto& v : vals) v[FeedbackPolicy::gX] *= 0.7;
  weak.follower_gains = TimeGridFn(p.T, std::move(vals));

  SimConfig cfg;
  cfg.N = 20;
  ProbeConfig pc;
  pc.paths = 40;
  pc.sim_steps = 200;

  const EpsilonEstimate at_eq = epsilon_probe_followers_feedback(p, pol, cfg, pc);
  const EpsilonEstimate off_eq = epsilon_probe_followers_feedback(p, weak, cfg, pc);
  CHECK(at_eq.epsilon_hat == 0.0);
  CHECK(off_eq.base_cost > at_eq.base_cost);
  CHECK(off_eq.epsilon_hat > 5.0 * off_eq.se);
  CHECK(off_eq.epsilon_hat > 0.01);
}

TEST_CASE("small probe sweeps run and report sane estimates") {
  const ModelParams p = table1_model();
  SimConfig cfg;
  cfg.N = 10;
  cfg.store_every = 10;
  ProbeConfig pc;
  pc.n_shapes = 2;
  pc.magnitudes = {0.1};
  pc.paths = 20;
  pc.sim_steps = 100;

  const FeedbackSolution fb = solve_feedback_joint(p, 400);
  const FeedbackPolicy fpol = build_feedback_policy(p, fb);
  const EpsilonEstimate ef = epsilon_probe_followers_feedback(p, fpol, cfg, pc);
  CHECK(ef.epsilon_hat >= 0.0);
  CHECK(std::isfinite(ef.epsilon_hat));
  CHECK(ef.se >= 0.0);
  CHECK(ef.best_shape >= 0);
  CHECK(ef.base_cost == doctest::Approx(closed_form_social_feedback(p, fb)).epsilon(0.5));

  const OpenLoopFollowerSolution fol = solve_follower_system(p, 400);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol, 400);
  const OpenLoopPolicy opol = build_openloop_policy(p, fol, leader);
  const EpsilonEstimate el = epsilon_probe_leader_openloop(p, fol, opol, cfg, pc);
  CHECK(el.epsilon_hat >= 0.0);
  CHECK(std::isfinite(el.epsilon_hat));
  CHECK(el.se >= 0.0);
}
