#include "mflq/strategy.hpp"

#include "mflq/errors.hpp"

namespace mflq {

OpenLoopPolicy build_openloop_policy(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                     const StackedLeaderSolution& leader) {
  const int K = fol.sol.steps();
  if (static_cast<int>(leader.As.size()) != K + 1 || leader.Pcal.steps() != K) {
    throw ValidationError("build_openloop_policy: follower and leader solutions use different grids");
  }
  const auto& fd = p.follower_dyn;

  OpenLoopPolicy pol;
  pol.dims = p.dims;
  pol.s = leader.s;
  pol.D0s = leader.D0s;

  std::vector<BlockVec> stacked(K + 1), gains(K + 1);
  for (int k = 0; k <= K; ++k) {
    const Mat& Pc = leader.Pcal.block(k, 0);
    const Mat Acl = leader.As[k] - leader.Bs[k] * Pc + leader.B0s[k] * leader.L0[k];
    const Mat Ccl = leader.C0s + leader.D0s * leader.L0[k];
    stacked[k] = {Acl,          Ccl, leader.L0[k], leader.Bs[k],
                  leader.B0s[k], Pc,  fol.K(k)};
    const Mat& iU = fol.Ups_pinv[k];
    gains[k] = {-iU * fol.Psi2[k], -iU * fol.Psi3[k], -iU * fol.Psi1[k],
                -iU * fd.B.transpose()};
  }
  pol.stacked = TimeGridFn(p.T, std::move(stacked));
  pol.follower_gains = TimeGridFn(p.T, std::move(gains));
  return pol;
}

FeedbackPolicy build_feedback_policy(const ModelParams& p, const FeedbackSolution& fb) {
  const int K = fb.sol.steps();
  const auto& fd = p.follower_dyn;

  FeedbackPolicy pol;
  pol.dims = p.dims;
  std::vector<BlockVec> lg(K + 1), fg(K + 1), mf(K + 1);
  for (int k = 0; k <= K; ++k) {
    lg[k] = {fb.P0[k], fb.Pbar[k]};
    fg[k] = {fb.Kx[k], fb.Kxbar[k], fb.K0[k]};
    mf[k] = {fd.A + fd.G + fd.B * (fb.Kx[k] + fb.Kxbar[k]), fd.F + fd.B * fb.K0[k]};
  }
  pol.leader_gains = TimeGridFn(p.T, std::move(lg));
  pol.follower_gains = TimeGridFn(p.T, std::move(fg));
  pol.mean_field = TimeGridFn(p.T, std::move(mf));
  return pol;
}

FeedbackPolicy build_feedback_policy(const ModelParams& p, const FiniteNFeedbackSolution& fol,
                                     const TimeGridFn& leader_gains) {
  const int K = fol.sol.steps();
  const auto& fd = p.follower_dyn;

  FeedbackPolicy pol;
  pol.dims = p.dims;
  std::vector<BlockVec> lg(K + 1), fg(K + 1), mf(K + 1);
  for (int k = 0; k <= K; ++k) {
    lg[k] = leader_gains.eval(fol.sol.time_at(k));
    fg[k] = {fol.Kx[k], fol.Kxbar[k], fol.K0[k]};
    mf[k] = {fd.A + fd.G + fd.B * (fol.Kx[k] + fol.Kxbar[k]), fd.F + fd.B * fol.K0[k]};
  }
  pol.leader_gains = TimeGridFn(p.T, std::move(lg));
  pol.follower_gains = TimeGridFn(p.T, std::move(fg));
  pol.mean_field = TimeGridFn(p.T, std::move(mf));
  return pol;
}

Vec openloop_leader_control(const OpenLoopPolicy& pol, double t, const Vec& X) {
  return pol.stacked.eval(t)[OpenLoopPolicy::sL0] * X;
}

Vec openloop_follower_control(const OpenLoopPolicy& pol, double t, const Vec& xbar_i,
                              const Vec& xbar, const Vec& x0, const Vec& phi) {
  const BlockVec g = pol.follower_gains.eval(t);
  return g[OpenLoopPolicy::gXi] * xbar_i + g[OpenLoopPolicy::gXbar] * xbar +
         g[OpenLoopPolicy::gX0] * x0 + g[OpenLoopPolicy::gPhi] * phi;
}

Vec feedback_leader_control(const FeedbackPolicy& pol, double t, const Vec& x0, const Vec& xbar) {
  const BlockVec g = pol.leader_gains.eval(t);
  return g[FeedbackPolicy::lP0] * x0 + g[FeedbackPolicy::lPbar] * xbar;
}

Vec feedback_follower_control(const FeedbackPolicy& pol, double t, const Vec& xi, const Vec& xbar,
                              const Vec& x0) {
  const BlockVec g = pol.follower_gains.eval(t);
  return g[FeedbackPolicy::gX] * xi + g[FeedbackPolicy::gXbar] * xbar +
         g[FeedbackPolicy::gX0] * x0;
}

double openloop_stationarity_residual(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                      int k, const Vec& xbar_i, const Vec& xbar, const Vec& x0,
                                      const Vec& phi) {
  const auto& fd = p.follower_dyn;
  const Mat& iU = fol.Ups_pinv[k];
  const Vec u = -iU * (fol.Psi2[k] * xbar_i + fol.Psi3[k] * xbar + fol.Psi1[k] * x0 +
                       fd.B.transpose() * phi);
  const Vec pbar = fol.P(k) * xbar_i + fol.Pbar(k) * xbar + fol.P0(k) * x0 + phi;
  const Vec qbar = fol.P(k) * (fd.C * xbar_i + fd.D * u + fd.Gbar * xbar + fd.Fbar * x0);
  const Vec defect =
      p.follower_cost.R * u + fd.B.transpose() * pbar + fd.D.transpose() * qbar;
  return defect.cwiseAbs().maxCoeff();
}

}  // namespace mflq
