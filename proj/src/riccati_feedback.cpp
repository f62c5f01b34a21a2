#include "mflq/riccati_feedback.hpp"

#include <cmath>

#include "mflq/errors.hpp"

namespace mflq {

FeedbackStage feedback_stage(const ModelParams& p, const BlockVec& y8, double t) {
  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;
  const Mat& M = y8[FeedbackSolution::bM];
  const Mat& Mbar = y8[FeedbackSolution::bMbar];
  const Mat& M0 = y8[FeedbackSolution::bM0];
  const Mat& Th1 = y8[FeedbackSolution::bTh1];
  const Mat& Th3 = y8[FeedbackSolution::bTh3];

  FeedbackStage s;
  s.Ups = p.follower_cost.R + fd.D.transpose() * M * fd.D;
  s.Ups_inv = strict_inverse(s.Ups, 1e-10, t);
  s.Psi = fd.B.transpose() * M + fd.D.transpose() * M * fd.C;
  s.Psibar = fd.B.transpose() * Mbar + fd.D.transpose() * M * fd.Gbar;
  s.Psi0 = fd.B.transpose() * M0 + fd.D.transpose() * M * fd.Fbar;

  s.Ups0 = p.leader_cost.R0 + ld.D0.transpose() * Th1 * ld.D0;
  s.Ups0_inv = strict_inverse(s.Ups0, 1e-10, t);
  s.Psi4 = ld.B0.transpose() * Th1 + ld.D0.transpose() * Th1 * ld.C0;
  s.Psi5 = ld.B0.transpose() * Th3.transpose() + ld.D0.transpose() * Th1 * ld.Gbar0;
  s.P0 = -s.Ups0_inv * s.Psi4;
  s.Pbar = -s.Ups0_inv * s.Psi5;
  return s;
}

BlockVec feedback_joint_terminal(const ModelParams& p) {
  const auto w = weight_aggregates(p.follower_cost);
  const auto& fc = p.follower_cost;
  const auto& lc = p.leader_cost;
  BlockVec y(FeedbackSolution::block_count);
  y[FeedbackSolution::bM] = fc.H;
  y[FeedbackSolution::bMbar] = -w.H_Ghat;
  y[FeedbackSolution::bM0] = -w.H_Ghat1;
  y[FeedbackSolution::bLam0] = fc.Ghat1.transpose() * fc.H * fc.Ghat1;
  y[FeedbackSolution::bLambar] = -w.H_Ghat1.transpose();
  y[FeedbackSolution::bTh1] = lc.H0;
  y[FeedbackSolution::bTh2] = lc.Ghat0.transpose() * lc.H0 * lc.Ghat0;
  y[FeedbackSolution::bTh3] = -lc.Ghat0.transpose() * lc.H0;
  return y;
}

BlockVec finiteN_terminal(const ModelParams& p) {
  BlockVec full = feedback_joint_terminal(p);
  return BlockVec(full.begin(), full.begin() + FiniteNFeedbackSolution::block_count);
}

namespace {

// Follower-side derivatives shared by the limit and finite-N systems. The
// limit is the special case inv_N = 0 with Mcheck = M; then PsiN, PsibN and
// Psi0N reduce to the stage quantities of the joint system.
BlockVec follower_side_rhs(const ModelParams& p, double inv_N, const Mat& P0g, const Mat& Pbarg,
                           double t, const BlockVec& y5) {
  const auto w = weight_aggregates(p.follower_cost);
  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;
  const auto& fc = p.follower_cost;

  const Mat& M = y5[FiniteNFeedbackSolution::bM];
  const Mat& Mbar = y5[FiniteNFeedbackSolution::bMbar];
  const Mat& M0 = y5[FiniteNFeedbackSolution::bM0];
  const Mat& Lam0 = y5[FiniteNFeedbackSolution::bLam0];
  const Mat& Lambar = y5[FiniteNFeedbackSolution::bLambar];

  const Mat Mc = M + inv_N * Mbar;
  const Mat Ups = fc.R + fd.D.transpose() * Mc * fd.D;
  const Mat iU = strict_inverse(Ups, 1e-10, t);
  const Mat Psi = fd.B.transpose() * M + fd.D.transpose() * Mc * fd.C;
  const Mat Psib = fd.B.transpose() * Mbar + fd.D.transpose() * Mc * fd.Gbar;
  const Mat Psi0 = fd.B.transpose() * M0 + fd.D.transpose() * Mc * fd.Fbar;
  const Mat PsiL = fd.B.transpose() * Lambar.transpose() + fd.D.transpose() * Mc * fd.Fbar;

  const Mat ApG = fd.A + fd.G;
  const Mat CpGb = fd.C + fd.Gbar;
  const Mat A0cl = ld.A0 + ld.B0 * P0g;
  const Mat C0cl = ld.C0 + ld.D0 * P0g;
  const Mat G0cl = ld.G0 + ld.B0 * Pbarg;
  const Mat Gb0cl = ld.Gbar0 + ld.D0 * Pbarg;
  const Mat GmI = fc.Gamma - Mat::Identity(p.dims.n, p.dims.n);

  BlockVec dy(FiniteNFeedbackSolution::block_count);
  dy[FiniteNFeedbackSolution::bM] =
      -(fd.A.transpose() * M + M * fd.A + fd.C.transpose() * Mc * fd.C + fc.Q -
        Psi.transpose() * iU * Psi);
  dy[FiniteNFeedbackSolution::bMbar] =
      -(ApG.transpose() * Mbar + Mbar * ApG + fd.G.transpose() * M + M * fd.G +
        fd.C.transpose() * Mc * fd.Gbar + fd.Gbar.transpose() * Mc * CpGb -
        Psi.transpose() * iU * Psib - Psib.transpose() * iU * Psi -
        Psib.transpose() * iU * Psib - w.Q_Gamma + Gb0cl.transpose() * Lam0 * Gb0cl +
        G0cl.transpose() * Lambar + M0 * G0cl);
  dy[FiniteNFeedbackSolution::bM0] =
      -(ApG.transpose() * M0 + M0 * A0cl + (M + Mbar) * fd.F + G0cl.transpose() * Lam0 -
        (Psi + Psib).transpose() * iU * Psi0 + CpGb.transpose() * Mc * fd.Fbar +
        Gb0cl.transpose() * Lam0 * C0cl + GmI.transpose() * fc.Q * fc.Gamma1);
  dy[FiniteNFeedbackSolution::bLam0] =
      -(Lam0 * A0cl + A0cl.transpose() * Lam0 + C0cl.transpose() * Lam0 * C0cl -
        PsiL.transpose() * iU * Psi0 + Lambar * fd.F + fd.F.transpose() * M0 +
        fd.Fbar.transpose() * Mc * fd.Fbar + fc.Gamma1.transpose() * fc.Q * fc.Gamma1);
  dy[FiniteNFeedbackSolution::bLambar] =
      -(Lambar * ApG + A0cl.transpose() * Lambar + fd.F.transpose() * (M + Mbar) +
        Lam0 * G0cl - PsiL.transpose() * iU * (Psi + Psib) +
        fd.Fbar.transpose() * Mc * CpGb + fc.Gamma1.transpose() * fc.Q * GmI +
        C0cl.transpose() * Lam0 * Gb0cl);
  return dy;
}

}  // namespace

BlockVec finiteN_rhs(const ModelParams& p, double inv_N, const Mat& P0g, const Mat& Pbarg,
                     double t, const BlockVec& y5) {
  return follower_side_rhs(p, inv_N, P0g, Pbarg, t, y5);
}

BlockVec feedback_joint_rhs(const ModelParams& p, double t, const BlockVec& y8) {
  const FeedbackStage s = feedback_stage(p, y8, t);
  BlockVec y5(y8.begin(), y8.begin() + FiniteNFeedbackSolution::block_count);
  BlockVec dy = follower_side_rhs(p, 0.0, s.P0, s.Pbar, t, y5);
  dy.resize(FeedbackSolution::block_count);

  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;
  const auto& lc = p.leader_cost;
  const Mat& Th1 = y8[FeedbackSolution::bTh1];
  const Mat& Th2 = y8[FeedbackSolution::bTh2];
  const Mat& Th3 = y8[FeedbackSolution::bTh3];

  const Mat Ahat = fd.A + fd.G - fd.B * s.Ups_inv * (s.Psi + s.Psibar);
  const Mat Fhat = fd.F - fd.B * s.Ups_inv * s.Psi0;

  dy[FeedbackSolution::bTh1] =
      -(ld.A0.transpose() * Th1 + Th1 * ld.A0 + ld.C0.transpose() * Th1 * ld.C0 -
        s.Psi4.transpose() * s.Ups0_inv * s.Psi4 + Fhat.transpose() * Th3 +
        Th3.transpose() * Fhat + lc.Q0);
  dy[FeedbackSolution::bTh2] =
      -(Ahat.transpose() * Th2 + Th2 * Ahat - s.Psi5.transpose() * s.Ups0_inv * s.Psi5 +
        lc.Gamma0.transpose() * lc.Q0 * lc.Gamma0 + ld.Gbar0.transpose() * Th1 * ld.Gbar0 +
        Th3 * ld.G0 + ld.G0.transpose() * Th3.transpose());
  dy[FeedbackSolution::bTh3] =
      -(Ahat.transpose() * Th3 + Th3 * ld.A0 - s.Psi5.transpose() * s.Ups0_inv * s.Psi4 +
        Th2 * Fhat - lc.Gamma0.transpose() * lc.Q0 + ld.G0.transpose() * Th1 +
        ld.Gbar0.transpose() * Th1 * ld.C0);
  return dy;
}

namespace {

void check_sign_conditions(const ModelParams& p) {
  const auto& fc = p.follower_cost;
  const auto& lc = p.leader_cost;
  if (!is_psd(fc.Q, 1e-10)) throw ValidationError("feedback solve needs Q >= 0");
  if (!is_psd(fc.H, 1e-10)) throw ValidationError("feedback solve needs H >= 0");
  if (min_eigenvalue(fc.R) <= 0.0) throw ValidationError("feedback solve needs R > 0");
  if (!is_psd(lc.Q0, 1e-10)) throw ValidationError("feedback solve needs Q0 >= 0");
  if (!is_psd(lc.H0, 1e-10)) throw ValidationError("feedback solve needs H0 >= 0");
  if (min_eigenvalue(lc.R0) <= 0.0) throw ValidationError("feedback solve needs R0 > 0");
}

}  // namespace

FeedbackSolution solve_feedback_joint(const ModelParams& p, int K_override) {
  check_sign_conditions(p);
  const int K = K_override > 0 ? K_override : p.grid_steps;
  auto rhs = [&p](double t, const BlockVec& y) { return feedback_joint_rhs(p, t, y); };
  FeedbackSolution out;
  out.sol = integrate_backward(rhs, feedback_joint_terminal(p), p.T, K);

  out.Ups_inv.reserve(K + 1);
  for (int k = 0; k <= K; ++k) {
    const FeedbackStage s = feedback_stage(p, out.sol.at(k), out.sol.time_at(k));
    out.Kx.push_back(-s.Ups_inv * s.Psi);
    out.Kxbar.push_back(-s.Ups_inv * s.Psibar);
    out.K0.push_back(-s.Ups_inv * s.Psi0);
    out.P0.push_back(s.P0);
    out.Pbar.push_back(s.Pbar);
    out.Ups_inv.push_back(s.Ups_inv);
    out.Ups0_inv.push_back(s.Ups0_inv);
  }
  return out;
}

TimeGridFn leader_gain_grid(const FeedbackSolution& fb) {
  const int K = fb.sol.steps();
  std::vector<BlockVec> values(K + 1);
  for (int k = 0; k <= K; ++k) values[k] = {fb.P0[k], fb.Pbar[k]};
  return TimeGridFn(fb.sol.T(), std::move(values));
}

FiniteNFeedbackSolution solve_finite_N(const ModelParams& p, int N, const TimeGridFn& leader_gains,
                                       int K_override) {
  check_sign_conditions(p);
  if (N < 0) throw ValidationError("solve_finite_N: N must be >= 0 (0 selects the limit)");
  if (std::abs(leader_gains.T() - p.T) > 1e-12 * std::max(1.0, p.T)) {
    throw ValidationError("solve_finite_N: leader gain grid does not match the model horizon");
  }
  const double inv_N = N > 0 ? 1.0 / N : 0.0;
  const int K = K_override > 0 ? K_override : p.grid_steps;

  auto rhs = [&](double t, const BlockVec& y) {
    const BlockVec g = leader_gains.eval(t);
    return follower_side_rhs(p, inv_N, g[0], g[1], t, y);
  };
  FiniteNFeedbackSolution out;
  out.N = N;
  out.sol = integrate_backward(rhs, finiteN_terminal(p), p.T, K);

  const auto& fd = p.follower_dyn;
  const auto& fc = p.follower_cost;
  out.UpsN_inv.reserve(K + 1);
  for (int k = 0; k <= K; ++k) {
    const Mat& M = out.M(k);
    const Mat Mc = M + inv_N * out.Mbar(k);
    const Mat Ups = fc.R + fd.D.transpose() * Mc * fd.D;
    Mat iU = strict_inverse(Ups, 1e-10, out.sol.time_at(k));
    out.Kx.push_back(-iU * (fd.B.transpose() * M + fd.D.transpose() * Mc * fd.C));
    out.Kxbar.push_back(-iU * (fd.B.transpose() * out.Mbar(k) + fd.D.transpose() * Mc * fd.Gbar));
    out.K0.push_back(-iU * (fd.B.transpose() * out.M0(k) + fd.D.transpose() * Mc * fd.Fbar));
    out.UpsN_inv.push_back(std::move(iU));
  }
  return out;
}

}  // namespace mflq
