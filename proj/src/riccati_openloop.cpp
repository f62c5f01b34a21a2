#include "mflq/riccati_openloop.hpp"

#include <sstream>

#include "mflq/errors.hpp"

namespace mflq {

BlockVec openloop_follower_terminal(const ModelParams& p) {
  const auto w = weight_aggregates(p.follower_cost);
  const auto& fc = p.follower_cost;
  BlockVec y(OpenLoopFollowerSolution::block_count);
  y[OpenLoopFollowerSolution::bK] = fc.Ghat1.transpose() * fc.H * fc.Ghat1;
  y[OpenLoopFollowerSolution::bKbar] = -w.H_Ghat1.transpose();
  y[OpenLoopFollowerSolution::bP] = fc.H;
  y[OpenLoopFollowerSolution::bPbar] = -w.H_Ghat;
  y[OpenLoopFollowerSolution::bP0] = -w.H_Ghat1;
  return y;
}

BlockVec openloop_follower_rhs(const ModelParams& p, const BlockVec& y) {
  const auto w = weight_aggregates(p.follower_cost);
  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;
  const auto& fc = p.follower_cost;

  const Mat& K = y[OpenLoopFollowerSolution::bK];
  const Mat& Kbar = y[OpenLoopFollowerSolution::bKbar];
  const Mat& P = y[OpenLoopFollowerSolution::bP];
  const Mat& Pbar = y[OpenLoopFollowerSolution::bPbar];
  const Mat& P0 = y[OpenLoopFollowerSolution::bP0];

  const Mat Ups = fc.R + fd.D.transpose() * P * fd.D;
  const Mat iU = pinv(Ups);
  const Mat Psi1 = fd.B.transpose() * Kbar.transpose() + fd.D.transpose() * P * fd.Fbar;
  const Mat Psi2 = fd.B.transpose() * P + fd.D.transpose() * P * fd.C;
  const Mat Psi3 = fd.B.transpose() * Pbar + fd.D.transpose() * P * fd.Gbar;
  const Mat S1 = fd.B.transpose() * P0 + fd.D.transpose() * P * fd.Fbar;

  const Mat ApG = fd.A + fd.G;
  const Mat CpGb = fd.C + fd.Gbar;

  BlockVec dy(OpenLoopFollowerSolution::block_count);
  dy[OpenLoopFollowerSolution::bK] =
      -(K.transpose() * ld.A0 + ld.A0.transpose() * K + ld.C0.transpose() * K * ld.C0 +
        fd.Fbar.transpose() * P * fd.Fbar - Psi1.transpose() * iU * S1 + Kbar * fd.F +
        fd.F.transpose() * P0 + fc.Gamma1.transpose() * fc.Q * fc.Gamma1);
  dy[OpenLoopFollowerSolution::bKbar] =
      -(Kbar * ApG + ld.A0.transpose() * Kbar - Psi1.transpose() * iU * (Psi2 + Psi3) +
        fd.F.transpose() * (P + Pbar) + ld.C0.transpose() * K * ld.Gbar0 +
        fd.Fbar.transpose() * P * CpGb + K * ld.G0 - w.Q_Gamma1.transpose());
  dy[OpenLoopFollowerSolution::bP] =
      -(fd.A.transpose() * P + P * fd.A + fd.C.transpose() * P * fd.C + fc.Q -
        Psi2.transpose() * iU * Psi2);
  dy[OpenLoopFollowerSolution::bPbar] =
      -(ApG.transpose() * Pbar + Pbar * ApG + fd.G.transpose() * P + P * fd.G + P0 * ld.G0 +
        ld.G0.transpose() * Kbar + fd.C.transpose() * P * fd.Gbar +
        fd.Gbar.transpose() * P * CpGb + ld.Gbar0.transpose() * K * ld.Gbar0 -
        Psi2.transpose() * iU * Psi3 - Psi3.transpose() * iU * Psi2 -
        Psi3.transpose() * iU * Psi3 - w.Q_Gamma);
  dy[OpenLoopFollowerSolution::bP0] =
      -(P0 * ld.A0 + ApG.transpose() * P0 + CpGb.transpose() * P * fd.Fbar -
        (Psi2 + Psi3).transpose() * iU * S1 + (P + Pbar) * fd.F +
        ld.Gbar0.transpose() * K * ld.C0 + ld.G0.transpose() * K - w.Q_Gamma1);
  return dy;
}

namespace {

struct StackedConsts {
  int n0, n, s;
  Mat C0s, D0s, Qs, H0s;
};

StackedConsts stacked_consts(const ModelParams& p) {
  StackedConsts c;
  c.n0 = p.dims.n0;
  c.n = p.dims.n;
  c.s = 2 * (c.n0 + c.n);
  const int n0 = c.n0, n = c.n;
  const int o2 = n0, o3 = n0 + n, o4 = 2 * n0 + n;
  const auto& ld = p.leader_dyn;
  const auto& lc = p.leader_cost;

  c.C0s = Mat::Zero(c.s, c.s);
  c.C0s.block(0, 0, n0, n0) = ld.C0;
  c.C0s.block(0, o2, n0, n) = ld.Gbar0;
  c.C0s.block(o3, o3, n0, n0) = ld.C0;
  c.C0s.block(o3, o4, n0, n) = ld.Gbar0;

  c.D0s = Mat::Zero(c.s, p.dims.m0);
  c.D0s.block(0, 0, n0, p.dims.m0) = ld.D0;

  c.Qs = Mat::Zero(c.s, c.s);
  c.Qs.block(0, 0, n0, n0) = -lc.Q0;
  c.Qs.block(0, o2, n0, n) = lc.Q0 * lc.Gamma0;
  c.Qs.block(o2, 0, n, n0) = lc.Gamma0.transpose() * lc.Q0;
  c.Qs.block(o2, o2, n, n) = -lc.Gamma0.transpose() * lc.Q0 * lc.Gamma0;

  c.H0s = Mat::Zero(c.s, c.s);
  c.H0s.block(0, 0, n0, n0) = lc.H0;
  c.H0s.block(0, o2, n0, n) = -lc.H0 * lc.Ghat0;
  c.H0s.block(o2, 0, n, n0) = -lc.Ghat0.transpose() * lc.H0;
  c.H0s.block(o2, o2, n, n) = lc.Ghat0.transpose() * lc.H0 * lc.Ghat0;
  return c;
}

// Time-varying stacked blocks from the current follower blocks.
void stacked_stage(const ModelParams& p, const BlockVec& yfol, Mat& As, Mat& Bs, Mat& B0s) {
  const int n0 = p.dims.n0, n = p.dims.n, m0 = p.dims.m0;
  const int s = 2 * (n0 + n);
  const int o2 = n0, o3 = n0 + n, o4 = 2 * n0 + n;
  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;

  const Mat& K = yfol[OpenLoopFollowerSolution::bK];
  const Mat& Kbar = yfol[OpenLoopFollowerSolution::bKbar];
  const Mat& P = yfol[OpenLoopFollowerSolution::bP];
  const Mat& Pbar = yfol[OpenLoopFollowerSolution::bPbar];
  const Mat& P0 = yfol[OpenLoopFollowerSolution::bP0];

  const Mat Ups = p.follower_cost.R + fd.D.transpose() * P * fd.D;
  const Mat iU = pinv(Ups);
  const Mat Psi1 = fd.B.transpose() * Kbar.transpose() + fd.D.transpose() * P * fd.Fbar;
  const Mat Psi2 = fd.B.transpose() * P + fd.D.transpose() * P * fd.C;
  const Mat Psi3 = fd.B.transpose() * Pbar + fd.D.transpose() * P * fd.Gbar;

  const Mat T11 = ld.A0;
  const Mat T12 = ld.G0;
  const Mat T21 = fd.F - fd.B * iU * Psi1;
  const Mat T22 = fd.A + fd.G - fd.B * iU * (Psi2 + Psi3);

  As = Mat::Zero(s, s);
  As.block(0, 0, n0, n0) = T11;
  As.block(0, o2, n0, n) = T12;
  As.block(o2, 0, n, n0) = T21;
  As.block(o2, o2, n, n) = T22;
  As.block(o3, o3, n0, n0) = T11;
  As.block(o3, o4, n0, n) = T12;
  As.block(o4, o3, n, n0) = T21;
  As.block(o4, o4, n, n) = T22;

  const Mat BiUBt = fd.B * iU * fd.B.transpose();
  Bs = Mat::Zero(s, s);
  Bs.block(o2, o4, n, n) = BiUBt;
  Bs.block(o4, o2, n, n) = -BiUBt;

  B0s = Mat::Zero(s, m0);
  B0s.block(0, 0, n0, m0) = ld.B0;
  B0s.block(o3, 0, n0, m0) = ld.C0.transpose() * K * ld.D0 + K * ld.B0;
  B0s.block(o4, 0, n, m0) = P0 * ld.B0;
}

}  // namespace

BlockVec openloop_joint_rhs(const ModelParams& p, const BlockVec& y6) {
  BlockVec yfol(y6.begin(), y6.begin() + OpenLoopFollowerSolution::block_count);
  BlockVec dy = openloop_follower_rhs(p, yfol);

  const StackedConsts c = stacked_consts(p);
  Mat As, Bs, B0s;
  stacked_stage(p, yfol, As, Bs, B0s);

  const Mat& Pc = y6[OpenLoopFollowerSolution::block_count];
  const Mat Ups0 = p.leader_cost.R0 + c.D0s.transpose() * Pc * c.D0s;
  const Mat iU0 = pinv(Ups0);
  const Mat Lfac = B0s.transpose() * Pc + c.D0s.transpose() * Pc * c.C0s;

  dy.push_back(-(Pc * As + As.transpose() * Pc + c.C0s.transpose() * Pc * c.C0s - c.Qs -
                 Pc * Bs * Pc - Lfac.transpose() * iU0 * Lfac));
  return dy;
}

OpenLoopFollowerSolution solve_follower_system(const ModelParams& p, int K_override) {
  const int K = K_override > 0 ? K_override : p.grid_steps;
  auto rhs = [&p](double, const BlockVec& y) { return openloop_follower_rhs(p, y); };
  OpenLoopFollowerSolution out;
  out.sol = integrate_backward(rhs, openloop_follower_terminal(p), p.T, K);

  const auto& fd = p.follower_dyn;
  out.Upsilon.reserve(K + 1);
  for (int k = 0; k <= K; ++k) {
    const Mat& P = out.P(k);
    Mat Ups = p.follower_cost.R + fd.D.transpose() * P * fd.D;
    Mat iU = pinv(Ups);
    out.Psi1.push_back(fd.B.transpose() * out.Kbar(k).transpose() +
                       fd.D.transpose() * P * fd.Fbar);
    out.Psi2.push_back(fd.B.transpose() * P + fd.D.transpose() * P * fd.C);
    out.Psi3.push_back(fd.B.transpose() * out.Pbar(k) + fd.D.transpose() * P * fd.Gbar);

    const bool psd_ok = min_eigenvalue(Ups) >= -1e-8;
    const bool range_ok =
        range_subset(fd.B.transpose(), Ups) && range_subset(fd.D.transpose() * P, Ups);
    if (!(psd_ok && range_ok)) {
      out.solvability_ok = false;
      if (out.solvability_notes.size() < 8) {
        std::ostringstream ss;
        ss << "t=" << out.sol.time_at(k) << ": "
           << (psd_ok ? "" : "Upsilon not PSD; ")
           << (range_ok ? "" : "range(B^T)+range(D^T P) not inside range(Upsilon)");
        out.solvability_notes.push_back(ss.str());
      }
    }
    out.Upsilon.push_back(std::move(Ups));
    out.Ups_pinv.push_back(std::move(iU));
  }
  return out;
}

StackedLeaderSolution assemble_stacked(const ModelParams& p, const OpenLoopFollowerSolution& fol) {
  const int K = fol.sol.steps();
  if (std::abs(fol.sol.T() - p.T) > 1e-12 * std::max(1.0, p.T)) {
    throw ValidationError("assemble_stacked: follower solution grid does not match the model horizon");
  }
  const StackedConsts c = stacked_consts(p);
  StackedLeaderSolution out;
  out.s = c.s;
  out.C0s = c.C0s;
  out.D0s = c.D0s;
  out.Qs = c.Qs;
  out.H0s = c.H0s;
  out.As.reserve(K + 1);
  for (int k = 0; k <= K; ++k) {
    Mat As, Bs, B0s;
    stacked_stage(p, fol.sol.at(k), As, Bs, B0s);
    out.As.push_back(std::move(As));
    out.Bs.push_back(std::move(Bs));
    out.B0s.push_back(std::move(B0s));
  }
  return out;
}

StackedLeaderSolution solve_leader_stacked(const ModelParams& p,
                                           const OpenLoopFollowerSolution& fol, int K_override) {
  const int K = K_override > 0 ? K_override : fol.sol.steps();
  StackedLeaderSolution out = assemble_stacked(p, fol);

  BlockVec terminal = openloop_follower_terminal(p);
  terminal.push_back(out.H0s);
  auto rhs = [&p](double, const BlockVec& y) { return openloop_joint_rhs(p, y); };
  TimeGridFn joint = integrate_backward(rhs, terminal, p.T, K);

  std::vector<BlockVec> pc_only(K + 1);
  for (int k = 0; k <= K; ++k) {
    pc_only[k] = {joint.block(k, OpenLoopFollowerSolution::block_count)};
  }
  out.Pcal = TimeGridFn(p.T, std::move(pc_only));

  out.Ups0_pinv.reserve(K + 1);
  out.L0.reserve(K + 1);
  for (int k = 0; k <= K; ++k) {
    const Mat& Pc = out.Pcal.block(k, 0);
    const Mat Ups0 = p.leader_cost.R0 + out.D0s.transpose() * Pc * out.D0s;
    Mat iU0 = pinv(Ups0);
    const Mat Lfac = out.B0s[k].transpose() * Pc + out.D0s.transpose() * Pc * out.C0s;
    out.L0.push_back(-iU0 * Lfac);
    out.Ups0_pinv.push_back(std::move(iU0));
  }

  auto joint_rhs = [&p](double, const BlockVec& y) { return openloop_joint_rhs(p, y); };
  out.staggered_residual = residual_staggered(joint, joint_rhs);
  return out;
}

}  // namespace mflq
