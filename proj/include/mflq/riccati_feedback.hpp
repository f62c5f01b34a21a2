#pragma once

#include <vector>

#include "mflq/model.hpp"
#include "mflq/numerics.hpp"
#include "mflq/types.hpp"

namespace mflq {

// Stage quantities shared by the feedback systems. All inverses are strict
// (no pseudoinverse); a singular control weight aborts the solve.
struct FeedbackStage {
  Mat Ups, Ups_inv;    // R + D^T M D
  Mat Psi, Psibar, Psi0;
  Mat Ups0, Ups0_inv;  // R0 + D0^T Th1 D0
  Mat Psi4, Psi5;
  Mat P0, Pbar;        // leader gains, m0 x n0 and m0 x n
};

// Mean-field limit of the feedback consistency system: five follower-side
// blocks coupled to the three leader value blocks, integrated jointly.
struct FeedbackSolution {
  enum Block { bM = 0, bMbar, bM0, bLam0, bLambar, bTh1, bTh2, bTh3, block_count };

  TimeGridFn sol;

  // Per-grid-point derived quantities.
  std::vector<Mat> Ups_inv, Ups0_inv;
  std::vector<Mat> P0, Pbar;        // leader gains
  std::vector<Mat> Kx, Kxbar, K0;   // follower gains: u_i = Kx x_i + Kxbar xbar + K0 x0

  const Mat& M(int k) const { return sol.block(k, bM); }
  const Mat& Mbar(int k) const { return sol.block(k, bMbar); }
  const Mat& M0(int k) const { return sol.block(k, bM0); }
  const Mat& Lam0(int k) const { return sol.block(k, bLam0); }
  const Mat& Lambar(int k) const { return sol.block(k, bLambar); }
  const Mat& Th1(int k) const { return sol.block(k, bTh1); }
  const Mat& Th2(int k) const { return sol.block(k, bTh2); }
  const Mat& Th3(int k) const { return sol.block(k, bTh3); }
};

// Follower-side consistency system for a finite population of size N under
// frozen leader gains; N = 0 selects the mean-field limit (1/N = 0).
struct FiniteNFeedbackSolution {
  enum Block { bM = 0, bMbar, bM0, bLam0, bLambar, block_count };

  int N = 0;
  TimeGridFn sol;
  std::vector<Mat> UpsN_inv;
  std::vector<Mat> Kx, Kxbar, K0;

  const Mat& M(int k) const { return sol.block(k, bM); }
  const Mat& Mbar(int k) const { return sol.block(k, bMbar); }
  const Mat& M0(int k) const { return sol.block(k, bM0); }
  const Mat& Lam0(int k) const { return sol.block(k, bLam0); }
  const Mat& Lambar(int k) const { return sol.block(k, bLambar); }
};

// Stage quantities at one state of the joint system. t is carried only for
// error reporting on singular weights.
FeedbackStage feedback_stage(const ModelParams& p, const BlockVec& y8, double t);

BlockVec feedback_joint_terminal(const ModelParams& p);
BlockVec feedback_joint_rhs(const ModelParams& p, double t, const BlockVec& y8);

// Finite-N right-hand side with frozen leader gains (P0g, Pbarg) and the
// population weight inv_N = 1/N; inv_N = 0 reproduces the first five blocks
// of feedback_joint_rhs when the gains match the stage gains of y8.
BlockVec finiteN_terminal(const ModelParams& p);
BlockVec finiteN_rhs(const ModelParams& p, double inv_N, const Mat& P0g, const Mat& Pbarg,
                     double t, const BlockVec& y5);

FeedbackSolution solve_feedback_joint(const ModelParams& p, int K_override = 0);

// Leader gain trajectory [P0, Pbar] of a solved limit system, packaged for
// reuse as the frozen gains of a finite-N solve.
TimeGridFn leader_gain_grid(const FeedbackSolution& fb);

// Solve the finite-N system under the given frozen leader gain trajectory.
// N = 0 solves the mean-field limit of the same system.
FiniteNFeedbackSolution solve_finite_N(const ModelParams& p, int N, const TimeGridFn& leader_gains,
                                       int K_override = 0);

}  // namespace mflq
