#pragma once

#include <string>
#include <vector>

#include "mflq/model.hpp"
#include "mflq/numerics.hpp"
#include "mflq/types.hpp"

namespace mflq {

// Follower-side coupled Riccati system of the open-loop limit problem.
// Joint backward state, block order [K, Kbar, P, Pbar, P0]:
//   K:    n0 x n0   leader-state weight of the mean costate
//   Kbar: n0 x n    cross block, Kbar^T = P0 identically
//   P:    n x n     own-state weight
//   Pbar: n x n     mean-field weight
//   P0:   n x n0    leader cross block
// Derived per grid point: Upsilon = R + D^T P D and
//   Psi1 = B^T Kbar^T + D^T P Fbar  (= B^T P0 + D^T P Fbar)
//   Psi2 = B^T P + D^T P C
//   Psi3 = B^T Pbar + D^T P Gbar
struct OpenLoopFollowerSolution {
  enum Block { bK = 0, bKbar, bP, bPbar, bP0, block_count };

  TimeGridFn sol;
  std::vector<Mat> Upsilon, Ups_pinv, Psi1, Psi2, Psi3;

  // Solvability checks evaluated at every grid point: Upsilon >= 0 and
  // range(B^T) + range(D^T P) inside range(Upsilon). Violations do not
  // abort (gains use the pseudoinverse); they are surfaced here.
  bool solvability_ok = true;
  std::vector<std::string> solvability_notes;

  const Mat& K(int k) const { return sol.block(k, bK); }
  const Mat& Kbar(int k) const { return sol.block(k, bKbar); }
  const Mat& P(int k) const { return sol.block(k, bP); }
  const Mat& Pbar(int k) const { return sol.block(k, bPbar); }
  const Mat& P0(int k) const { return sol.block(k, bP0); }
};

// Leader-side stacked system on X = [x0; xbar; psi0; psi], s = 2(n0+n).
// Pcal is the (nonsymmetric) solution of the stacked Riccati equation with
// terminal H0s; the gain is L0 = -pinv(Ups0) (B0s^T Pcal + D0s^T Pcal C0s).
struct StackedLeaderSolution {
  int s = 0;
  Mat D0s;       // s x m0
  Mat C0s;       // s x s
  Mat Qs, H0s;   // s x s
  std::vector<Mat> As, Bs, B0s;       // per grid point
  TimeGridFn Pcal;                    // single block, s x s
  std::vector<Mat> Ups0_pinv, L0;     // per grid point
  double staggered_residual = -1.0;   // diagnostic, filled by solve
};

// Right-hand sides as pure functions of the current blocks (autonomous in
// t); exposed for residual evaluation and tests.
BlockVec openloop_follower_rhs(const ModelParams& params, const BlockVec& y);
BlockVec openloop_joint_rhs(const ModelParams& params, const BlockVec& y6);

BlockVec openloop_follower_terminal(const ModelParams& params);

OpenLoopFollowerSolution solve_follower_system(const ModelParams& params, int K_override = 0);

// Structural/constant blocks only; Pcal, Ups0, L0 left empty.
StackedLeaderSolution assemble_stacked(const ModelParams& params,
                                       const OpenLoopFollowerSolution& fol);

// Integrates Pcal jointly with re-derived follower blocks so every RK4
// stage sees stage-consistent coefficients.
StackedLeaderSolution solve_leader_stacked(const ModelParams& params,
                                           const OpenLoopFollowerSolution& fol,
                                           int K_override = 0);

}  // namespace mflq
