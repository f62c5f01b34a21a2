#pragma once

#include "mflq/model.hpp"
#include "mflq/numerics.hpp"
#include "mflq/riccati_feedback.hpp"
#include "mflq/riccati_openloop.hpp"

namespace mflq {

// Decentralized open-loop equilibrium profile. Follower i drives an
// auxiliary state xbar_i from its own initial condition and applies
//   u_i(t) = Gxi xbar_i + Gxbar xbar + Gx0 x0 + Gphi phi,
// where xbar and phi are read off the leader's stacked state
// X = [x0; xbar; psi0; psi] through Y = Pcal X. The leader applies
// u0(t) = L0 X. Acl and Ccl are the closed-loop stacked drift and
// diffusion factors; B, B0 and D0s are kept for perturbed runs.
struct OpenLoopPolicy {
  enum StackedBlock { sAcl = 0, sCcl, sL0, sB, sB0, sPcal, sKmat, stacked_count };
  enum GainBlock { gXi = 0, gXbar, gX0, gPhi, gain_count };

  Dimensions dims;
  int s = 0;
  Mat D0s;
  TimeGridFn stacked;
  TimeGridFn follower_gains;
};

// Feedback equilibrium profile:
//   u0 = P0 x0 + Pbar xbar,  u_i = Kx x_i + Kxbar xbar + K0 x0,
// with the mean-field trajectory propagated by dxbar = (Ahat xbar + Fhat x0) dt.
struct FeedbackPolicy {
  enum LeaderBlock { lP0 = 0, lPbar, leader_count };
  enum GainBlock { gX = 0, gXbar, gX0, gain_count };
  enum MeanFieldBlock { mAhat = 0, mFhat, meanfield_count };

  Dimensions dims;
  TimeGridFn leader_gains;
  TimeGridFn follower_gains;
  TimeGridFn mean_field;
};

OpenLoopPolicy build_openloop_policy(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                     const StackedLeaderSolution& leader);

FeedbackPolicy build_feedback_policy(const ModelParams& p, const FeedbackSolution& fb);

// Followers responding to an externally fixed leader gain trajectory, as
// produced by a finite-N or probed-gain solve.
FeedbackPolicy build_feedback_policy(const ModelParams& p, const FiniteNFeedbackSolution& fol,
                                     const TimeGridFn& leader_gains);

Vec openloop_leader_control(const OpenLoopPolicy& pol, double t, const Vec& X);
Vec openloop_follower_control(const OpenLoopPolicy& pol, double t, const Vec& xbar_i,
                              const Vec& xbar, const Vec& x0, const Vec& phi);
Vec feedback_leader_control(const FeedbackPolicy& pol, double t, const Vec& x0, const Vec& xbar);
Vec feedback_follower_control(const FeedbackPolicy& pol, double t, const Vec& xi, const Vec& xbar,
                              const Vec& x0);

// Pointwise defect of the open-loop stationarity condition
//   R u* + B^T pbar_i + D^T qbar_i = 0
// at grid index k and an arbitrary sample (xbar_i, xbar, x0, phi), with the
// costate values reconstructed from the solved blocks:
//   pbar_i = P xbar_i + Pbar xbar + P0 x0 + phi,
//   qbar_i = P (C xbar_i + D u* + Gbar xbar + Fbar x0).
double openloop_stationarity_residual(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                      int k, const Vec& xbar_i, const Vec& xbar, const Vec& x0,
                                      const Vec& phi);

}  // namespace mflq
