#pragma once

#include <cstdint>
#include <vector>

#include "mflq/model.hpp"
#include "mflq/strategy.hpp"
#include "mflq/types.hpp"

namespace mflq {

struct SimConfig {
  int N = 100;
  int paths = 200;
  int sim_steps = 2000;
  int store_every = 10;
  std::uint64_t seed = 20240601;
  bool antithetic = false;
  // Followers read the realized leader state; switching this off feeds them
  // the leader's mean-field construction instead (the stacked block in the
  // open-loop mode, a parallel limit leader SDE in the feedback mode).
  bool realized_leader_in_follower_control = true;
  bool store_followers = false;
};

// Monte-Carlo output on the thinned time grid (every store_every-th step).
// Curves are averages over paths; costs are kept per path so standard
// errors respect the antithetic pairing.
struct Ensemble {
  SimConfig cfg;
  std::vector<double> times;
  std::vector<Vec> mean_x0;    // realized leader state
  std::vector<Vec> mean_xN;    // empirical follower average
  std::vector<Vec> mean_xbar;  // mean-field trajectory used by the controls
  std::vector<double> gap_sq;  // mean over paths of |x^N - xbar|^2

  std::vector<double> J0_path;    // leader cost per path
  std::vector<double> Jsoc_path;  // total social cost per path (sum over followers)

  // Open-loop only: path mean of the leader diffusion cost correction
  // integrand at each stored time; empty in the feedback mode.
  std::vector<double> sT_integrand;

  // Populated only when cfg.store_followers.
  std::vector<std::vector<Vec>> x0_stored;        // [path][stored]
  std::vector<std::vector<Vec>> xbar_stored;      // [path][stored]
  std::vector<std::vector<Mat>> followers_stored; // [path][stored], n x N

  double J0_mean() const;
  double J0_se() const;
  double Jsoc_mean() const;
  double Jsoc_se() const;
  double sup_gap() const;
};

// Deviations layered on top of a base policy during probing. Empty grids
// mean no deviation; a null perturbation reproduces the base simulation
// bit for bit.
struct OpenLoopPerturbation {
  TimeGridFn follower_dgain;  // blocks [dGxi], added to the own-state gain of every follower
  TimeGridFn leader;          // blocks [delta, dphi0, dphi]
  bool has_follower = false;
  bool has_leader = false;
};

struct FeedbackPerturbation {
  TimeGridFn follower_dgain;  // blocks [dKx]
  bool has_follower = false;
};

Ensemble simulate_openloop(const ModelParams& p, const OpenLoopPolicy& pol, const SimConfig& cfg);
Ensemble simulate_openloop_perturbed(const ModelParams& p, const OpenLoopPolicy& pol,
                                     const SimConfig& cfg, const OpenLoopPerturbation& pert);
Ensemble simulate_feedback(const ModelParams& p, const FeedbackPolicy& pol, const SimConfig& cfg);
Ensemble simulate_feedback_perturbed(const ModelParams& p, const FeedbackPolicy& pol,
                                     const SimConfig& cfg, const FeedbackPerturbation& pert);

// Mean and standard error of per-path values; antithetic runs are reduced
// to independent pair averages first.
void path_mean_se(const std::vector<double>& values, bool antithetic, double& mean, double& se);

}  // namespace mflq
