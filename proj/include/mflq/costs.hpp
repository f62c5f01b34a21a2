#pragma once

#include <limits>
#include <string>
#include <vector>

#include "mflq/model.hpp"
#include "mflq/riccati_feedback.hpp"
#include "mflq/riccati_openloop.hpp"
#include "mflq/simulator.hpp"
#include "mflq/strategy.hpp"

namespace mflq {

struct CostReport {
  std::string mode;  // "openloop" or "feedback"
  int N = 0;
  int paths = 0;
  double J0_mean = 0.0, J0_se = 0.0;
  double Jsoc_mean = 0.0, Jsoc_se = 0.0;  // total social cost over the population
  double per_capita_social = 0.0;
  double closed_form_leader = 0.0;
  double closed_form_social = 0.0;  // per-capita mean-field limit
  double s_T = 0.0;                 // open-loop leader diffusion correction
  double meanfield_gap = 0.0;       // sup_t mean |x^N - xbar|^2
  double epsilon_hat = std::numeric_limits<double>::quiet_NaN();
  double epsilon_se = std::numeric_limits<double>::quiet_NaN();
};

// True when the correction integrand vanishes identically without any
// simulated paths: D0, Gbar0 and B0 all zero.
bool openloop_s_T_vanishes(const ModelParams& p);

// Trapezoid of the stored path-mean integrand; requires an open-loop
// ensemble unless the integrand vanishes structurally.
double openloop_s_T(const ModelParams& p, const Ensemble& ens);

double closed_form_social_openloop(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                   const StackedLeaderSolution& leader, double s_T);
double closed_form_leader_openloop(const ModelParams& p, const StackedLeaderSolution& leader);
double closed_form_social_feedback(const ModelParams& p, const FeedbackSolution& fb);
double closed_form_leader_feedback(const ModelParams& p, const FeedbackSolution& fb);

CostReport cost_report_openloop(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                const StackedLeaderSolution& leader, const Ensemble& ens);
CostReport cost_report_feedback(const ModelParams& p, const FeedbackSolution& fb,
                                const Ensemble& ens);

// Deviation probing under common random numbers: a deterministic family of
// smooth strategy offsets is simulated against the base profile with shared
// path seeds, and epsilon_hat = max(0, J_base - min_probe J_probe).
struct ProbeConfig {
  int n_shapes = 12;
  std::vector<double> magnitudes{0.05, 0.15, 0.45};
  std::uint64_t probe_seed = 833100241;
  int paths = 100;
  int sim_steps = 500;
};

struct EpsilonEstimate {
  double epsilon_hat = 0.0;
  double se = 0.0;  // standard error of the paired cost difference
  double base_cost = 0.0;
  double best_probe_cost = 0.0;
  int best_shape = -1;
  double best_magnitude = 0.0;
};

// Team deviation of the followers (every follower applies the same gain
// offset); epsilon is measured on the per-capita social cost.
EpsilonEstimate epsilon_probe_followers_openloop(const ModelParams& p, const OpenLoopPolicy& pol,
                                                 const SimConfig& cfg, const ProbeConfig& probes);
EpsilonEstimate epsilon_probe_followers_feedback(const ModelParams& p, const FeedbackPolicy& pol,
                                                 const SimConfig& cfg, const ProbeConfig& probes);

// Leader deviations. Open loop: deterministic control offsets delta(t) with
// the followers' adjoint response solved alongside. Feedback: announced gain
// offsets with the follower consistency system re-solved under the probed
// gains. Epsilon is measured on the leader cost.
EpsilonEstimate epsilon_probe_leader_openloop(const ModelParams& p,
                                              const OpenLoopFollowerSolution& fol,
                                              const OpenLoopPolicy& pol, const SimConfig& cfg,
                                              const ProbeConfig& probes);
EpsilonEstimate epsilon_probe_leader_feedback(const ModelParams& p, const FeedbackSolution& fb,
                                              const SimConfig& cfg, const ProbeConfig& probes);

struct ConvergenceStudy {
  std::vector<int> Ns;
  std::vector<double> values;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  std::string status;  // "ok" or "not-applicable"
};

// Sup-norm distance over the grid between the finite-N follower blocks and
// their mean-field limit, against N.
ConvergenceStudy riccati_gap_study(const ModelParams& p, const FeedbackSolution& fb,
                                   const std::vector<int>& Ns, int K_override = 0);

// sup_t mean |x^N - xbar|^2 against N under the given mode's policy.
ConvergenceStudy meanfield_gap_study_openloop(const ModelParams& p, const OpenLoopPolicy& pol,
                                              const SimConfig& cfg, const std::vector<int>& Ns);
ConvergenceStudy meanfield_gap_study_feedback(const ModelParams& p, const FeedbackPolicy& pol,
                                              const SimConfig& cfg, const std::vector<int>& Ns);

}  // namespace mflq
