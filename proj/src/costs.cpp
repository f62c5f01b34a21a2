#include "mflq/costs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mflq/errors.hpp"
#include "mflq/rng.hpp"

namespace mflq {

bool openloop_s_T_vanishes(const ModelParams& p) {
  return inf_norm(p.leader_dyn.D0) == 0.0 && inf_norm(p.leader_dyn.Gbar0) == 0.0 &&
         inf_norm(p.leader_dyn.B0) == 0.0;
}

double openloop_s_T(const ModelParams& p, const Ensemble& ens) {
  if (openloop_s_T_vanishes(p)) return 0.0;
  if (ens.sT_integrand.size() < 2) {
    throw ValidationError(
        "openloop_s_T: the correction integrand needs a simulated open-loop ensemble");
  }
  return trapezoid(ens.sT_integrand, ens.times.back());
}

namespace {

Mat second_moment(const Vec& mean, const Mat& cov) { return cov + mean * mean.transpose(); }

}  // namespace

double closed_form_social_openloop(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                   const StackedLeaderSolution& leader, double s_T) {
  const int n0 = p.dims.n0, n = p.dims.n;
  const Vec& xim = p.init.follower_mean;
  const Vec& xi0m = p.init.leader_mean;

  Vec X0 = Vec::Zero(leader.s);
  X0.head(n0) = xi0m;
  X0.segment(n0, n) = xim;
  const Vec Y0 = leader.Pcal.block(0, 0) * X0;
  const Vec phi0 = Y0.segment(n0 + n, n0);
  const Vec phi = Y0.tail(n);

  return (fol.P(0) * second_moment(xim, p.init.follower_cov)).trace() +
         xim.dot(fol.Pbar(0) * xim) +
         (fol.K(0) * second_moment(xi0m, p.init.leader_cov)).trace() +
         2.0 * xim.dot(fol.P0(0) * xi0m) + 2.0 * phi.dot(xim) + 2.0 * phi0.dot(xi0m) + s_T;
}

double closed_form_leader_openloop(const ModelParams& p, const StackedLeaderSolution& leader) {
  const int n0 = p.dims.n0, n = p.dims.n;
  Vec X0 = Vec::Zero(leader.s);
  X0.head(n0) = p.init.leader_mean;
  X0.segment(n0, n) = p.init.follower_mean;
  const Vec Y0 = leader.Pcal.block(0, 0) * X0;
  return X0.head(n0 + n).dot(Y0.head(n0 + n));
}

double closed_form_social_feedback(const ModelParams& p, const FeedbackSolution& fb) {
  const Vec& xim = p.init.follower_mean;
  const Vec& xi0m = p.init.leader_mean;
  return (fb.M(0) * second_moment(xim, p.init.follower_cov)).trace() +
         xim.dot(fb.Mbar(0) * xim) + 2.0 * xi0m.dot(fb.Lambar(0) * xim) +
         (fb.Lam0(0) * second_moment(xi0m, p.init.leader_cov)).trace();
}

double closed_form_leader_feedback(const ModelParams& p, const FeedbackSolution& fb) {
  const Vec& xim = p.init.follower_mean;
  const Vec& xi0m = p.init.leader_mean;
  return (fb.Th1(0) * second_moment(xi0m, p.init.leader_cov)).trace() +
         xim.dot(fb.Th2(0) * xim) + 2.0 * xim.dot(fb.Th3(0) * xi0m);
}

namespace {

void fill_empirical(CostReport& r, const Ensemble& ens) {
  r.N = ens.cfg.N;
  r.paths = ens.cfg.paths;
  path_mean_se(ens.J0_path, ens.cfg.antithetic, r.J0_mean, r.J0_se);
  path_mean_se(ens.Jsoc_path, ens.cfg.antithetic, r.Jsoc_mean, r.Jsoc_se);
  r.per_capita_social = r.Jsoc_mean / ens.cfg.N;
  r.meanfield_gap = ens.sup_gap();
}

}  // namespace

CostReport cost_report_openloop(const ModelParams& p, const OpenLoopFollowerSolution& fol,
                                const StackedLeaderSolution& leader, const Ensemble& ens) {
  CostReport r;
  r.mode = "openloop";
  fill_empirical(r, ens);
  r.s_T = openloop_s_T(p, ens);
  r.closed_form_leader = closed_form_leader_openloop(p, leader);
  r.closed_form_social = closed_form_social_openloop(p, fol, leader, r.s_T);
  return r;
}

CostReport cost_report_feedback(const ModelParams& p, const FeedbackSolution& fb,
                                const Ensemble& ens) {
  CostReport r;
  r.mode = "feedback";
  fill_empirical(r, ens);
  r.s_T = 0.0;
  r.closed_form_leader = closed_form_leader_feedback(p, fb);
  r.closed_form_social = closed_form_social_feedback(p, fb);
  return r;
}

namespace {

// Smooth probe shape on [0, T]: a short random sine series normalized to
// unit sup on the probe grid.
std::vector<double> probe_shape(std::uint64_t probe_seed, int shape_idx, int role, double T,
                                int steps) {
  const std::uint64_t id = hash64(probe_seed, static_cast<std::uint64_t>(shape_idx),
                                  static_cast<std::uint64_t>(role));
  double c[3], th[3];
  for (int j = 0; j < 3; ++j) {
    c[j] = NoiseStream{id, false}.normal(static_cast<std::uint64_t>(j));
    th[j] = 6.283185307179586477 * uniform01(id, 100 + static_cast<std::uint64_t>(j));
  }
  std::vector<double> shape(steps + 1);
  double sup = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double t = T * k / steps;
    double v = 0.0;
    for (int j = 0; j < 3; ++j) {
      v += c[j] * std::sin((j + 1) * 3.14159265358979323846 * t / T + th[j]);
    }
    shape[k] = v;
    sup = std::max(sup, std::abs(v));
  }
  if (sup < 1e-9) {
    std::fill(shape.begin(), shape.end(), 1.0);
  } else {
    for (double& v : shape) v /= sup;
  }
  return shape;
}

Mat probe_direction(std::uint64_t probe_seed, int shape_idx, int role, int rows, int cols) {
  const std::uint64_t id = hash64(probe_seed ^ 0x5851f42d4c957f2dULL,
                                  static_cast<std::uint64_t>(shape_idx),
                                  static_cast<std::uint64_t>(role));
  Mat E(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int col = 0; col < cols; ++col) {
      E(r, col) = NoiseStream{id, false}.normal(static_cast<std::uint64_t>(r * cols + col));
    }
  }
  const double nrm = inf_norm(E);
  if (nrm > 0.0) E /= nrm;
  return E;
}

double max_block_norm(const TimeGridFn& g, int block) {
  double worst = 0.0;
  for (int k = 0; k <= g.steps(); ++k) worst = std::max(worst, inf_norm(g.block(k, block)));
  return worst;
}

SimConfig probe_sim_config(const SimConfig& cfg, const ProbeConfig& probes) {
  SimConfig pc = cfg;
  pc.paths = probes.paths;
  pc.sim_steps = probes.sim_steps;
  if (pc.sim_steps % pc.store_every != 0) pc.store_every = 1;
  pc.store_followers = false;
  return pc;
}

// Shared tail: given the base per-path costs and a probe runner, scan the
// whole family and assemble the estimate. scale_per_path divides the raw
// path costs (population size for per-capita social, 1 for the leader).
template <typename RunProbe>
EpsilonEstimate scan_probes(const std::vector<double>& base_paths, double scale_per_path,
                            bool antithetic, const ProbeConfig& probes, RunProbe&& run) {
  EpsilonEstimate est;
  double base_mean, base_se;
  path_mean_se(base_paths, antithetic, base_mean, base_se);
  est.base_cost = base_mean / scale_per_path;
  est.best_probe_cost = est.base_cost;

  std::vector<double> best_diffs;
  double best_dmean = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < probes.n_shapes; ++r) {
    for (double mag : probes.magnitudes) {
      const std::vector<double> probe_paths = run(r, mag);
      std::vector<double> diffs(base_paths.size());
      for (std::size_t i = 0; i < diffs.size(); ++i) {
        diffs[i] = (base_paths[i] - probe_paths[i]) / scale_per_path;
      }
      double dmean, dse;
      path_mean_se(diffs, antithetic, dmean, dse);
      if (dmean > best_dmean) {
        best_dmean = dmean;
        est.best_shape = r;
        est.best_magnitude = mag;
        est.best_probe_cost = est.base_cost - dmean;
        best_diffs = std::move(diffs);
      }
    }
  }
  if (!best_diffs.empty()) {
    double dmean, dse;
    path_mean_se(best_diffs, antithetic, dmean, dse);
    est.epsilon_hat = std::max(0.0, dmean);
    est.se = dse;
  }
  return est;
}

}  // namespace

EpsilonEstimate epsilon_probe_followers_openloop(const ModelParams& p, const OpenLoopPolicy& pol,
                                                 const SimConfig& cfg, const ProbeConfig& probes) {
  const SimConfig pc = probe_sim_config(cfg, probes);
  const Ensemble base = simulate_openloop(p, pol, pc);
  const double gscale = std::max(max_block_norm(pol.follower_gains, OpenLoopPolicy::gXi), 1e-9);

  auto run = [&](int r, double mag) {
    const std::vector<double> shape =
        probe_shape(probes.probe_seed, r, 0, p.T, pc.sim_steps);
    const Mat E = probe_direction(probes.probe_seed, r, 0, p.dims.m, p.dims.n);
    std::vector<BlockVec> vals(pc.sim_steps + 1);
    for (int k = 0; k <= pc.sim_steps; ++k) vals[k] = {mag * gscale * shape[k] * E};
    OpenLoopPerturbation pert;
    pert.follower_dgain = TimeGridFn(p.T, std::move(vals));
    pert.has_follower = true;
    return simulate_openloop_perturbed(p, pol, pc, pert).Jsoc_path;
  };
  return scan_probes(base.Jsoc_path, static_cast<double>(pc.N), pc.antithetic, probes, run);
}

EpsilonEstimate epsilon_probe_followers_feedback(const ModelParams& p, const FeedbackPolicy& pol,
                                                 const SimConfig& cfg, const ProbeConfig& probes) {
  const SimConfig pc = probe_sim_config(cfg, probes);
  const Ensemble base = simulate_feedback(p, pol, pc);
  const double gscale = std::max(max_block_norm(pol.follower_gains, FeedbackPolicy::gX), 1e-9);

  auto run = [&](int r, double mag) {
    const std::vector<double> shape =
        probe_shape(probes.probe_seed, r, 0, p.T, pc.sim_steps);
    const Mat E = probe_direction(probes.probe_seed, r, 0, p.dims.m, p.dims.n);
    std::vector<BlockVec> vals(pc.sim_steps + 1);
    for (int k = 0; k <= pc.sim_steps; ++k) vals[k] = {mag * gscale * shape[k] * E};
    FeedbackPerturbation pert;
    pert.follower_dgain = TimeGridFn(p.T, std::move(vals));
    pert.has_follower = true;
    return simulate_feedback_perturbed(p, pol, pc, pert).Jsoc_path;
  };
  return scan_probes(base.Jsoc_path, static_cast<double>(pc.N), pc.antithetic, probes, run);
}

EpsilonEstimate epsilon_probe_leader_openloop(const ModelParams& p,
                                              const OpenLoopFollowerSolution& fol,
                                              const OpenLoopPolicy& pol, const SimConfig& cfg,
                                              const ProbeConfig& probes) {
  const SimConfig pc = probe_sim_config(cfg, probes);
  const Ensemble base = simulate_openloop(p, pol, pc);
  const int n0 = p.dims.n0, n = p.dims.n, m0 = p.dims.m0;
  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;

  // Deterministic mean path of the stacked state, for the control scale.
  double u0scale = 0.0;
  {
    Vec X = Vec::Zero(pol.s);
    X.head(n0) = p.init.leader_mean;
    X.segment(n0, n) = p.init.follower_mean;
    const double dt = p.T / pc.sim_steps;
    auto drift = [&](double t, const Vec& x) -> Vec {
      return pol.stacked.eval(t)[OpenLoopPolicy::sAcl] * x;
    };
    for (int k = 0; k <= pc.sim_steps; ++k) {
      const double t = p.T * k / pc.sim_steps;
      u0scale = std::max(u0scale, inf_norm(pol.stacked.eval(t)[OpenLoopPolicy::sL0] * X));
      if (k == pc.sim_steps) break;
      const Vec k1 = drift(t, X);
      const Vec k2 = drift(t + 0.5 * dt, X + 0.5 * dt * k1);
      const Vec k3 = drift(t + 0.5 * dt, X + 0.5 * dt * k2);
      const Vec k4 = drift(t + dt, X + dt * k3);
      X += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u0scale = std::max(u0scale, 1e-9);
  }

  // Follower-response pieces interpolated from the solved blocks.
  const int Ksol = fol.sol.steps();
  std::vector<BlockVec> resp(Ksol + 1);
  for (int k = 0; k <= Ksol; ++k) {
    const Mat T21 = fd.F - fd.B * fol.Ups_pinv[k] * fol.Psi1[k];
    const Mat T22 = fd.A + fd.G - fd.B * fol.Ups_pinv[k] * (fol.Psi2[k] + fol.Psi3[k]);
    const Mat forc0 = ld.C0.transpose() * fol.K(k) * ld.D0 + fol.K(k) * ld.B0;
    const Mat forc = fol.P0(k) * ld.B0;
    resp[k] = {T21, T22, forc0, forc};
  }
  const TimeGridFn response(p.T, std::move(resp));

  auto run = [&](int r, double mag) {
    const std::vector<double> shape =
        probe_shape(probes.probe_seed, r, 1, p.T, pc.sim_steps);
    const Mat dir = probe_direction(probes.probe_seed, r, 1, m0, 1);
    std::vector<Mat> delta(pc.sim_steps + 1);
    for (int k = 0; k <= pc.sim_steps; ++k) delta[k] = mag * u0scale * shape[k] * dir;
    const TimeGridFn delta_fn(
        p.T, [&] {
          std::vector<BlockVec> v(pc.sim_steps + 1);
          for (int k = 0; k <= pc.sim_steps; ++k) v[k] = {delta[k]};
          return v;
        }());

    auto rhs = [&](double t, const BlockVec& y) -> BlockVec {
      const BlockVec rp = response.eval(t);
      const Mat d = delta_fn.eval(t)[0];
      BlockVec dy(2);
      dy[0] = -(ld.A0.transpose() * y[0] + rp[0].transpose() * y[1] + rp[2] * d);
      dy[1] = -(rp[1].transpose() * y[1] + ld.G0.transpose() * y[0] + rp[3] * d);
      return dy;
    };
    BlockVec terminal{Mat::Zero(n0, 1), Mat::Zero(n, 1)};
    const TimeGridFn dphi = integrate_backward(rhs, terminal, p.T, pc.sim_steps);

    std::vector<BlockVec> vals(pc.sim_steps + 1);
    for (int k = 0; k <= pc.sim_steps; ++k) {
      vals[k] = {delta[k], dphi.block(k, 0), dphi.block(k, 1)};
    }
    OpenLoopPerturbation pert;
    pert.leader = TimeGridFn(p.T, std::move(vals));
    pert.has_leader = true;
    return simulate_openloop_perturbed(p, pol, pc, pert).J0_path;
  };
  return scan_probes(base.J0_path, 1.0, pc.antithetic, probes, run);
}

EpsilonEstimate epsilon_probe_leader_feedback(const ModelParams& p, const FeedbackSolution& fb,
                                              const SimConfig& cfg, const ProbeConfig& probes) {
  const SimConfig pc = probe_sim_config(cfg, probes);
  const FeedbackPolicy base_pol = build_feedback_policy(p, fb);
  const Ensemble base = simulate_feedback(p, base_pol, pc);

  const TimeGridFn base_gains = leader_gain_grid(fb);
  const int Kg = base_gains.steps();
  const double p0scale = std::max(max_block_norm(base_gains, 0), 1e-9);
  const double pbscale = std::max(max_block_norm(base_gains, 1), 1e-9);

  auto run = [&](int r, double mag) {
    if (mag == 0.0) {
      return simulate_feedback(p, base_pol, pc).J0_path;
    }
    const std::vector<double> shape = probe_shape(probes.probe_seed, r, 2, p.T, Kg);
    const Mat E0 = probe_direction(probes.probe_seed, r, 2, p.dims.m0, p.dims.n0);
    const Mat Eb = probe_direction(probes.probe_seed, r, 3, p.dims.m0, p.dims.n);
    std::vector<BlockVec> vals(Kg + 1);
    for (int k = 0; k <= Kg; ++k) {
      vals[k] = {base_gains.block(k, 0) + mag * p0scale * shape[k] * E0,
                 base_gains.block(k, 1) + mag * pbscale * shape[k] * Eb};
    }
    const TimeGridFn probed(p.T, std::move(vals));
    const FiniteNFeedbackSolution resp = solve_finite_N(p, 0, probed, Kg);
    const FeedbackPolicy pol = build_feedback_policy(p, resp, probed);
    return simulate_feedback(p, pol, pc).J0_path;
  };
  return scan_probes(base.J0_path, 1.0, pc.antithetic, probes, run);
}

namespace {

void fit_loglog(ConvergenceStudy& st) {
  const std::size_t n = st.values.size();
  for (double v : st.values) {
    if (!(v > 0.0)) {
      st.status = "not-applicable";
      return;
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(static_cast<double>(st.Ns[i]));
    const double y = std::log(st.values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  st.slope = (n * sxy - sx * sy) / denom;
  st.intercept = (sy - st.slope * sx) / n;
  st.status = "ok";
}

void check_N_list(const std::vector<int>& Ns) {
  if (Ns.size() < 3) {
    throw ValidationError("convergence study needs at least three population sizes");
  }
  for (int N : Ns) {
    if (N < 1) throw ValidationError("convergence study: population sizes must be >= 1");
  }
}

}  // namespace

ConvergenceStudy riccati_gap_study(const ModelParams& p, const FeedbackSolution& fb,
                                   const std::vector<int>& Ns, int K_override) {
  check_N_list(Ns);
  const TimeGridFn lg = leader_gain_grid(fb);
  const int K = K_override > 0 ? K_override : fb.sol.steps();

  ConvergenceStudy st;
  st.Ns = Ns;
  for (int N : Ns) {
    const FiniteNFeedbackSolution fin = solve_finite_N(p, N, lg, K);
    double worst = 0.0;
    for (int k = 0; k <= K; ++k) {
      for (int b = 0; b < FiniteNFeedbackSolution::block_count; ++b) {
        worst = std::max(worst, inf_norm(fin.sol.block(k, b) - fb.sol.block(k, b)));
      }
    }
    st.values.push_back(worst);
  }
  fit_loglog(st);
  return st;
}

ConvergenceStudy meanfield_gap_study_openloop(const ModelParams& p, const OpenLoopPolicy& pol,
                                              const SimConfig& cfg, const std::vector<int>& Ns) {
  check_N_list(Ns);
  ConvergenceStudy st;
  st.Ns = Ns;
  for (int N : Ns) {
    SimConfig c = cfg;
    c.N = N;
    st.values.push_back(simulate_openloop(p, pol, c).sup_gap());
  }
  fit_loglog(st);
  return st;
}

ConvergenceStudy meanfield_gap_study_feedback(const ModelParams& p, const FeedbackPolicy& pol,
                                              const SimConfig& cfg, const std::vector<int>& Ns) {
  check_N_list(Ns);
  ConvergenceStudy st;
  st.Ns = Ns;
  for (int N : Ns) {
    SimConfig c = cfg;
    c.N = N;
    st.values.push_back(simulate_feedback(p, pol, c).sup_gap());
  }
  fit_loglog(st);
  return st;
}

}  // namespace mflq
