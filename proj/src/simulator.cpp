#include "mflq/simulator.hpp"

#include <cmath>
#include <sstream>

#include "mflq/errors.hpp"
#include "mflq/numerics.hpp"
#include "mflq/rng.hpp"

namespace mflq {

namespace {

void check_cfg(const SimConfig& cfg) {
  if (cfg.N < 1) throw ValidationError("simulate: N must be >= 1");
  if (cfg.paths < 1) throw ValidationError("simulate: paths must be >= 1");
  if (cfg.sim_steps < 1) throw ValidationError("simulate: sim_steps must be >= 1");
  if (cfg.store_every < 1 || cfg.sim_steps % cfg.store_every != 0) {
    throw ValidationError("simulate: store_every must be >= 1 and divide sim_steps");
  }
  if (cfg.antithetic && cfg.paths % 2 != 0) {
    throw ValidationError("simulate: antithetic sampling needs an even path count");
  }
}

Mat sqrt_psd(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  Vec lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double quad(const Mat& W, const Vec& v) { return v.dot(W * v); }

// Sum over columns of |col|^2_W.
double quad_cols(const Mat& W, const Mat& V) { return (W * V).cwiseProduct(V).sum(); }

Vec draw_initial(const NoiseStream& st, const Vec& mean, const Mat& sqrt_cov) {
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = st.normal(static_cast<std::uint64_t>(i));
  return mean + sqrt_cov * z;
}

void check_state(double worst, double t, int path) {
  if (!std::isfinite(worst) || worst > 1e12) {
    std::ostringstream ss;
    ss << "simulation diverged at t=" << t << " on path " << path;
    throw DivergenceError(ss.str(), t, path);
  }
}

struct Accumulator {
  int S = 0;
  std::vector<Vec> sum_x0, sum_xN, sum_xbar;
  std::vector<double> sum_gap, sum_sT;
  bool with_sT = false;

  Accumulator(int stored, int n0, int n, bool sT) : S(stored), with_sT(sT) {
    sum_x0.assign(S + 1, Vec::Zero(n0));
    sum_xN.assign(S + 1, Vec::Zero(n));
    sum_xbar.assign(S + 1, Vec::Zero(n));
    sum_gap.assign(S + 1, 0.0);
    if (with_sT) sum_sT.assign(S + 1, 0.0);
  }

  void finalize(Ensemble& e, double T, int paths) const {
    const double inv = 1.0 / paths;
    e.times.resize(S + 1);
    e.mean_x0.resize(S + 1);
    e.mean_xN.resize(S + 1);
    e.mean_xbar.resize(S + 1);
    e.gap_sq.resize(S + 1);
    if (with_sT) e.sT_integrand.resize(S + 1);
    for (int si = 0; si <= S; ++si) {
      e.times[si] = T * si / S;
      e.mean_x0[si] = inv * sum_x0[si];
      e.mean_xN[si] = inv * sum_xN[si];
      e.mean_xbar[si] = inv * sum_xbar[si];
      e.gap_sq[si] = inv * sum_gap[si];
      if (with_sT) e.sT_integrand[si] = inv * sum_sT[si];
    }
  }
};

struct OLStep {
  Mat Acl, Ccl, L0, B, B0, Pcal, Kmat;
  Mat Gxi, Gxbar, Gx0, Gphi;
  Mat dG;
  Vec delta, dphi0, dphi;
};

struct FBStep {
  Mat P0, Pbar, Kx, Kxbar, K0, Ahat, Fhat;
  Mat dK;
};

}  // namespace

double Ensemble::J0_mean() const {
  double m, se;
  path_mean_se(J0_path, cfg.antithetic, m, se);
  return m;
}
double Ensemble::J0_se() const {
  double m, se;
  path_mean_se(J0_path, cfg.antithetic, m, se);
  return se;
}
double Ensemble::Jsoc_mean() const {
  double m, se;
  path_mean_se(Jsoc_path, cfg.antithetic, m, se);
  return m;
}
double Ensemble::Jsoc_se() const {
  double m, se;
  path_mean_se(Jsoc_path, cfg.antithetic, m, se);
  return se;
}
double Ensemble::sup_gap() const {
  double worst = 0.0;
  for (double g : gap_sq) worst = std::max(worst, g);
  return worst;
}

void path_mean_se(const std::vector<double>& values, bool antithetic, double& mean, double& se) {
  std::vector<double> samples;
  if (antithetic) {
    samples.resize(values.size() / 2);
    for (std::size_t j = 0; j < samples.size(); ++j) {
      samples[j] = 0.5 * (values[2 * j] + values[2 * j + 1]);
    }
  } else {
    samples = values;
  }
  const std::size_t J = samples.size();
  mean = pairwise_sum(samples) / J;
  if (J < 2) {
    se = 0.0;
    return;
  }
  std::vector<double> sq(J);
  for (std::size_t j = 0; j < J; ++j) sq[j] = (samples[j] - mean) * (samples[j] - mean);
  se = std::sqrt(pairwise_sum(sq) / (J - 1) / J);
}

Ensemble simulate_openloop(const ModelParams& p, const OpenLoopPolicy& pol, const SimConfig& cfg) {
  return simulate_openloop_perturbed(p, pol, cfg, OpenLoopPerturbation{});
}

Ensemble simulate_openloop_perturbed(const ModelParams& p, const OpenLoopPolicy& pol,
                                     const SimConfig& cfg, const OpenLoopPerturbation& pert) {
  check_cfg(cfg);
  const int n0 = p.dims.n0, n = p.dims.n, N = cfg.N;
  const int steps = cfg.sim_steps;
  const double dt = p.T / steps;
  const double sqdt = std::sqrt(dt);
  const int S = steps / cfg.store_every;

  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;
  const auto& lc = p.leader_cost;
  const auto& fc = p.follower_cost;

  std::vector<OLStep> grid(steps + 1);
  for (int sdx = 0; sdx <= steps; ++sdx) {
    const double t = p.T * sdx / steps;
    BlockVec sb = pol.stacked.eval(t);
    BlockVec fg = pol.follower_gains.eval(t);
    OLStep& st = grid[sdx];
    st.Acl = std::move(sb[OpenLoopPolicy::sAcl]);
    st.Ccl = std::move(sb[OpenLoopPolicy::sCcl]);
    st.L0 = std::move(sb[OpenLoopPolicy::sL0]);
    st.B = std::move(sb[OpenLoopPolicy::sB]);
    st.B0 = std::move(sb[OpenLoopPolicy::sB0]);
    st.Pcal = std::move(sb[OpenLoopPolicy::sPcal]);
    st.Kmat = std::move(sb[OpenLoopPolicy::sKmat]);
    st.Gxi = std::move(fg[OpenLoopPolicy::gXi]);
    st.Gxbar = std::move(fg[OpenLoopPolicy::gXbar]);
    st.Gx0 = std::move(fg[OpenLoopPolicy::gX0]);
    st.Gphi = std::move(fg[OpenLoopPolicy::gPhi]);
    if (pert.has_follower) st.dG = pert.follower_dgain.eval(t)[0];
    if (pert.has_leader) {
      BlockVec lb = pert.leader.eval(t);
      st.delta = std::move(lb[0]);
      st.dphi0 = std::move(lb[1]);
      st.dphi = std::move(lb[2]);
    }
  }

  const Mat sqrt_cov0 = sqrt_psd(p.init.leader_cov);
  const Mat sqrt_cov = sqrt_psd(p.init.follower_cov);

  Ensemble out;
  out.cfg = cfg;
  out.J0_path.resize(cfg.paths);
  out.Jsoc_path.resize(cfg.paths);
  if (cfg.store_followers) {
    out.x0_stored.resize(cfg.paths);
    out.xbar_stored.resize(cfg.paths);
    out.followers_stored.resize(cfg.paths);
  }
  Accumulator acc(S, n0, n, true);

  std::vector<double> l0(S + 1), lsoc(S + 1);
  Vec dW(N);

  for (int path = 0; path < cfg.paths; ++path) {
    const NoiseStream lead = noise_stream(cfg.seed, path, 0, cfg.antithetic);
    std::vector<NoiseStream> fst;
    fst.reserve(N);
    for (int j = 0; j < N; ++j) fst.push_back(noise_stream(cfg.seed, path, j + 1, cfg.antithetic));

    const Vec xi0 = draw_initial(lead, p.init.leader_mean, sqrt_cov0);
    Vec X = Vec::Zero(pol.s);
    X.head(n0) = xi0;
    X.segment(n0, n) = p.init.follower_mean;

    Mat Xf(n, N), Pl(n, N);
    for (int j = 0; j < N; ++j) {
      Pl.col(j) = draw_initial(fst[j], p.init.follower_mean, sqrt_cov);
    }
    Xf = Pl;
    Vec x0p = xi0;

    Vec e0T, x0T, xNT;
    Mat PlT;
    Vec u0, xbar, Y, phi, phi_eff, x0slot, ucom, xN;

    for (int sdx = 0; sdx <= steps; ++sdx) {
      const OLStep& st = grid[sdx];
      const double t = p.T * sdx / steps;

      u0 = st.L0 * X;
      if (st.delta.size() > 0) u0 += st.delta;
      xbar = X.segment(n0, n);
      Y = st.Pcal * X;
      phi = Y.tail(n);
      phi_eff = st.dphi.size() > 0 ? Vec(phi + st.dphi) : phi;
      x0slot = cfg.realized_leader_in_follower_control ? x0p : Vec(X.head(n0));

      ucom = st.Gxbar * xbar + st.Gx0 * x0slot + st.Gphi * phi_eff;
      Mat U = st.Gxi * Xf;
      if (st.dG.size() > 0) U += st.dG * Xf;
      U.colwise() += ucom;
      xN = Pl.rowwise().mean();

      if (sdx % cfg.store_every == 0) {
        const int si = sdx / cfg.store_every;
        acc.sum_x0[si] += x0p;
        acc.sum_xN[si] += xN;
        acc.sum_xbar[si] += xbar;
        acc.sum_gap[si] += (xN - xbar).squaredNorm();

        l0[si] = quad(lc.Q0, x0p - lc.Gamma0 * xN) + quad(lc.R0, u0);
        Mat E = Pl;
        E.colwise() -= Vec(fc.Gamma * xN + fc.Gamma1 * x0p);
        lsoc[si] = quad_cols(fc.Q, E) + quad_cols(fc.R, U);

        Vec diffX = st.Ccl * X;
        if (st.delta.size() > 0) diffX += pol.D0s * st.delta;
        const Vec Z = st.Pcal * diffX;
        const Vec zeta0 = Z.segment(n0 + n, n0);
        const Vec phi0 = Y.segment(n0 + n, n0);
        const Vec D0u0 = ld.D0 * u0;
        acc.sum_sT[si] += xbar.dot(ld.Gbar0.transpose() * (st.Kmat * D0u0)) +
                          zeta0.dot(D0u0) + phi0.dot(ld.B0 * u0) +
                          D0u0.dot(st.Kmat * D0u0);

        if (cfg.store_followers) {
          out.x0_stored[path].push_back(x0p);
          out.xbar_stored[path].push_back(xbar);
          out.followers_stored[path].push_back(Pl);
        }
      }
      if (sdx == steps) {
        x0T = x0p;
        xNT = xN;
        PlT = Pl;
        break;
      }

      const double dW0 = sqdt * lead.normal(static_cast<std::uint64_t>(n0 + sdx));
      for (int j = 0; j < N; ++j) {
        dW(j) = sqdt * fst[j].normal(static_cast<std::uint64_t>(n + sdx));
      }

      Vec driftX = st.Acl * X;
      Vec diffX = st.Ccl * X;
      if (st.delta.size() > 0) {
        driftX += st.B0 * st.delta;
        diffX += pol.D0s * st.delta;
        Vec corr = Vec::Zero(pol.s);
        corr.segment(n0 + n, n0) = st.dphi0;
        corr.tail(n) = st.dphi;
        driftX -= st.B * corr;
      }
      X += dt * driftX + dW0 * diffX;

      const Vec fdrift_c = fd.G * xbar + fd.F * x0slot;
      const Vec fdiff_c = fd.Gbar * xbar + fd.Fbar * x0slot;
      Mat driftF = fd.A * Xf + fd.B * U;
      driftF.colwise() += fdrift_c;
      Mat diffF = fd.C * Xf + fd.D * U;
      diffF.colwise() += fdiff_c;
      Xf += dt * driftF + diffF * dW.asDiagonal();

      const Vec pdrift_c = fd.G * xN + fd.F * x0p;
      const Vec pdiff_c = fd.Gbar * xN + fd.Fbar * x0p;
      Mat driftP = fd.A * Pl + fd.B * U;
      driftP.colwise() += pdrift_c;
      Mat diffP = fd.C * Pl + fd.D * U;
      diffP.colwise() += pdiff_c;
      Pl += dt * driftP + diffP * dW.asDiagonal();

      const Vec ldrift = ld.A0 * x0p + ld.G0 * xN + ld.B0 * u0;
      const Vec ldiff = ld.C0 * x0p + ld.Gbar0 * xN + ld.D0 * u0;
      x0p += dt * ldrift + dW0 * ldiff;

      const double worst =
          std::max({inf_norm(X), inf_norm(Xf), inf_norm(Pl), inf_norm(x0p)});
      check_state(worst, t + dt, path);
    }

    e0T = x0T - lc.Ghat0 * xNT;
    double termsoc;
    {
      Mat E = PlT;
      E.colwise() -= Vec(fc.Ghat * xNT + fc.Ghat1 * x0T);
      termsoc = quad_cols(fc.H, E);
    }
    out.J0_path[path] = trapezoid(l0, p.T) + quad(lc.H0, e0T);
    out.Jsoc_path[path] = trapezoid(lsoc, p.T) + termsoc;
  }

  acc.finalize(out, p.T, cfg.paths);
  return out;
}

Ensemble simulate_feedback(const ModelParams& p, const FeedbackPolicy& pol, const SimConfig& cfg) {
  return simulate_feedback_perturbed(p, pol, cfg, FeedbackPerturbation{});
}

Ensemble simulate_feedback_perturbed(const ModelParams& p, const FeedbackPolicy& pol,
                                     const SimConfig& cfg, const FeedbackPerturbation& pert) {
  check_cfg(cfg);
  const int n0 = p.dims.n0, n = p.dims.n, N = cfg.N;
  const int steps = cfg.sim_steps;
  const double dt = p.T / steps;
  const double sqdt = std::sqrt(dt);
  const int S = steps / cfg.store_every;

  const auto& ld = p.leader_dyn;
  const auto& fd = p.follower_dyn;
  const auto& lc = p.leader_cost;
  const auto& fc = p.follower_cost;

  std::vector<FBStep> grid(steps + 1);
  for (int sdx = 0; sdx <= steps; ++sdx) {
    const double t = p.T * sdx / steps;
    BlockVec lg = pol.leader_gains.eval(t);
    BlockVec fg = pol.follower_gains.eval(t);
    BlockVec mf = pol.mean_field.eval(t);
    FBStep& st = grid[sdx];
    st.P0 = std::move(lg[FeedbackPolicy::lP0]);
    st.Pbar = std::move(lg[FeedbackPolicy::lPbar]);
    st.Kx = std::move(fg[FeedbackPolicy::gX]);
    st.Kxbar = std::move(fg[FeedbackPolicy::gXbar]);
    st.K0 = std::move(fg[FeedbackPolicy::gX0]);
    st.Ahat = std::move(mf[FeedbackPolicy::mAhat]);
    st.Fhat = std::move(mf[FeedbackPolicy::mFhat]);
    if (pert.has_follower) st.dK = pert.follower_dgain.eval(t)[0];
  }

  const Mat sqrt_cov0 = sqrt_psd(p.init.leader_cov);
  const Mat sqrt_cov = sqrt_psd(p.init.follower_cov);

  Ensemble out;
  out.cfg = cfg;
  out.J0_path.resize(cfg.paths);
  out.Jsoc_path.resize(cfg.paths);
  if (cfg.store_followers) {
    out.x0_stored.resize(cfg.paths);
    out.xbar_stored.resize(cfg.paths);
    out.followers_stored.resize(cfg.paths);
  }
  Accumulator acc(S, n0, n, false);

  std::vector<double> l0(S + 1), lsoc(S + 1);
  Vec dW(N);

  for (int path = 0; path < cfg.paths; ++path) {
    const NoiseStream lead = noise_stream(cfg.seed, path, 0, cfg.antithetic);
    std::vector<NoiseStream> fst;
    fst.reserve(N);
    for (int j = 0; j < N; ++j) fst.push_back(noise_stream(cfg.seed, path, j + 1, cfg.antithetic));

    const Vec xi0 = draw_initial(lead, p.init.leader_mean, sqrt_cov0);
    Vec x0p = xi0;
    Vec x0L = xi0;
    Vec xbar = p.init.follower_mean;

    Mat Pl(n, N);
    for (int j = 0; j < N; ++j) {
      Pl.col(j) = draw_initial(fst[j], p.init.follower_mean, sqrt_cov);
    }

    Vec x0T, xNT;
    Mat PlT;
    Vec u0, x0slot, ucom, xN;

    for (int sdx = 0; sdx <= steps; ++sdx) {
      const FBStep& st = grid[sdx];
      const double t = p.T * sdx / steps;

      u0 = st.P0 * x0p + st.Pbar * xbar;
      x0slot = cfg.realized_leader_in_follower_control ? x0p : x0L;
      ucom = st.Kxbar * xbar + st.K0 * x0slot;
      Mat U = st.Kx * Pl;
      if (st.dK.size() > 0) U += st.dK * Pl;
      U.colwise() += ucom;
      xN = Pl.rowwise().mean();

      if (sdx % cfg.store_every == 0) {
        const int si = sdx / cfg.store_every;
        acc.sum_x0[si] += x0p;
        acc.sum_xN[si] += xN;
        acc.sum_xbar[si] += xbar;
        acc.sum_gap[si] += (xN - xbar).squaredNorm();

        l0[si] = quad(lc.Q0, x0p - lc.Gamma0 * xN) + quad(lc.R0, u0);
        Mat E = Pl;
        E.colwise() -= Vec(fc.Gamma * xN + fc.Gamma1 * x0p);
        lsoc[si] = quad_cols(fc.Q, E) + quad_cols(fc.R, U);

        if (cfg.store_followers) {
          out.x0_stored[path].push_back(x0p);
          out.xbar_stored[path].push_back(xbar);
          out.followers_stored[path].push_back(Pl);
        }
      }
      if (sdx == steps) {
        x0T = x0p;
        xNT = xN;
        PlT = Pl;
        break;
      }

      const double dW0 = sqdt * lead.normal(static_cast<std::uint64_t>(n0 + sdx));
      for (int j = 0; j < N; ++j) {
        dW(j) = sqdt * fst[j].normal(static_cast<std::uint64_t>(n + sdx));
      }

      const Vec x0new = x0p + dt * (ld.A0 * x0p + ld.G0 * xN + ld.B0 * u0) +
                        dW0 * (ld.C0 * x0p + ld.Gbar0 * xN + ld.D0 * u0);
      Vec x0Lnew = x0L;
      if (!cfg.realized_leader_in_follower_control) {
        const Vec u0L = st.P0 * x0L + st.Pbar * xbar;
        x0Lnew = x0L + dt * (ld.A0 * x0L + ld.G0 * xbar + ld.B0 * u0L) +
                 dW0 * (ld.C0 * x0L + ld.Gbar0 * xbar + ld.D0 * u0L);
      }

      const Vec pdrift_c = fd.G * xN + fd.F * x0p;
      const Vec pdiff_c = fd.Gbar * xN + fd.Fbar * x0p;
      Mat driftP = fd.A * Pl + fd.B * U;
      driftP.colwise() += pdrift_c;
      Mat diffP = fd.C * Pl + fd.D * U;
      diffP.colwise() += pdiff_c;
      Pl += dt * driftP + diffP * dW.asDiagonal();

      const FBStep& stn = grid[sdx + 1];
      const Vec f_s = st.Ahat * xbar + st.Fhat * x0slot;
      const Vec xbar_euler = xbar + dt * f_s;
      const Vec slot_new = cfg.realized_leader_in_follower_control ? x0new : x0Lnew;
      const Vec f_s1 = stn.Ahat * xbar_euler + stn.Fhat * slot_new;
      xbar += 0.5 * dt * (f_s + f_s1);

      x0p = x0new;
      x0L = x0Lnew;

      const double worst =
          std::max({inf_norm(x0p), inf_norm(Pl), inf_norm(xbar), inf_norm(x0L)});
      check_state(worst, t + dt, path);
    }

    double termsoc;
    {
      Mat E = PlT;
      E.colwise() -= Vec(fc.Ghat * xNT + fc.Ghat1 * x0T);
      termsoc = quad_cols(fc.H, E);
    }
    out.J0_path[path] = trapezoid(l0, p.T) + quad(lc.H0, x0T - lc.Ghat0 * xNT);
    out.Jsoc_path[path] = trapezoid(lsoc, p.T) + termsoc;
  }

  acc.finalize(out, p.T, cfg.paths);
  return out;
}

}  // namespace mflq
