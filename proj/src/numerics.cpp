#include "mflq/numerics.hpp"

#include <cmath>
#include <sstream>

#include "mflq/errors.hpp"

namespace mflq {

TimeGridFn::TimeGridFn(double T, std::vector<BlockVec> values)
    : T_(T), values_(std::move(values)) {
  if (T_ <= 0.0 || values_.size() < 2) {
    throw ValidationError("TimeGridFn: need T > 0 and at least two grid points");
  }
  for (const auto& v : values_) {
    if (v.size() != values_.front().size()) {
      throw ValidationError("TimeGridFn: inconsistent block count across grid points");
    }
  }
}

BlockVec TimeGridFn::eval(double t) const {
  const double eps = 1e-12 * std::max(1.0, T_);
  if (t < -eps || t > T_ + eps) {
    std::ostringstream ss;
    ss << "TimeGridFn::eval: t=" << t << " outside [0," << T_ << "]";
    throw ValidationError(ss.str());
  }
  const int K = steps();
  double s = t / T_ * K;
  if (s <= 0.0) return values_.front();
  if (s >= K) return values_.back();
  const int k = static_cast<int>(s);
  const double w = s - k;
  if (w == 0.0) return values_[k];
  BlockVec out = values_[k];
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b] = (1.0 - w) * out[b] + w * values_[k + 1][b];
  }
  return out;
}

Mat pinv(const Mat& M, double rank_tol) {
  if (!M.allFinite()) throw ValidationError("pinv: non-finite entries");
  if (M.size() == 0) return M.transpose();
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = rank_tol * (sv.size() > 0 ? sv(0) : 0.0);
  Vec inv_sv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  }
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

Mat strict_inverse(const Mat& M, double singular_tol, double at_time) {
  if (M.rows() != M.cols()) throw ValidationError("strict_inverse: matrix not square");
  if (!M.allFinite()) throw ValidationError("strict_inverse: non-finite entries");
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double largest = sv.size() > 0 ? sv(0) : 0.0;
  const double smallest = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
  if (smallest <= singular_tol * std::max(1.0, largest)) {
    std::ostringstream ss;
    ss << "strict_inverse: matrix singular to tolerance " << singular_tol;
    if (at_time >= 0.0) ss << " at t=" << at_time;
    throw NonSolvableError(ss.str(), at_time);
  }
  Vec inv_sv = sv.cwiseInverse();
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

bool range_subset(const Mat& A, const Mat& B, double tol) {
  if (A.rows() != B.rows()) throw ValidationError("range_subset: row counts differ");
  const Mat proj = Mat::Identity(B.rows(), B.rows()) - B * pinv(B);
  return inf_norm(proj * A) <= tol;
}

double min_eigenvalue(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()));
  return es.eigenvalues().minCoeff();
}

bool is_psd(const Mat& M, double tol) {
  if (M.rows() != M.cols()) throw ValidationError("is_psd: matrix not square");
  if (inf_norm(M - M.transpose()) > tol) throw ValidationError("is_psd: matrix not symmetric");
  return min_eigenvalue(M) >= -tol;
}

namespace {

void check_finite(const BlockVec& y, double t, double threshold) {
  for (const auto& b : y) {
    if (!b.allFinite() || inf_norm(b) > threshold) {
      std::ostringstream ss;
      ss << "backward integration blew up at t=" << t
         << " (entry above " << threshold << " or non-finite); "
         << "the Riccati system is not solvable for this model";
      throw NonSolvableError(ss.str(), t);
    }
  }
}

}  // namespace

TimeGridFn integrate_backward(const BlockRhs& rhs, const BlockVec& terminal, double T, int K,
                              double blow_up_threshold) {
  if (K < 2) throw ValidationError("integrate_backward: K must be >= 2");
  const double dt = T / K;
  std::vector<BlockVec> values(K + 1);
  values[K] = terminal;
  BlockVec y = terminal;
  // March in reverse time; the stage times follow the classical tableau
  // applied to tau = T - t.
  for (int k = K; k > 0; --k) {
    const double t = T * k / K;
    const BlockVec k1 = rhs(t, y);
    BlockVec y2 = y;
    axpy(y2, -0.5 * dt, k1);
    const BlockVec k2 = rhs(t - 0.5 * dt, y2);
    BlockVec y3 = y;
    axpy(y3, -0.5 * dt, k2);
    const BlockVec k3 = rhs(t - 0.5 * dt, y3);
    BlockVec y4 = y;
    axpy(y4, -dt, k3);
    const BlockVec k4 = rhs(t - dt, y4);
    for (std::size_t b = 0; b < y.size(); ++b) {
      y[b] -= dt / 6.0 * (k1[b] + 2.0 * k2[b] + 2.0 * k3[b] + k4[b]);
    }
    check_finite(y, t - dt, blow_up_threshold);
    values[k - 1] = y;
  }
  return TimeGridFn(T, std::move(values));
}

double residual_midpoint(const TimeGridFn& sol, const BlockRhs& rhs) {
  const int K = sol.steps();
  const double dt = sol.dt();
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    const BlockVec& a = sol.at(k);
    const BlockVec& b = sol.at(k + 1);
    BlockVec mid = a;
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
    const BlockVec f = rhs(sol.time_at(k) + 0.5 * dt, mid);
    for (std::size_t i = 0; i < f.size(); ++i) {
      worst = std::max(worst, inf_norm((b[i] - a[i]) / dt - f[i]));
    }
  }
  return worst;
}

double residual_staggered(const TimeGridFn& sol, const BlockRhs& rhs) {
  const int K = sol.steps();
  const double dt = sol.dt();
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    const BlockVec& a = sol.at(k);
    const BlockVec& b = sol.at(k + 1);
    const BlockVec fa = rhs(sol.time_at(k), a);
    const BlockVec fb = rhs(sol.time_at(k + 1), b);
    BlockVec mid = a;
    for (std::size_t i = 0; i < mid.size(); ++i) {
      mid[i] = 0.5 * (a[i] + b[i]) + dt / 8.0 * (fa[i] - fb[i]);
    }
    const BlockVec fm = rhs(sol.time_at(k) + 0.5 * dt, mid);
    for (std::size_t i = 0; i < fm.size(); ++i) {
      const Mat r = (b[i] - a[i]) / dt - (fa[i] + 4.0 * fm[i] + fb[i]) / 6.0;
      worst = std::max(worst, inf_norm(r));
    }
  }
  return worst;
}

double rel_diff(const BlockVec& a, const BlockVec& ref, double floor_norm) {
  double num = 0.0, den = floor_norm;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, inf_norm(a[i] - ref[i]));
    den = std::max(den, inf_norm(ref[i]));
  }
  return num / den;
}

double pairwise_sum(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  std::vector<double> level(xs);
  while (level.size() > 1) {
    std::vector<double> next((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next[i / 2] = level[i] + level[i + 1];
    if (level.size() % 2 == 1) next.back() = level.back();
    level.swap(next);
  }
  return level[0];
}

double trapezoid(const std::vector<double>& samples, double T) {
  if (samples.size() < 2) throw ValidationError("trapezoid: need at least two samples");
  const double dt = T / (samples.size() - 1);
  std::vector<double> terms(samples.size() - 1);
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    terms[i] = 0.5 * dt * (samples[i] + samples[i + 1]);
  }
  return pairwise_sum(terms);
}

}  // namespace mflq
