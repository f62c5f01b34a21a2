#pragma once

#include <functional>
#include <vector>

#include "mflq/types.hpp"

namespace mflq {

// A block-matrix-valued function of time stored on a uniform grid
// t_k = k*T/K, k = 0..K, with piecewise-linear interpolation between
// grid points. Immutable after construction.
class TimeGridFn {
public:
  TimeGridFn() = default;
  TimeGridFn(double T, std::vector<BlockVec> values);

  double T() const noexcept { return T_; }
  int steps() const noexcept { return static_cast<int>(values_.size()) - 1; }
  double dt() const noexcept { return T_ / steps(); }
  double time_at(int k) const noexcept { return T_ * k / steps(); }

  const BlockVec& at(int k) const { return values_.at(k); }
  const std::vector<BlockVec>& values() const noexcept { return values_; }

  // Piecewise-linear in t; exact at grid points. t outside [0,T] rejects.
  BlockVec eval(double t) const;

  // Single-block convenience accessors.
  const Mat& block(int k, int b) const { return values_.at(k).at(b); }

private:
  double T_ = 0.0;
  std::vector<BlockVec> values_;
};

// Moore-Penrose pseudoinverse via SVD; singular values below
// rank_tol * sigma_max are treated as zero.
Mat pinv(const Mat& M, double rank_tol = 1e-10);

// Exact inverse with a singularity guard: the smallest singular value must
// stay above singular_tol * max(1, sigma_max), otherwise NonSolvableError
// carrying at_time is thrown.
Mat strict_inverse(const Mat& M, double singular_tol = 1e-10, double at_time = -1.0);

// True iff every column of A lies in the range of B:
// ||(I - B*pinv(B)) * A||_inf <= tol.
bool range_subset(const Mat& A, const Mat& B, double tol = 1e-8);

// Smallest eigenvalue >= -tol. Asymmetric input (beyond tol) rejects.
bool is_psd(const Mat& M, double tol = 1e-8);

double min_eigenvalue(const Mat& M);

using BlockRhs = std::function<BlockVec(double t, const BlockVec& y)>;

// Classical fixed-step RK4 applied to the time-reversed system of
// dy/dt = rhs(t, y) with y(T) = terminal; deterministic, values stored at
// every grid point, terminal exact at k = K. Any state entry with
// magnitude above blow_up_threshold (or non-finite) aborts with the time.
TimeGridFn integrate_backward(const BlockRhs& rhs, const BlockVec& terminal, double T, int K,
                              double blow_up_threshold = 1e12);

// Residual diagnostics for a stored backward solution y of
// y'(t) = rhs(t, y(t)).
//
// Midpoint form (2nd order): r_k = (y_{k+1}-y_k)/dt - rhs(t_mid, (y_k+y_{k+1})/2).
// Staggered Hermite-Simpson form (4th order): the Simpson defect with the
// midpoint state reconstructed from cubic Hermite data,
//   y_mid = (y_k+y_{k+1})/2 + dt*(f_k - f_{k+1})/8,
//   r_k = (y_{k+1}-y_k)/dt - (f_k + 4 f(y_mid) + f_{k+1})/6.
// Returns the max over k of the max block inf-norm.
double residual_midpoint(const TimeGridFn& sol, const BlockRhs& rhs);
double residual_staggered(const TimeGridFn& sol, const BlockRhs& rhs);

// Relative agreement of two solutions at one grid point, norm-wise:
// ||a-b||_inf / max(||ref||_inf, floor).
double rel_diff(const BlockVec& a, const BlockVec& ref, double floor_norm = 1e-12);

// Deterministic pairwise tree reduction; summation order is fixed by the
// index structure, not by scheduling.
double pairwise_sum(const std::vector<double>& xs);

// Trapezoidal quadrature of samples on a uniform grid spanning [0, T].
double trapezoid(const std::vector<double>& samples, double T);

}  // namespace mflq
