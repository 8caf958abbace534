#pragma once

// Linear time-varying models sampled on the experiment grid, the fundamental
// matrix, and the time-sampled ingredients of the state-independent (z-space)
// Hamiltonian. All time-reversal bookkeeping is confined to
// hamiltonian_table; everything it stores is indexed by forward time.

#include "hopfreach/convex.hpp"
#include "hopfreach/core.hpp"
#include "hopfreach/dynamics.hpp"

namespace hopfreach {

struct LinearTVModel {
  std::vector<double> time_grid;
  std::vector<Mat> A;   // n x n per node
  std::vector<Mat> B1;  // n x nu
  std::vector<Mat> B2;  // n x nd
  std::vector<Vec> c;   // affine offset per node
  Trajectory ref;       // linearization reference (empty for hand-built models)
  bool has_ref = false;

  int nodes() const { return static_cast<int>(time_grid.size()); }
  int state_dim() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }
};

struct FundamentalSolution {
  // Phi solves dPhi/dt = A(t) Phi with Phi = I at the first grid node.
  std::vector<Mat> Phi;
  std::vector<Mat> PhiInv;
  double max_condition = 1.0;
};

struct HamiltonianTable {
  // Per forward node k (terminal-based transition matrix P(t) = Phi(t) Phi(T)^-1):
  //   R1 = -B1^T P^-T, R2 = -B2^T P^-T, E = -P^-T, drift = P^-1 c.
  std::vector<double> time_grid;
  std::vector<Mat> R1;
  std::vector<Mat> R2;
  std::vector<Mat> E;
  std::vector<Vec> drift;
  std::vector<Vec> delta;        // error box half-widths resampled onto the grid
  std::vector<Mat> zmap_from;    // z = zmap_from[k] * x for a query at node k
  int nu = 0, nd = 0, n = 0;
  bool has_error = false;

  int nodes() const { return static_cast<int>(time_grid.size()); }

  // Trapezoid weights for the integral over [t_k0, T]; sums to the horizon.
  std::vector<double> quadrature_weights(int k0 = 0) const {
    const int K = nodes();
    std::vector<double> w(K, 0.0);
    for (int k = k0; k + 1 < K; ++k) {
      const double h = time_grid[k + 1] - time_grid[k];
      w[k] += 0.5 * h;
      w[k + 1] += 0.5 * h;
    }
    return w;
  }
};

// Samples A, B1, B2 and the affine offset along a reference trajectory that
// satisfies the system dynamics.
inline LinearTVModel linearize_along(const NonlinearSystem& sys, const Trajectory& ref,
                                     double residual_tol = 1e-5) {
  if (ref.nodes() < 2) throw ConfigError("linearize_along: reference needs >= 2 nodes");
  // The reference must be a trajectory of the dynamics; re-integrate each
  // step and compare.
  for (int k = 0; k + 1 < ref.nodes(); ++k) {
    const double h = ref.times[k + 1] - ref.times[k];
    const Vec pred =
        detail::rk4_step(sys, ref.states[k], ref.controls[k], ref.disturbances[k], ref.times[k], h);
    const double err = (pred - ref.states[k + 1]).norm();
    if (err > residual_tol * (1.0 + ref.states[k + 1].norm()))
      throw NumericsError("linearize_along: reference does not satisfy the dynamics");
  }

  LinearTVModel model;
  model.time_grid = ref.times;
  model.ref = ref;
  model.has_ref = true;
  const int K = ref.nodes();
  model.A.reserve(K);
  model.B1.reserve(K);
  model.B2.reserve(K);
  model.c.reserve(K);
  for (int k = 0; k < K; ++k) {
    const int ku = std::min<int>(k, K - 2);
    const Vec& xk = ref.states[k];
    const Vec& uk = ref.controls[ku];
    const Vec& dk = ref.disturbances[ku];
    const double t = ref.times[k];
    Mat A = sys.jacobian_x(xk, uk, dk, t);
    Mat B1 = sys.control_gain(xk, t);
    Mat B2 = sys.disturbance_gain(xk, t);
    Vec c = sys.field(xk, uk, dk, t) - A * xk - B1 * uk - B2 * dk;
    model.A.push_back(std::move(A));
    model.B1.push_back(std::move(B1));
    model.B2.push_back(std::move(B2));
    model.c.push_back(std::move(c));
  }
  return model;
}

// Hand-built time-invariant model (tests, MPC prediction).
inline LinearTVModel constant_model(std::vector<double> grid, Mat A, Mat B1, Mat B2, Vec c) {
  LinearTVModel m;
  m.time_grid = std::move(grid);
  const int K = static_cast<int>(m.time_grid.size());
  m.A.assign(K, A);
  m.B1.assign(K, B1);
  m.B2.assign(K, B2);
  m.c.assign(K, c);
  return m;
}

// Integrates dPhi/dt = A(t) Phi by RK4 on the model grid, Phi(t0) = I;
// inverses by partial-pivot LU.
inline FundamentalSolution fundamental(const LinearTVModel& model,
                                       double condition_limit = 1e12) {
  const int K = model.nodes();
  if (K < 1) throw ConfigError("fundamental: empty model");
  const int n = model.state_dim();
  FundamentalSolution fund;
  fund.Phi.reserve(K);
  fund.PhiInv.reserve(K);
  Mat Phi = Mat::Identity(n, n);
  fund.Phi.push_back(Phi);
  for (int k = 0; k + 1 < K; ++k) {
    const double h = model.time_grid[k + 1] - model.time_grid[k];
    const Mat& A0 = model.A[k];
    const Mat& A1 = model.A[k + 1];
    const Mat Ah = 0.5 * (A0 + A1);
    const Mat k1 = A0 * Phi;
    const Mat k2 = Ah * (Phi + 0.5 * h * k1);
    const Mat k3 = Ah * (Phi + 0.5 * h * k2);
    const Mat k4 = A1 * (Phi + h * k3);
    Phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    fund.Phi.push_back(Phi);
  }
  for (int k = 0; k < K; ++k) {
    Eigen::PartialPivLU<Mat> lu(fund.Phi[k]);
    Mat inv = lu.inverse();
    const double cond = fund.Phi[k].cwiseAbs().rowwise().sum().maxCoeff() *
                        inv.cwiseAbs().rowwise().sum().maxCoeff();
    fund.max_condition = std::max(fund.max_condition, cond);
    if (!inv.allFinite() || cond > condition_limit)
      throw NumericsError("fundamental: ill-conditioned transition matrix");
    fund.PhiInv.push_back(std::move(inv));
  }
  return fund;
}

// Assembles the per-node Hamiltonian ingredients. delta_at, when set, maps a
// forward time to the error box half-widths (ErrorBound::at provides it).
inline HamiltonianTable hamiltonian_table(const LinearTVModel& model,
                                          const FundamentalSolution& fund,
                                          const ConvexInputSet& U, const ConvexInputSet& D,
                                          const std::function<Vec(double)>& delta_at = {}) {
  const int K = model.nodes();
  const int n = model.state_dim();
  if (static_cast<int>(fund.Phi.size()) != K)
    throw ConfigError("hamiltonian_table: model/fundamental grid mismatch");
  if (U.dim() != static_cast<int>(model.B1.front().cols()) ||
      D.dim() != static_cast<int>(model.B2.front().cols()))
    throw ConfigError("hamiltonian_table: input set dims do not match gains");

  HamiltonianTable tab;
  tab.time_grid = model.time_grid;
  tab.n = n;
  tab.nu = U.dim();
  tab.nd = D.dim();
  // Terminal-based transition P(t) = Phi(t) Phi(T)^-1, so that z(T) = x(T)
  // and the target conjugate applies unchanged.
  const Mat PhiT = fund.Phi.back();
  const Mat PhiT_T = PhiT.transpose();
  tab.R1.reserve(K);
  tab.R2.reserve(K);
  tab.E.reserve(K);
  tab.drift.reserve(K);
  tab.zmap_from.reserve(K);
  tab.delta.assign(K, Vec::Zero(n));
  for (int k = 0; k < K; ++k) {
    const Mat PinvT = fund.PhiInv[k].transpose() * PhiT_T;  // P(t_k)^-T
    tab.R1.push_back(-model.B1[k].transpose() * PinvT);
    tab.R2.push_back(-model.B2[k].transpose() * PinvT);
    tab.E.push_back(-PinvT);
    tab.zmap_from.push_back(PhiT * fund.PhiInv[k]);
    tab.drift.push_back(tab.zmap_from.back() * model.c[k]);
    if (delta_at) {
      Vec dv = delta_at(model.time_grid[k]);
      if (dv.size() != n) throw ConfigError("hamiltonian_table: delta dimension mismatch");
      if ((dv.array() < 0.0).any()) throw ConfigError("hamiltonian_table: negative delta");
      if (dv.cwiseAbs().maxCoeff() > 0.0) tab.has_error = true;
      tab.delta[k] = std::move(dv);
    }
  }
  for (const auto& m : {tab.R1.back(), tab.R2.back(), tab.E.back()})
    if (!m.allFinite()) throw NumericsError("hamiltonian_table: non-finite entries");
  return tab;
}

}  // namespace hopfreach
