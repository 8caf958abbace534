#pragma once

// Antagonistic linearization-error magnitudes: per-axis half-widths of the
// error box, from exact Taylor-remainder ranges (built-in systems) or a
// Hessian norm-pairing bound on a dense grid (fallback). The supremum ranges
// over the tube boxes and the full input sets; for state-dependent input
// gains the bilinear (u - u_ref) term is part of the remainder and is
// included here.

#include <iostream>

#include "hopfreach/lintv.hpp"
#include "hopfreach/tube.hpp"

namespace hopfreach {

struct ErrorProvenance {
  enum class Variant { Constant, TimeVarying, DisturbanceOnly, Forward, Partition, Model };
  Variant variant = Variant::Constant;
  int index = -1;  // partition piece / ensemble member
  BoxTube::Mode tube_mode = BoxTube::Mode::Backward;
  bool tube_control_active = true;
  std::string norm = "per-axis interval remainder";
};

struct ErrorBound {
  std::vector<double> time_grid;
  std::vector<Vec> delta;  // one nonnegative vector per node
  ErrorProvenance provenance;
  // Forward variant: queries are only valid inside the localization box.
  bool has_scope_box = false;
  Vec scope_lo, scope_hi;

  int nodes() const { return static_cast<int>(time_grid.size()); }

  // Sparse-evaluation rule: the bound at the latest evaluated node <= t
  // (earlier tubes are larger, so holding the previous value is safe).
  const Vec& at(double t) const {
    if (time_grid.empty()) throw ConfigError("ErrorBound::at: empty bound");
    std::size_t k = 0;
    while (k + 1 < time_grid.size() && time_grid[k + 1] <= t + 1e-12) ++k;
    return delta[k];
  }

  std::function<Vec(double)> sampler() const {
    return [self = *this](double t) { return self.at(t); };
  }

  static ErrorBound zero(std::vector<double> grid, int n) {
    ErrorBound e;
    e.time_grid = std::move(grid);
    e.delta.assign(e.time_grid.size(), Vec::Zero(n));
    return e;
  }
};

namespace detail {

inline void require_shared_grid(const std::vector<double>& a, const std::vector<double>& b,
                                const char* what) {
  if (a.size() != b.size()) throw ConfigError(std::string(what) + ": grids differ in size");
  for (std::size_t k = 0; k < a.size(); ++k)
    if (std::abs(a[k] - b[k]) > 1e-9) throw ConfigError(std::string(what) + ": grids differ");
}

inline Vec input_extents_about(const ConvexInputSet& set, const Vec& ref) {
  const Vec ext = set.axis_extents();
  return ((set.center - ref).cwiseAbs() + ext).eval();
}

// Fallback Taylor bound per component: 0.5 * max_box sum_jk |G_i(x)_jk| r_j r_k
// on a dense sample grid (17 points per axis up to 3 state dims, corners
// beyond), inflated by the declared 10% safety factor, plus the bilinear
// input-gain terms estimated by finite differences of the gains.
inline Vec generic_residual_bound(const NonlinearSystem& sys, const Vec& ref_x, const Vec& ref_u,
                                  const Vec& ref_d, const Vec& lo, const Vec& hi,
                                  const ConvexInputSet& U, const ConvexInputSet& D, double t) {
  const int n = sys.state_dim;
  Vec r(n);
  for (int i = 0; i < n; ++i) r[i] = std::max(std::abs(lo[i] - ref_x[i]), std::abs(hi[i] - ref_x[i]));

  std::vector<Vec> samples;
  if (n <= 3) {
    const int m = 17;
    std::vector<double> axis(m);
    Vec x(n);
    std::function<void(int)> rec = [&](int dim) {
      if (dim == n) {
        samples.push_back(x);
        return;
      }
      for (int j = 0; j < m; ++j) {
        x[dim] = lo[dim] + (hi[dim] - lo[dim]) * j / (m - 1);
        rec(dim + 1);
      }
    };
    rec(0);
  } else {
    samples.push_back(0.5 * (lo + hi));
    const int corners = std::min(1 << n, 256);
    for (int mask = 0; mask < corners; ++mask) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = ((mask >> i) & 1) ? hi[i] : lo[i];
      samples.push_back(std::move(x));
    }
  }

  Vec quad = Vec::Zero(n);
  for (const Vec& x : samples) {
    const std::vector<Mat> H = sys.hessians_x(x, t);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) s += std::abs(H[i](j, k)) * r[j] * r[k];
      quad[i] = std::max(quad[i], 0.5 * s);
    }
  }
  for (int i = 0; i < n; ++i)
    if (quad[i] > 0.0) quad[i] *= 1.1;

  // bilinear terms (exact when the gains are affine in the state)
  Vec cross = Vec::Zero(n);
  const double fd = 1e-5;
  const Vec uext = input_extents_about(U, ref_u);
  const Vec dext = input_extents_about(D, ref_d);
  for (int axis = 0; axis < n; ++axis) {
    Vec xp = ref_x, xm = ref_x;
    xp[axis] += fd;
    xm[axis] -= fd;
    if (sys.control_dim > 0) {
      const Mat dh1 = (sys.control_gain(xp, t) - sys.control_gain(xm, t)) / (2.0 * fd);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < sys.control_dim; ++j) cross[i] += uext[j] * std::abs(dh1(i, j)) * r[axis];
    }
    if (sys.disturbance_dim > 0) {
      const Mat dh2 = (sys.disturbance_gain(xp, t) - sys.disturbance_gain(xm, t)) / (2.0 * fd);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < sys.disturbance_dim; ++j)
          cross[i] += dext[j] * std::abs(dh2(i, j)) * r[axis];
    }
  }
  return quad + cross;
}

inline Vec node_delta(const NonlinearSystem& sys, const LinearTVModel& model, const BoxTube& tube,
                      int k, bool* warned) {
  if (!model.has_ref)
    throw ConfigError("taylor_delta: model carries no linearization reference");
  const int ku = std::min<int>(k, model.ref.nodes() - 2);
  const Vec& ref_x = model.ref.states[k];
  const Vec& ref_u = model.ref.controls[ku];
  const Vec& ref_d = model.ref.disturbances[ku];
  Vec lo = tube.lo[k], hi = tube.hi[k];
  bool outside = false;
  for (int i = 0; i < lo.size(); ++i) {
    if (ref_x[i] < lo[i]) { lo[i] = ref_x[i]; outside = true; }
    if (ref_x[i] > hi[i]) { hi[i] = ref_x[i]; outside = true; }
  }
  if (outside && warned && !*warned) {
    std::cerr << "taylor_delta: reference left the tube box; box inflated to keep the "
                 "remainder bound valid\n";
    *warned = true;
  }
  const double t = tube.time_grid[k];
  if (sys.residual_bound)
    return sys.residual_bound(ref_x, ref_u, ref_d, lo, hi, sys.control_set, sys.disturbance_set, t);
  return generic_residual_bound(sys, ref_x, ref_u, ref_d, lo, hi, sys.control_set,
                                sys.disturbance_set, t);
}

inline ErrorProvenance::Variant tube_variant(const BoxTube& tube, bool time_varying) {
  if (tube.mode == BoxTube::Mode::Forward) return ErrorProvenance::Variant::Forward;
  if (!tube.control_active) return ErrorProvenance::Variant::DisturbanceOnly;
  return time_varying ? ErrorProvenance::Variant::TimeVarying : ErrorProvenance::Variant::Constant;
}

}  // namespace detail

// Constant bound: componentwise max of the nodewise remainders over the
// whole tube, replicated at every node.
inline ErrorBound taylor_delta(const NonlinearSystem& sys, const LinearTVModel& model,
                               const BoxTube& tube) {
  detail::require_shared_grid(model.time_grid, tube.time_grid, "taylor_delta");
  ErrorBound err;
  err.time_grid = tube.time_grid;
  bool warned = false;
  Vec dmax = Vec::Zero(sys.state_dim);
  for (int k = 0; k < tube.nodes(); ++k)
    dmax = dmax.cwiseMax(detail::node_delta(sys, model, tube, k, &warned));
  err.delta.assign(tube.nodes(), dmax);
  err.provenance.variant = detail::tube_variant(tube, false);
  err.provenance.tube_mode = tube.mode;
  err.provenance.tube_control_active = tube.control_active;
  return err;
}

// Nodewise bound over each tube slice; nodewise <= the constant bound.
inline ErrorBound time_varying_delta(const NonlinearSystem& sys, const LinearTVModel& model,
                                     const BoxTube& tube) {
  detail::require_shared_grid(model.time_grid, tube.time_grid, "time_varying_delta");
  ErrorBound err;
  err.time_grid = tube.time_grid;
  bool warned = false;
  err.delta.reserve(tube.nodes());
  for (int k = 0; k < tube.nodes(); ++k)
    err.delta.push_back(detail::node_delta(sys, model, tube, k, &warned));
  err.provenance.variant = detail::tube_variant(tube, true);
  err.provenance.tube_mode = tube.mode;
  err.provenance.tube_control_active = tube.control_active;
  return err;
}

// Forward-localized bound: forward tube from the start box, nodewise
// remainders, and the scope box recorded for enforcement at solve time.
inline ErrorBound forward_delta(const NonlinearSystem& sys, const LinearTVModel& model,
                                const Vec& x0_lo, const Vec& x0_hi, bool control_active = true) {
  const BoxTube tube = forward_tube(sys, x0_lo, x0_hi, model.time_grid, control_active);
  ErrorBound err = time_varying_delta(sys, model, tube);
  err.provenance.variant = ErrorProvenance::Variant::Forward;
  err.provenance.tube_control_active = control_active;
  err.has_scope_box = true;
  err.scope_lo = x0_lo;
  err.scope_hi = x0_hi;
  return err;
}

inline HamiltonianTable hamiltonian_table(const LinearTVModel& model,
                                          const FundamentalSolution& fund,
                                          const ConvexInputSet& U, const ConvexInputSet& D,
                                          const ErrorBound& err) {
  return hamiltonian_table(model, fund, U, D, err.sampler());
}

inline void write_delta_csv(const ErrorBound& err, std::ostream& os) {
  const int n = err.delta.empty() ? 0 : static_cast<int>(err.delta.front().size());
  os << "time";
  for (int i = 0; i < n; ++i) os << ",delta" << i;
  os << "\n";
  os.precision(12);
  for (int k = 0; k < err.nodes(); ++k) {
    os << err.time_grid[k];
    for (int i = 0; i < n; ++i) os << "," << err.delta[k][i];
    os << "\n";
  }
}

}  // namespace hopfreach
