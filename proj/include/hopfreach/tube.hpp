#pragma once

// Conservative box enclosures of backward and forward feasible tubes by
// interval propagation with a verified a-priori step enclosure. Boxes are
// loose compared to Taylor-model tools but guaranteed to contain every
// feasible trajectory slice; any tighter method can replace this behind the
// same BoxTube contract.

#include <sstream>

#include "hopfreach/convex.hpp"
#include "hopfreach/core.hpp"
#include "hopfreach/dynamics.hpp"

namespace hopfreach {

struct BoxTube {
  enum class Mode { Backward, Forward };

  std::vector<double> time_grid;  // forward times, target at the last node (Backward)
  std::vector<Vec> lo;
  std::vector<Vec> hi;
  Mode mode = Mode::Backward;
  bool control_active = true;
  bool disturbance_active = true;

  int nodes() const { return static_cast<int>(time_grid.size()); }
  bool contains(int k, const Vec& x, double tol = 1e-9) const {
    return (x.array() >= lo[k].array() - tol).all() && (x.array() <= hi[k].array() + tol).all();
  }
};

namespace detail {

using IBox = std::vector<Interval>;

inline IBox to_ibox(const Vec& lo, const Vec& hi) {
  IBox b(lo.size());
  for (int i = 0; i < lo.size(); ++i) b[i] = {lo[i], hi[i]};
  return b;
}

inline IBox set_ibox(const ConvexInputSet& set, bool active) {
  IBox b(set.dim());
  const Vec ext = set.axis_extents();
  for (int i = 0; i < set.dim(); ++i) {
    b[i] = active ? Interval{set.center[i] - ext[i], set.center[i] + ext[i]}
                  : Interval::point(set.center[i]);
  }
  return b;
}

// Interval extension of the full field; exact for built-ins, sampled hull
// with inflation otherwise.
inline void field_ibox(const NonlinearSystem& sys, const IBox& x, const IBox& u, const IBox& d,
                       double t, IBox& out) {
  if (sys.field_range) {
    sys.field_range(x, u, d, t, out);
    return;
  }
  const int n = sys.state_dim;
  Vec mid(n), rad(n);
  for (int i = 0; i < n; ++i) {
    mid[i] = x[i].mid();
    rad[i] = 0.5 * x[i].width();
  }
  Vec umid(sys.control_dim), dmid(sys.disturbance_dim);
  for (int i = 0; i < sys.control_dim; ++i) umid[i] = u[i].mid();
  for (int i = 0; i < sys.disturbance_dim; ++i) dmid[i] = d[i].mid();
  Vec flo = sys.field(mid, umid, dmid, t), fhi = flo;
  // hull over vertex samples of the state box and input extremes, inflated
  const int corners = std::min(1 << n, 64);
  for (int mask = 0; mask < corners; ++mask) {
    Vec xv = mid;
    for (int i = 0; i < n; ++i) xv[i] += ((mask >> i) & 1) ? rad[i] : -rad[i];
    for (int su = -1; su <= 1; su += 2) {
      Vec uv(sys.control_dim), dv(sys.disturbance_dim);
      for (int i = 0; i < sys.control_dim; ++i) uv[i] = su > 0 ? u[i].hi : u[i].lo;
      for (int i = 0; i < sys.disturbance_dim; ++i) dv[i] = su > 0 ? d[i].hi : d[i].lo;
      const Vec f = sys.field(xv, uv, dv, t);
      flo = flo.cwiseMin(f);
      fhi = fhi.cwiseMax(f);
    }
  }
  const Vec pad = 0.25 * (fhi - flo).cwiseAbs() + Vec::Constant(n, 1e-12);
  out.resize(n);
  for (int i = 0; i < n; ++i) out[i] = {flo[i] - pad[i], fhi[i] + pad[i]};
}

inline double lipschitz_on(const NonlinearSystem& sys, const Vec& lo, const Vec& hi) {
  if (sys.lipschitz_hint) return sys.lipschitz_hint(lo, hi);
  // sampled Jacobian norm, inflated
  const Vec mid = 0.5 * (lo + hi);
  const Vec u0 = sys.control_set.center;
  const Vec d0 = sys.disturbance_set.center;
  double L = sys.jacobian_x(mid, u0, d0, 0.0).cwiseAbs().rowwise().sum().maxCoeff();
  const int corners = std::min(1 << sys.state_dim, 32);
  for (int mask = 0; mask < corners; ++mask) {
    Vec xv(lo.size());
    for (int i = 0; i < lo.size(); ++i) xv[i] = ((mask >> i) & 1) ? hi[i] : lo[i];
    L = std::max(L, sys.jacobian_x(xv, u0, d0, 0.0).cwiseAbs().rowwise().sum().maxCoeff());
  }
  return 1.25 * L;
}

// One conservative interval step of dy/dt = sign * f(y, u, d) over [t, t+h]:
// finds an a-priori enclosure of the whole step, then advances by the
// mean-value form new = box + h * f(enclosure).
inline void interval_step(const NonlinearSystem& sys, double sign, const Vec& lo, const Vec& hi,
                          const IBox& ubox, const IBox& dbox, double t, double h, Vec& out_lo,
                          Vec& out_hi, int step_index) {
  const int n = sys.state_dim;
  IBox box = to_ibox(lo, hi);
  IBox f0;
  field_ibox(sys, box, ubox, dbox, t, f0);
  const double L = lipschitz_on(sys, lo, hi);

  IBox enc(n);
  for (int i = 0; i < n; ++i) {
    const Interval fi = sign > 0 ? f0[i] : -f0[i];
    const Interval euler = box[i].hull(box[i] + fi * h);
    const double margin = h * L * (0.5 * euler.width() + h * fi.abs_max()) + 1e-12;
    enc[i] = euler.inflate(margin);
  }

  bool verified = false;
  IBox fenc;
  for (int round = 0; round < 20 && !verified; ++round) {
    field_ibox(sys, enc, ubox, dbox, t, fenc);
    verified = true;
    for (int i = 0; i < n; ++i) {
      const Interval fi = sign > 0 ? fenc[i] : -fenc[i];
      const Interval reach = box[i] + Interval{0.0, h} * fi;
      if (!reach.subset_of(enc[i])) {
        verified = false;
        enc[i] = enc[i].hull(reach).inflate(0.1 * enc[i].width() + 1e-12);
      }
    }
  }
  if (!verified) {
    std::ostringstream msg;
    msg << "tube: step enclosure did not stabilize at node " << step_index << " (t=" << t << ")";
    throw NumericsError(msg.str());
  }

  out_lo.resize(n);
  out_hi.resize(n);
  for (int i = 0; i < n; ++i) {
    const Interval fi = sign > 0 ? fenc[i] : -fenc[i];
    const Interval next = box[i] + fi * h;
    out_lo[i] = next.lo;
    out_hi[i] = next.hi;
  }
}

}  // namespace detail

// Backward tube: per-node boxes containing every state that can still reach
// target_box at the final node under admissible inputs (time-reversed
// interval propagation, first-order conservative).
inline BoxTube backward_tube(const NonlinearSystem& sys, const Vec& target_lo,
                             const Vec& target_hi, const std::vector<double>& time_grid,
                             bool control_active = true) {
  if (time_grid.size() < 1) throw ConfigError("backward_tube: empty grid");
  BoxTube tube;
  tube.time_grid = time_grid;
  tube.mode = BoxTube::Mode::Backward;
  tube.control_active = control_active;
  const int K = static_cast<int>(time_grid.size());
  tube.lo.assign(K, target_lo);
  tube.hi.assign(K, target_hi);
  const auto ubox = detail::set_ibox(sys.control_set, control_active);
  const auto dbox = detail::set_ibox(sys.disturbance_set, true);
  for (int k = K - 2; k >= 0; --k) {
    const double h = time_grid[k + 1] - time_grid[k];
    detail::interval_step(sys, -1.0, tube.lo[k + 1], tube.hi[k + 1], ubox, dbox, time_grid[k + 1],
                          h, tube.lo[k], tube.hi[k], k);
  }
  return tube;
}

inline BoxTube backward_tube(const NonlinearSystem& sys, const TargetSpec& target,
                             const std::vector<double>& time_grid, bool control_active = true) {
  const Vec ext = target.axis_extents();
  return backward_tube(sys, Vec(target.center - ext), Vec(target.center + ext), time_grid,
                       control_active);
}

// Control frozen at the set center (recentred so the zero input is
// admissible); boxes are nodewise subsets of the two-input tube.
inline BoxTube disturbance_only_tube(const NonlinearSystem& sys, const Vec& target_lo,
                                     const Vec& target_hi, const std::vector<double>& time_grid) {
  return backward_tube(sys, target_lo, target_hi, time_grid, false);
}

inline BoxTube disturbance_only_tube(const NonlinearSystem& sys, const TargetSpec& target,
                                     const std::vector<double>& time_grid) {
  return backward_tube(sys, target, time_grid, false);
}

// Forward tube from a start box under admissible inputs.
inline BoxTube forward_tube(const NonlinearSystem& sys, const Vec& start_lo, const Vec& start_hi,
                            const std::vector<double>& time_grid, bool control_active = true) {
  if (time_grid.size() < 1) throw ConfigError("forward_tube: empty grid");
  BoxTube tube;
  tube.time_grid = time_grid;
  tube.mode = BoxTube::Mode::Forward;
  tube.control_active = control_active;
  const int K = static_cast<int>(time_grid.size());
  tube.lo.assign(K, start_lo);
  tube.hi.assign(K, start_hi);
  const auto ubox = detail::set_ibox(sys.control_set, control_active);
  const auto dbox = detail::set_ibox(sys.disturbance_set, true);
  for (int k = 0; k + 1 < K; ++k) {
    const double h = time_grid[k + 1] - time_grid[k];
    detail::interval_step(sys, 1.0, tube.lo[k], tube.hi[k], ubox, dbox, time_grid[k], h,
                          tube.lo[k + 1], tube.hi[k + 1], k);
  }
  return tube;
}

inline void write_tube_csv(const BoxTube& tube, std::ostream& os) {
  const int n = tube.lo.empty() ? 0 : static_cast<int>(tube.lo.front().size());
  os << "time";
  for (int i = 0; i < n; ++i) os << ",lo" << i;
  for (int i = 0; i < n; ++i) os << ",hi" << i;
  os << "\n";
  os.precision(12);
  for (int k = 0; k < tube.nodes(); ++k) {
    os << tube.time_grid[k];
    for (int i = 0; i < n; ++i) os << "," << tube.lo[k][i];
    for (int i = 0; i < n; ++i) os << "," << tube.hi[k][i];
    os << "\n";
  }
}

}  // namespace hopfreach
