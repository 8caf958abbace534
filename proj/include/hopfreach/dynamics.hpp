#pragma once

// Control-affine systems f = f_x + h1*u + h2*d, trajectory integration and
// the built-in Van der Pol and relative-frame multi-agent Dubins systems.
// Built-ins carry exact interval extensions of the field and of the Taylor
// linearization residual; user systems fall back to finite differences.

#include <sstream>
#include <utility>

#include "hopfreach/convex.hpp"
#include "hopfreach/core.hpp"

namespace hopfreach {

struct NonlinearSystem {
  int state_dim = 0;
  int control_dim = 0;
  int disturbance_dim = 0;
  std::string name;

  std::function<Vec(const Vec&, double)> drift;             // f_x(x, t)
  std::function<Mat(const Vec&, double)> control_gain;      // h1(x, t), n x nu
  std::function<Mat(const Vec&, double)> disturbance_gain;  // h2(x, t), n x nd
  std::function<Mat(const Vec&, const Vec&, const Vec&, double)> jacobian_x;
  std::function<std::vector<Mat>(const Vec&, double)> hessians_x;  // per component, w.r.t. x

  // Optional: L such that ||f(x)-f(y)|| <= L||x-y|| on the given box.
  std::function<double(const Vec&, const Vec&)> lipschitz_hint;

  // Optional exact interval extension of the full field over a state box and
  // input boxes: writes per-component [lo, hi].
  std::function<void(const std::vector<Interval>& x, const std::vector<Interval>& u,
                     const std::vector<Interval>& d, double t, std::vector<Interval>& out)>
      field_range;

  // Optional exact bound on |f - l| per component over a state box and the
  // input sets, for l the first-order Taylor model at (ref_x, ref_u, ref_d).
  std::function<Vec(const Vec& ref_x, const Vec& ref_u, const Vec& ref_d,
                    const Vec& box_lo, const Vec& box_hi, const ConvexInputSet& U,
                    const ConvexInputSet& D, double t)>
      residual_bound;

  // Default admissible input sets attached by the factories.
  ConvexInputSet control_set;
  ConvexInputSet disturbance_set;

  Vec field(const Vec& x, const Vec& u, const Vec& d, double t) const {
    Vec f = drift(x, t);
    if (control_dim > 0) f += control_gain(x, t) * u;
    if (disturbance_dim > 0) f += disturbance_gain(x, t) * d;
    return f;
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;      // one per interval
  std::vector<Vec> disturbances;  // one per interval

  int nodes() const { return static_cast<int>(times.size()); }
  const Vec& final_state() const { return states.back(); }
};

using Signal = std::function<Vec(double)>;

inline Signal constant_signal(Vec v) {
  return [v = std::move(v)](double) { return v; };
}
inline Signal zero_signal(int dim) { return constant_signal(Vec::Zero(dim)); }

namespace detail {

inline Vec rk4_step(const NonlinearSystem& sys, const Vec& x, const Vec& u, const Vec& d,
                    double t, double h) {
  const Vec k1 = sys.field(x, u, d, t);
  const Vec k2 = sys.field(x + 0.5 * h * k1, u, d, t + 0.5 * h);
  const Vec k3 = sys.field(x + 0.5 * h * k2, u, d, t + 0.5 * h);
  const Vec k4 = sys.field(x + h * k3, u, d, t + h);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

// Fixed-step RK4 with zero-order-hold inputs per grid interval.
inline Trajectory integrate(const NonlinearSystem& sys, const Vec& x0, const Signal& u_signal,
                            const Signal& d_signal, const std::vector<double>& time_grid) {
  if (time_grid.size() < 2) throw ConfigError("integrate: time grid needs >= 2 nodes");
  for (std::size_t k = 1; k < time_grid.size(); ++k)
    if (!(time_grid[k] > time_grid[k - 1])) throw ConfigError("integrate: grid not increasing");

  Trajectory traj;
  traj.times = time_grid;
  traj.states.reserve(time_grid.size());
  traj.states.push_back(x0);
  for (std::size_t k = 0; k + 1 < time_grid.size(); ++k) {
    const double t = time_grid[k];
    const double h = time_grid[k + 1] - t;
    const Vec u = u_signal(t);
    const Vec d = d_signal(t);
    Vec next = detail::rk4_step(sys, traj.states.back(), u, d, t, h);
    if (!next.allFinite()) {
      std::ostringstream msg;
      msg << "integrate: non-finite state at step " << k << " (t=" << t << ")";
      throw NumericsError(msg.str());
    }
    traj.controls.push_back(u);
    traj.disturbances.push_back(d);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

namespace detail {

inline Mat fd_jacobian(const NonlinearSystem& sys, const Vec& x, const Vec& u, const Vec& d,
                       double t, double step = 1e-6) {
  Mat J(sys.state_dim, sys.state_dim);
  for (int j = 0; j < sys.state_dim; ++j) {
    Vec xp = x, xm = x;
    xp[j] += step;
    xm[j] -= step;
    J.col(j) = (sys.field(xp, u, d, t) - sys.field(xm, u, d, t)) / (2.0 * step);
  }
  return J;
}

// Central finite differences of the Jacobian, step 1e-4; fallback for user
// systems without analytic Hessians.
inline std::vector<Mat> fd_hessians(const NonlinearSystem& sys, const Vec& x, double t,
                                    double step = 1e-4) {
  const Vec u0 = Vec::Zero(sys.control_dim);
  const Vec d0 = Vec::Zero(sys.disturbance_dim);
  std::vector<Mat> H(sys.state_dim, Mat::Zero(sys.state_dim, sys.state_dim));
  for (int j = 0; j < sys.state_dim; ++j) {
    Vec xp = x, xm = x;
    xp[j] += step;
    xm[j] -= step;
    const Mat Jp = sys.jacobian_x(xp, u0, d0, t);
    const Mat Jm = sys.jacobian_x(xm, u0, d0, t);
    const Mat D = (Jp - Jm) / (2.0 * step);
    for (int i = 0; i < sys.state_dim; ++i) H[i].col(j) = D.row(i).transpose();
  }
  for (auto& Hi : H) Hi = 0.5 * (Hi + Hi.transpose());
  return H;
}

// Range of cos(t0+h) - cos(t0) + sin(t0)h over h in [h.lo, h.hi].
inline Interval cos_residual_range(double t0, const Interval& h) {
  auto g = [&](double hh) { return std::cos(t0 + hh) - std::cos(t0) + std::sin(t0) * hh; };
  double lo = std::min(g(h.lo), g(h.hi));
  double hi = std::max(g(h.lo), g(h.hi));
  // stationary where sin(t0+h) = sin(t0): h = 2k*pi or h = pi - 2*t0 + 2k*pi
  for (int branch = 0; branch < 2; ++branch) {
    const double base = branch == 0 ? 0.0 : M_PI - 2.0 * t0;
    const double k0 = std::ceil((h.lo - base) / (2.0 * M_PI));
    for (double k = k0; base + 2.0 * M_PI * k <= h.hi; k += 1.0) {
      const double v = g(base + 2.0 * M_PI * k);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return {lo, hi};
}

// Range of sin(t0+h) - sin(t0) - cos(t0)h over h.
inline Interval sin_residual_range(double t0, const Interval& h) {
  auto g = [&](double hh) { return std::sin(t0 + hh) - std::sin(t0) - std::cos(t0) * hh; };
  double lo = std::min(g(h.lo), g(h.hi));
  double hi = std::max(g(h.lo), g(h.hi));
  // stationary where cos(t0+h) = cos(t0): h = 2k*pi or h = -2*t0 + 2k*pi
  for (int branch = 0; branch < 2; ++branch) {
    const double base = branch == 0 ? 0.0 : -2.0 * t0;
    const double k0 = std::ceil((h.lo - base) / (2.0 * M_PI));
    for (double k = k0; base + 2.0 * M_PI * k <= h.hi; k += 1.0) {
      const double v = g(base + 2.0 * M_PI * k);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return {lo, hi};
}

inline Interval deviation(const Interval& box, double ref) { return {box.lo - ref, box.hi - ref}; }

}  // namespace detail

inline void attach_fd_derivatives(NonlinearSystem& sys) {
  if (!sys.jacobian_x) {
    sys.jacobian_x = [&sys](const Vec& x, const Vec& u, const Vec& d, double t) {
      return detail::fd_jacobian(sys, x, u, d, t);
    };
  }
  if (!sys.hessians_x) {
    sys.hessians_x = [&sys](const Vec& x, double t) { return detail::fd_hessians(sys, x, t); };
  }
}

// Van der Pol oscillator with additive control and disturbance on the second
// component. The first row follows the standard form dx1 = x2;
// literal_first_row = true restores the non-standard dx1 = x1 variant.
inline NonlinearSystem vanderpol(double mu = 1.0, bool literal_first_row = false) {
  NonlinearSystem sys;
  sys.state_dim = 2;
  sys.control_dim = 1;
  sys.disturbance_dim = 1;
  sys.name = "vanderpol";
  sys.drift = [mu, literal_first_row](const Vec& x, double) {
    Vec f(2);
    f[0] = literal_first_row ? x[0] : x[1];
    f[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
    return f;
  };
  const Mat gain = (Mat(2, 1) << 0.0, 1.0).finished();
  sys.control_gain = [gain](const Vec&, double) { return gain; };
  sys.disturbance_gain = [gain](const Vec&, double) { return gain; };
  sys.jacobian_x = [mu, literal_first_row](const Vec& x, const Vec&, const Vec&, double) {
    Mat J(2, 2);
    J(0, 0) = literal_first_row ? 1.0 : 0.0;
    J(0, 1) = literal_first_row ? 0.0 : 1.0;
    J(1, 0) = -2.0 * mu * x[0] * x[1] - 1.0;
    J(1, 1) = mu * (1.0 - x[0] * x[0]);
    return J;
  };
  sys.hessians_x = [mu](const Vec& x, double) {
    std::vector<Mat> H(2, Mat::Zero(2, 2));
    H[1](0, 0) = -2.0 * mu * x[1];
    H[1](0, 1) = H[1](1, 0) = -2.0 * mu * x[0];
    return H;
  };
  sys.field_range = [mu, literal_first_row](const std::vector<Interval>& x,
                                            const std::vector<Interval>& u,
                                            const std::vector<Interval>& d, double,
                                            std::vector<Interval>& out) {
    out.resize(2);
    out[0] = literal_first_row ? x[0] : x[1];
    out[1] = (x[0].sqr() * -1.0 + 1.0) * x[1] * mu - x[0] + u[0] + d[0];
  };
  sys.residual_bound = [mu](const Vec& rx, const Vec&, const Vec&, const Vec& lo, const Vec& hi,
                            const ConvexInputSet&, const ConvexInputSet&, double) {
    // residual_2 = -mu*(2*rx1*h1*h2 + h1^2*(rx2 + h2)), exact Taylor remainder
    const Interval h1 = detail::deviation({lo[0], hi[0]}, rx[0]);
    const Interval h2 = detail::deviation({lo[1], hi[1]}, rx[1]);
    const Interval res = (h1 * h2 * (2.0 * rx[0]) + h1.sqr() * (h2 + rx[1])) * (-mu);
    Vec b = Vec::Zero(2);
    b[1] = res.abs_max();
    return b;
  };
  sys.lipschitz_hint = [mu](const Vec& lo, const Vec& hi) {
    const Interval x1{lo[0], hi[0]}, x2{lo[1], hi[1]};
    const double r21 = (x1 * x2 * (-2.0 * mu) - 1.0).abs_max();
    const double r22 = ((x1.sqr() * -1.0 + 1.0) * mu).abs_max();
    return std::max(1.0, r21 + r22);
  };
  sys.control_set = ConvexInputSet::symmetric_box(1, 1.0);
  sys.disturbance_set = ConvexInputSet::symmetric_box(1, 0.5);
  return sys;
}

// N Dubins cars in the body frame of a central car: per-agent state
// (x_rel, y_rel, theta_rel), central turn rate a (control), per-agent turn
// rates b_i (disturbance).
inline NonlinearSystem dubins_relative(int n_agents, double v_a, double v_b, double a_max = 1.0,
                                       double b_max = 0.5) {
  if (n_agents < 1) throw ConfigError("dubins_relative: need N >= 1");
  if (!(v_a > 0.0) || !(v_b > 0.0)) throw ConfigError("dubins_relative: speeds must be positive");
  NonlinearSystem sys;
  const int n = 3 * n_agents;
  sys.state_dim = n;
  sys.control_dim = 1;
  sys.disturbance_dim = n_agents;
  sys.name = "dubins";
  sys.drift = [n_agents, v_a, v_b](const Vec& x, double) {
    Vec f(3 * n_agents);
    for (int i = 0; i < n_agents; ++i) {
      const double th = x[3 * i + 2];
      f[3 * i + 0] = -v_a + v_b * std::cos(th);
      f[3 * i + 1] = v_b * std::sin(th);
      f[3 * i + 2] = 0.0;
    }
    return f;
  };
  sys.control_gain = [n_agents](const Vec& x, double) {
    Mat g = Mat::Zero(3 * n_agents, 1);
    for (int i = 0; i < n_agents; ++i) {
      g(3 * i + 0, 0) = x[3 * i + 1];
      g(3 * i + 1, 0) = -x[3 * i + 0];
      g(3 * i + 2, 0) = -1.0;
    }
    return g;
  };
  sys.disturbance_gain = [n_agents](const Vec&, double) {
    Mat g = Mat::Zero(3 * n_agents, n_agents);
    for (int i = 0; i < n_agents; ++i) g(3 * i + 2, i) = 1.0;
    return g;
  };
  sys.jacobian_x = [n_agents, v_b](const Vec& x, const Vec& u, const Vec&, double) {
    Mat J = Mat::Zero(3 * n_agents, 3 * n_agents);
    const double a = u.size() > 0 ? u[0] : 0.0;
    for (int i = 0; i < n_agents; ++i) {
      const double th = x[3 * i + 2];
      J(3 * i + 0, 3 * i + 1) = a;
      J(3 * i + 0, 3 * i + 2) = -v_b * std::sin(th);
      J(3 * i + 1, 3 * i + 0) = -a;
      J(3 * i + 1, 3 * i + 2) = v_b * std::cos(th);
    }
    return J;
  };
  sys.hessians_x = [n_agents, v_b](const Vec& x, double) {
    std::vector<Mat> H(3 * n_agents, Mat::Zero(3 * n_agents, 3 * n_agents));
    for (int i = 0; i < n_agents; ++i) {
      const double th = x[3 * i + 2];
      H[3 * i + 0](3 * i + 2, 3 * i + 2) = -v_b * std::cos(th);
      H[3 * i + 1](3 * i + 2, 3 * i + 2) = -v_b * std::sin(th);
    }
    return H;
  };
  sys.field_range = [n_agents, v_a, v_b](const std::vector<Interval>& x,
                                         const std::vector<Interval>& u,
                                         const std::vector<Interval>& d, double,
                                         std::vector<Interval>& out) {
    out.resize(3 * n_agents);
    for (int i = 0; i < n_agents; ++i) {
      const Interval th = x[3 * i + 2];
      out[3 * i + 0] = cos_range(th) * v_b + u[0] * x[3 * i + 1] - v_a;
      out[3 * i + 1] = sin_range(th) * v_b - u[0] * x[3 * i + 0];
      out[3 * i + 2] = d[i] - u[0];
    }
  };
  sys.residual_bound = [n_agents, v_b](const Vec& rx, const Vec& ru, const Vec&, const Vec& lo,
                                       const Vec& hi, const ConvexInputSet& U,
                                       const ConvexInputSet&, double) {
    // Exact remainder: trig second-order terms plus the bilinear a*(x,y)
    // deviation terms (the gain h1 is affine in the state).
    Vec b = Vec::Zero(3 * n_agents);
    const Vec u_ext = U.axis_extents();
    const double ru0 = ru.size() > 0 ? ru[0] : 0.0;
    const Interval a_dev{U.center[0] - u_ext[0] - ru0, U.center[0] + u_ext[0] - ru0};
    for (int i = 0; i < n_agents; ++i) {
      const Interval hx = detail::deviation({lo[3 * i + 0], hi[3 * i + 0]}, rx[3 * i + 0]);
      const Interval hy = detail::deviation({lo[3 * i + 1], hi[3 * i + 1]}, rx[3 * i + 1]);
      const Interval hth = detail::deviation({lo[3 * i + 2], hi[3 * i + 2]}, rx[3 * i + 2]);
      const double th0 = rx[3 * i + 2];
      b[3 * i + 0] = (detail::cos_residual_range(th0, hth) * v_b + a_dev * hy).abs_max();
      b[3 * i + 1] = (detail::sin_residual_range(th0, hth) * v_b - a_dev * hx).abs_max();
      b[3 * i + 2] = 0.0;
    }
    return b;
  };
  sys.lipschitz_hint = [n_agents, v_b, a_max](const Vec&, const Vec&) {
    (void)n_agents;
    return v_b + a_max;
  };
  sys.control_set = ConvexInputSet::symmetric_box(1, a_max);
  sys.disturbance_set = ConvexInputSet::symmetric_box(n_agents, b_max);
  return sys;
}

// Time-invariant linear system as a NonlinearSystem; used widely in tests
// and for the linear acceptance baseline.
inline NonlinearSystem linear_system(Mat A, Mat B1, Mat B2, Vec c, ConvexInputSet U,
                                     ConvexInputSet D, std::string name = "linear") {
  NonlinearSystem sys;
  sys.state_dim = static_cast<int>(A.rows());
  sys.control_dim = static_cast<int>(B1.cols());
  sys.disturbance_dim = static_cast<int>(B2.cols());
  sys.name = std::move(name);
  sys.drift = [A, c](const Vec& x, double) { return Vec(A * x + c); };
  sys.control_gain = [B1](const Vec&, double) { return B1; };
  sys.disturbance_gain = [B2](const Vec&, double) { return B2; };
  sys.jacobian_x = [A](const Vec&, const Vec&, const Vec&, double) { return A; };
  const int n = sys.state_dim;
  sys.hessians_x = [n](const Vec&, double) { return std::vector<Mat>(n, Mat::Zero(n, n)); };
  sys.field_range = [A, B1, B2, c](const std::vector<Interval>& x, const std::vector<Interval>& u,
                                   const std::vector<Interval>& d, double,
                                   std::vector<Interval>& out) {
    const int rows = static_cast<int>(A.rows());
    out.assign(rows, Interval{});
    for (int i = 0; i < rows; ++i) {
      Interval acc = Interval::point(c[i]);
      for (int j = 0; j < A.cols(); ++j) acc += x[j] * A(i, j);
      for (int j = 0; j < B1.cols(); ++j) acc += u[j] * B1(i, j);
      for (int j = 0; j < B2.cols(); ++j) acc += d[j] * B2(i, j);
      out[i] = acc;
    }
  };
  sys.residual_bound = [n](const Vec&, const Vec&, const Vec&, const Vec&, const Vec&,
                           const ConvexInputSet&, const ConvexInputSet&, double) {
    return Vec::Zero(n).eval();
  };
  sys.lipschitz_hint = [A](const Vec&, const Vec&) { return A.cwiseAbs().rowwise().sum().maxCoeff(); };
  sys.control_set = std::move(U);
  sys.disturbance_set = std::move(D);
  return sys;
}

// Double integrator with additive control and disturbance on the velocity,
// the linear baseline of the acceptance suite.
inline NonlinearSystem double_integrator(double u_max = 1.0, double d_max = 0.5) {
  Mat A = Mat::Zero(2, 2);
  A(0, 1) = 1.0;
  Mat B = (Mat(2, 1) << 0.0, 1.0).finished();
  return linear_system(A, B, B, Vec::Zero(2), ConvexInputSet::symmetric_box(1, u_max),
                       ConvexInputSet::symmetric_box(1, d_max), "double_integrator");
}

}  // namespace hopfreach
