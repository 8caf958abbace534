#pragma once

// Grid dynamic-programming oracle for the HJ PDE on 2D systems: global
// Lax-Friedrichs with per-axis dissipation, linear value extrapolation at the
// boundary, CFL-driven substepping. First-order, good enough to adjudicate
// set containment with a 2-cell band; exists only for desk-scale validation.

#include <fstream>

#include "hopfreach/convex.hpp"
#include "hopfreach/core.hpp"
#include "hopfreach/dynamics.hpp"

namespace hopfreach {

struct DPGridSpec {
  Vec lo = (Vec(2) << -3.0, -3.0).finished();
  Vec hi = (Vec(2) << 3.0, 3.0).finished();
  int nx = 101;
  int ny = 101;
  double cfl = 0.9;
};

struct DPGrid {
  DPGridSpec spec;
  GameMode mode = GameMode::Reach;
  double lapse = 0.0;
  double cfl_used = 0.0;
  std::vector<double> value;  // row-major, index = iy * nx + ix

  double dx() const { return (spec.hi[0] - spec.lo[0]) / (spec.nx - 1); }
  double dy() const { return (spec.hi[1] - spec.lo[1]) / (spec.ny - 1); }
  double cell() const { return std::max(dx(), dy()); }
  double at(int ix, int iy) const { return value[static_cast<std::size_t>(iy) * spec.nx + ix]; }
};

namespace detail {

// H_V(x, p) (Reach: min_u max_d p.f, Avoid flipped); evaluated with the
// closed-form supports of the input sets.
inline double dp_hamiltonian(const NonlinearSystem& sys, const ConvexInputSet& U,
                             const ConvexInputSet& D, GameMode mode, const Vec& x, const Vec& p,
                             double t) {
  double h = p.dot(sys.drift(x, t));
  const Vec pu = sys.control_gain(x, t).transpose() * p;
  const Vec pd = sys.disturbance_gain(x, t).transpose() * p;
  if (mode == GameMode::Reach) {
    h -= support(U, -pu);  // min_u p.h1 u
    h += support(D, pd);   // max_d p.h2 d
  } else {
    h += support(U, pu);
    h -= support(D, -pd);
  }
  return h;
}

}  // namespace detail

// Backward value iteration in lapse: dW/ds = H_V(x, grad W), W(.,0) = J.
inline DPGrid dp_solve(const NonlinearSystem& sys, const TargetSpec& tgt, const ConvexInputSet& U,
                       const ConvexInputSet& D, GameMode mode, const DPGridSpec& gspec,
                       double lapse, int threads = 0) {
  if (sys.state_dim != 2) throw ConfigError("dp_solve: only 2D systems are supported");
  DPGrid grid;
  grid.spec = gspec;
  grid.mode = mode;
  grid.lapse = lapse;
  const int nx = gspec.nx, ny = gspec.ny;
  const double dx = grid.dx(), dy = grid.dy();

  grid.value.resize(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      Vec x(2);
      x[0] = gspec.lo[0] + ix * dx;
      x[1] = gspec.lo[1] + iy * dy;
      grid.value[static_cast<std::size_t>(iy) * nx + ix] = tgt.value(x);
    }
  if (lapse <= 0.0) return grid;

  // per-axis characteristic speed bound over the window and input sets
  std::vector<Interval> xbox{{gspec.lo[0], gspec.hi[0]}, {gspec.lo[1], gspec.hi[1]}};
  const auto ubox = [&] {
    std::vector<Interval> b(U.dim());
    const Vec e = U.axis_extents();
    for (int i = 0; i < U.dim(); ++i) b[i] = {U.center[i] - e[i], U.center[i] + e[i]};
    return b;
  }();
  const auto dbox = [&] {
    std::vector<Interval> b(D.dim());
    const Vec e = D.axis_extents();
    for (int i = 0; i < D.dim(); ++i) b[i] = {D.center[i] - e[i], D.center[i] + e[i]};
    return b;
  }();
  double ax = 0.0, ay = 0.0;
  if (sys.field_range) {
    std::vector<Interval> f;
    sys.field_range(xbox, ubox, dbox, 0.0, f);
    ax = f[0].abs_max();
    ay = f[1].abs_max();
  } else {
    for (int iy = 0; iy < ny; iy += 4)
      for (int ix = 0; ix < nx; ix += 4) {
        Vec x(2);
        x[0] = gspec.lo[0] + ix * dx;
        x[1] = gspec.lo[1] + iy * dy;
        for (int su = -1; su <= 1; su += 2)
          for (int sd = -1; sd <= 1; sd += 2) {
            Vec u = U.center + su * U.axis_extents();
            Vec d = D.center + sd * D.axis_extents();
            const Vec f = sys.field(x, u, d, 0.0);
            ax = std::max(ax, std::abs(f[0]));
            ay = std::max(ay, std::abs(f[1]));
          }
      }
    ax *= 1.1;
    ay *= 1.1;
  }

  const double rate = ax / dx + ay / dy;
  const double ds_max = gspec.cfl / std::max(rate, 1e-12);
  const int steps = std::max(1, static_cast<int>(std::ceil(lapse / ds_max)));
  const double ds = lapse / steps;
  grid.cfl_used = ds * rate;

  std::vector<double> next(grid.value.size());
  auto V = [&](const std::vector<double>& w, int ix, int iy) -> double {
    // linear extrapolation outside the window
    if (ix < 0) return 2.0 * w[static_cast<std::size_t>(iy) * nx] - w[static_cast<std::size_t>(iy) * nx + 1];
    if (ix >= nx)
      return 2.0 * w[static_cast<std::size_t>(iy) * nx + nx - 1] -
             w[static_cast<std::size_t>(iy) * nx + nx - 2];
    return w[static_cast<std::size_t>(iy) * nx + ix];
  };
  auto Vy = [&](const std::vector<double>& w, int ix, int iy) -> double {
    if (iy < 0) return 2.0 * V(w, ix, 0) - V(w, ix, 1);
    if (iy >= ny) return 2.0 * V(w, ix, ny - 1) - V(w, ix, ny - 2);
    return V(w, ix, iy);
  };

  for (int s = 0; s < steps; ++s) {
    const double t = s * ds;
    parallel_for(ny, threads, [&](std::size_t iy_s) {
      const int iy = static_cast<int>(iy_s);
      Vec x(2), p(2);
      for (int ix = 0; ix < nx; ++ix) {
        const double c = Vy(grid.value, ix, iy);
        const double xl = Vy(grid.value, ix - 1, iy), xr = Vy(grid.value, ix + 1, iy);
        const double yl = Vy(grid.value, ix, iy - 1), yr = Vy(grid.value, ix, iy + 1);
        const double pxm = (c - xl) / dx, pxp = (xr - c) / dx;
        const double pym = (c - yl) / dy, pyp = (yr - c) / dy;
        x[0] = gspec.lo[0] + ix * dx;
        x[1] = gspec.lo[1] + iy * dy;
        p[0] = 0.5 * (pxm + pxp);
        p[1] = 0.5 * (pym + pyp);
        const double h = detail::dp_hamiltonian(sys, U, D, mode, x, p, t);
        next[static_cast<std::size_t>(iy) * nx + ix] =
            c + ds * h + 0.5 * ds * (ax * (pxp - pxm) + ay * (pyp - pym));
      }
    });
    grid.value.swap(next);
  }
  return grid;
}

// Bilinear interpolation; x must lie inside the grid window.
inline double dp_query(const DPGrid& grid, const Vec& x) {
  const auto& s = grid.spec;
  if (x[0] < s.lo[0] - 1e-12 || x[0] > s.hi[0] + 1e-12 || x[1] < s.lo[1] - 1e-12 ||
      x[1] > s.hi[1] + 1e-12)
    throw ConfigError("dp_query: point outside grid range");
  const double fx = std::clamp((x[0] - s.lo[0]) / grid.dx(), 0.0, double(s.nx - 1));
  const double fy = std::clamp((x[1] - s.lo[1]) / grid.dy(), 0.0, double(s.ny - 1));
  const int ix = std::min(static_cast<int>(fx), s.nx - 2);
  const int iy = std::min(static_cast<int>(fy), s.ny - 2);
  const double ax = fx - ix, ay = fy - iy;
  return (1 - ax) * (1 - ay) * grid.at(ix, iy) + ax * (1 - ay) * grid.at(ix + 1, iy) +
         (1 - ax) * ay * grid.at(ix, iy + 1) + ax * ay * grid.at(ix + 1, iy + 1);
}

inline void save_dp_grid(const DPGrid& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("save_dp_grid: cannot open " + path);
  os.precision(15);
  os << "# hopfreach dp grid v1\n";
  os << grid.spec.lo[0] << "," << grid.spec.lo[1] << "," << grid.spec.hi[0] << ","
     << grid.spec.hi[1] << "," << grid.spec.nx << "," << grid.spec.ny << ","
     << (grid.mode == GameMode::Reach ? "reach" : "avoid") << "," << grid.lapse << ","
     << grid.cfl_used << "\n";
  for (std::size_t i = 0; i < grid.value.size(); ++i)
    os << grid.value[i] << (i + 1 == grid.value.size() ? "\n" : ",");
}

inline DPGrid load_dp_grid(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("load_dp_grid: missing gold set " + path +
                             " (run the dp-gold subcommand first)");
  std::string header, meta;
  std::getline(is, header);
  std::getline(is, meta);
  DPGrid grid;
  char comma;
  std::istringstream ms(meta);
  std::string mode;
  grid.spec.lo.resize(2);
  grid.spec.hi.resize(2);
  ms >> grid.spec.lo[0] >> comma >> grid.spec.lo[1] >> comma >> grid.spec.hi[0] >> comma >>
      grid.spec.hi[1] >> comma >> grid.spec.nx >> comma >> grid.spec.ny >> comma;
  std::getline(ms, mode, ',');
  grid.mode = mode == "reach" ? GameMode::Reach : GameMode::Avoid;
  ms >> grid.lapse >> comma >> grid.cfl_used;
  grid.value.resize(static_cast<std::size_t>(grid.spec.nx) * grid.spec.ny);
  for (std::size_t i = 0; i < grid.value.size(); ++i) {
    is >> grid.value[i];
    if (i + 1 < grid.value.size()) is >> comma;
  }
  if (!is) throw ConfigError("load_dp_grid: corrupt gold set " + path);
  return grid;
}

}  // namespace hopfreach
