#pragma once

// Hopf objective assembly, multi-start proximal-subgradient minimization,
// grid evaluation and control synthesis for Reach and Avoid games with an
// antagonistic error channel.
//
// Conventions (forward-time node k, transition matrix based at the terminal
// node so that the target conjugate applies unchanged):
//   Reach integrand: sU(R1 p) - sD(-R2 p) - sum_i delta_i |(E p)_i| - p.drift
//   Avoid integrand: sD(R2 p) - sU(-R1 p) + sum_i delta_i |(E p)_i| - p.drift
// The error sign is pinned by the monotonicity requirement that error hurts
// the optimizing player (Reach values nondecreasing, Avoid nonincreasing in
// delta); the unit test enforcing that is the arbiter.

#include <random>

#include "hopfreach/errbound.hpp"
#include "hopfreach/lintv.hpp"

namespace hopfreach {

enum class Convexity { Convex, Unknown };

struct SolveSettings {
  int restarts = 20;
  int max_iters = 2000;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
};

struct GameSpec {
  GameMode mode = GameMode::Reach;
  NonlinearSystem system;
  LinearTVModel model;
  FundamentalSolution fund;
  HamiltonianTable table;
  TargetSpec target;
  ConvexInputSet U;
  ConvexInputSet D;
  ErrorBound error;
  double lapse = 0.0;
  SolveSettings settings;
  Convexity verdict = Convexity::Unknown;
};

struct HopfResult {
  double value = 0.0;
  Vec p_star;
  int objective_evals = 0;
  int restarts_used = 0;
  bool converged = false;
  double gap_estimate = 0.0;
  double stationarity = 0.0;
  bool unverified_viscosity = false;
  bool ambiguous_gradient = false;

  std::string flags() const {
    std::string f;
    if (!converged) f += "non_converged;";
    if (unverified_viscosity) f += "unverified_viscosity;";
    if (ambiguous_gradient) f += "ambiguous_gradient;";
    if (!f.empty()) f.pop_back();
    return f;
  }
};

struct ValueGrid {
  std::vector<Vec> points;
  std::vector<HopfResult> results;
  std::vector<Vec> z;
  double level = 0.0;
  std::vector<std::uint8_t> member;

  std::size_t size() const { return points.size(); }
  void refresh_membership() {
    member.resize(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) member[i] = results[i].value <= level ? 1 : 0;
  }
};

namespace detail {

struct ObjectiveWorkspace {
  Vec q1, q2, qe, sel_u, sel_d, grad, contrib;
};

// Objective and subgradient of p -> J*(p) - z.p + sum_k w_k h_k(p).
// Returns +inf outside the conjugate domain (domain barrier, not an error).
inline double hopf_objective_impl(const GameSpec& spec, const std::vector<double>& w, int k0,
                                  const Vec& z, const Vec& p, bool need_grad,
                                  ObjectiveWorkspace& ws) {
  const HamiltonianTable& tab = spec.table;
  const bool reach = spec.mode == GameMode::Reach;
  double val = spec.target.conjugate(p);
  if (!std::isfinite(val)) return kInf;
  val -= z.dot(p);
  if (need_grad) {
    ws.grad = spec.target.conjugate_gradient(p);
    ws.grad -= z;
  }
  const int K = tab.nodes();
  for (int k = k0; k < K; ++k) {
    const double wk = w[k];
    if (wk == 0.0) continue;
    double h = -p.dot(tab.drift[k]);
    if (need_grad) ws.grad.noalias() -= wk * tab.drift[k];
    if (reach) {
      ws.q1.noalias() = tab.R1[k] * p;
      ws.q2.noalias() = -(tab.R2[k] * p);
    } else {
      ws.q1.noalias() = -(tab.R1[k] * p);
      ws.q2.noalias() = tab.R2[k] * p;
    }
    const double su = support(spec.U, ws.q1);
    const double sd = support(spec.D, ws.q2);
    h += reach ? su - sd : sd - su;
    if (need_grad) {
      ws.sel_u = support_argmax(spec.U, ws.q1);
      ws.sel_d = support_argmax(spec.D, ws.q2);
      if (reach) {
        ws.grad.noalias() += wk * (tab.R1[k].transpose() * ws.sel_u);
        ws.grad.noalias() += wk * (tab.R2[k].transpose() * ws.sel_d);
      } else {
        ws.grad.noalias() -= wk * (tab.R1[k].transpose() * ws.sel_u);
        ws.grad.noalias() -= wk * (tab.R2[k].transpose() * ws.sel_d);
      }
    }
    if (tab.has_error) {
      const Vec& dl = tab.delta[k];
      ws.qe.noalias() = tab.E[k] * p;
      double se = 0.0;
      for (int i = 0; i < tab.n; ++i) se += dl[i] * std::abs(ws.qe[i]);
      h += reach ? -se : se;
      if (need_grad) {
        for (int i = 0; i < tab.n; ++i)
          ws.contrib[i] = dl[i] * (ws.qe[i] > 0.0 ? 1.0 : (ws.qe[i] < 0.0 ? -1.0 : 0.0));
        if (reach)
          ws.grad.noalias() -= wk * (tab.E[k].transpose() * ws.contrib);
        else
          ws.grad.noalias() += wk * (tab.E[k].transpose() * ws.contrib);
      }
    }
    val += wk * h;
  }
  return val;
}

}  // namespace detail

// Exposed objective for tests and diagnostics.
inline std::pair<double, Vec> hopf_objective(const GameSpec& spec, const Vec& z, const Vec& p) {
  detail::ObjectiveWorkspace ws;
  const int n = spec.table.n;
  ws.q1.resize(spec.table.nu);
  ws.q2.resize(spec.table.nd);
  ws.qe.resize(n);
  ws.contrib.resize(n);
  const auto w = spec.table.quadrature_weights(0);
  const double v = detail::hopf_objective_impl(spec, w, 0, z, p, true, ws);
  return {v, std::isfinite(v) ? ws.grad : Vec::Zero(n)};
}

// Minimizes the Hopf objective from multiple deterministic and Gaussian
// restarts. start_node > 0 evaluates the value at an interior grid node
// (used by receding-horizon synthesis); extra_inits are additional candidate
// starting costates (any p yields a valid upper bound on the minimum).
inline HopfResult solve_point(const GameSpec& spec, const Vec& x,
                              const std::vector<Vec>& extra_inits = {}, int start_node = 0,
                              std::uint64_t seed_override = 0, bool has_seed_override = false) {
  const HamiltonianTable& tab = spec.table;
  const int n = tab.n;
  if (x.size() != n) throw ConfigError("solve_point: state dimension mismatch");
  if (!x.allFinite()) throw ConfigError("solve_point: non-finite query");
  if (spec.error.has_scope_box && start_node == 0) {
    if ((x.array() < spec.error.scope_lo.array() - 1e-12).any() ||
        (x.array() > spec.error.scope_hi.array() + 1e-12).any())
      throw NumericsError("solve_point: query outside the forward-localization box");
  }

  const Vec z = tab.zmap_from[start_node] * x;
  const auto w = tab.quadrature_weights(start_node);

  detail::ObjectiveWorkspace ws;
  ws.q1.resize(tab.nu);
  ws.q2.resize(tab.nd);
  ws.qe.resize(n);
  ws.contrib.resize(n);

  HopfResult res;
  res.p_star = Vec::Zero(n);
  int evals = 0;
  auto objective = [&](const Vec& p, bool need_grad) {
    ++evals;
    return detail::hopf_objective_impl(spec, w, start_node, z, p, need_grad, ws);
  };

  std::mt19937_64 rng(has_seed_override ? seed_override : spec.settings.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Vec p_init = spec.target.gradient(x);
  const double domain_r = spec.target.conjugate_domain_radius();
  const double scale = 1.0 + p_init.norm();

  std::vector<Vec> inits;
  inits.push_back(p_init);
  inits.push_back(Vec::Zero(n));
  for (const Vec& e : extra_inits)
    if (e.size() == n && e.allFinite()) inits.push_back(e);
  for (int r = 0; r < spec.settings.restarts; ++r) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = p_init[i] + scale * gauss(rng);
    inits.push_back(std::move(p));
  }

  const double step0 = 1.0 / (1.0 + z.norm());
  double best = kInf;
  std::vector<double> restart_values;
  restart_values.reserve(inits.size());

  for (Vec p : inits) {
    if (std::isfinite(domain_r)) {
      const double nrm = p.norm();
      if (nrm > 0.999 * domain_r) p *= 0.999 * domain_r / nrm;
    }
    double f = objective(p, true);
    if (!std::isfinite(f)) {
      restart_values.push_back(kInf);
      continue;
    }
    Vec g = ws.grad;
    double step = step0;
    bool conv = false;
    double last_step_norm = kInf;
    for (int it = 0; it < spec.settings.max_iters; ++it) {
      const double gn = g.norm();
      if (gn < 1e-14) {
        conv = true;
        last_step_norm = 0.0;
        break;
      }
      if (step * gn <= spec.settings.tol) {
        conv = true;
        last_step_norm = step * gn;
        break;
      }
      const Vec trial = p - step * g;
      const double ft = objective(trial, true);
      if (std::isfinite(ft) && ft < f - 1e-15 * (1.0 + std::abs(f))) {
        p = trial;
        f = ft;
        g = ws.grad;
      } else {
        step *= 0.5;
      }
    }
    restart_values.push_back(f);
    if (f < best) {
      best = f;
      res.p_star = p;
      res.converged = conv;
      res.stationarity = last_step_norm;
    }
    ++res.restarts_used;
  }

  if (!std::isfinite(best)) {
    // domain barrier everywhere we looked; report the center candidate
    best = objective(Vec::Zero(n), false);
    res.p_star = Vec::Zero(n);
    res.converged = false;
  }
  res.value = -best;
  res.objective_evals = evals;
  std::sort(restart_values.begin(), restart_values.end());
  const std::size_t top = std::min<std::size_t>(4, restart_values.size() - 1);
  res.gap_estimate =
      std::isfinite(restart_values[top]) ? restart_values[top] - restart_values[0] : kInf;
  res.unverified_viscosity = spec.mode == GameMode::Reach && spec.verdict != Convexity::Convex;
  return res;
}

// Independent per-point solves with per-point seeds derived from the master
// seed; parallel and serial runs are bit-identical and query order does not
// affect any point's result.
inline ValueGrid solve_grid(const GameSpec& spec, const std::vector<Vec>& points,
                            const std::vector<std::vector<Vec>>* extra_inits = nullptr,
                            double level = 0.0) {
  if (extra_inits && extra_inits->size() != points.size())
    throw ConfigError("solve_grid: extra_inits size mismatch");
  ValueGrid grid;
  grid.points = points;
  grid.results.resize(points.size());
  grid.z.resize(points.size());
  grid.level = level;
  parallel_for(points.size(), spec.settings.threads, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(spec.settings.seed, i);
    static const std::vector<Vec> none;
    const std::vector<Vec>& extra = extra_inits ? (*extra_inits)[i] : none;
    grid.results[i] = solve_point(spec, points[i], extra, 0, seed, true);
    grid.z[i] = spec.table.zmap_from[0] * points[i];
  });
  grid.refresh_membership();
  return grid;
}

struct ControlChoice {
  Vec u;
  Vec d_worst;
  bool ambiguous = false;
};

// Optimal input at grid node k from the minimizing costate: the support
// maximizer of the appropriate channel, with the worst-case adversary input.
inline ControlChoice synthesize_control(const GameSpec& spec, const HopfResult& result,
                                        int node = 0) {
  const HamiltonianTable& tab = spec.table;
  ControlChoice out;
  if (result.p_star.norm() < 1e-9) {
    out.ambiguous = true;
    out.u = spec.U.center;
    out.d_worst = spec.D.center;
    return out;
  }
  const bool reach = spec.mode == GameMode::Reach;
  const Vec q1 = reach ? Vec(tab.R1[node] * result.p_star) : Vec(-(tab.R1[node] * result.p_star));
  const Vec q2 = reach ? Vec(-(tab.R2[node] * result.p_star)) : Vec(tab.R2[node] * result.p_star);
  out.u = support_argmax(spec.U, q1);
  out.d_worst = support_argmax(spec.D, q2);
  return out;
}

// Sufficient convexity test for the Reach integrand: every adversarial
// channel (disturbance and error, box geometry) must align with a control
// channel and the control's gauge must dominate the summed adversarial
// gauges at every node; cross-checked on sampled costate directions.
inline Convexity reach_convexity_check(const GameSpec& spec, int sample_dirs = 1000) {
  const HamiltonianTable& tab = spec.table;
  const Vec dext = spec.D.axis_extents();
  const bool no_delta = !tab.has_error;
  const bool no_dist = dext.size() == 0 || dext.cwiseAbs().maxCoeff() == 0.0;
  if (no_delta && no_dist) return Convexity::Convex;
  if (spec.U.kind != ConvexInputSet::Kind::Box || spec.D.kind != ConvexInputSet::Kind::Box)
    return Convexity::Unknown;

  const Vec uext = spec.U.axis_extents();
  const int n = tab.n;
  for (int k = 0; k < tab.nodes(); ++k) {
    Vec budget = uext;  // remaining gauge per control row, in row-norm units
    std::vector<Vec> rows(tab.nu);
    for (int j = 0; j < tab.nu; ++j) rows[j] = tab.R1[k].row(j).transpose();
    auto absorb = [&](const Vec& gen, double weight) {
      const double gnorm = gen.norm();
      if (weight * gnorm < 1e-14) return true;
      for (int j = 0; j < tab.nu; ++j) {
        const double rnorm = rows[j].norm();
        if (rnorm < 1e-14) continue;
        const double cosang = std::abs(gen.dot(rows[j])) / (gnorm * rnorm);
        if (cosang > 1.0 - 1e-9) {
          budget[j] -= weight * gnorm / rnorm;
          return true;
        }
      }
      return false;
    };
    for (int j = 0; j < tab.nd; ++j)
      if (!absorb(tab.R2[k].row(j).transpose(), dext[j])) return Convexity::Unknown;
    if (tab.has_error)
      for (int i = 0; i < n; ++i)
        if (!absorb(tab.E[k].row(i).transpose(), tab.delta[k][i])) return Convexity::Unknown;
    if ((budget.array() < -1e-12).any()) return Convexity::Unknown;
  }

  // sampled gauge comparison over random directions
  std::mt19937_64 rng(derive_seed(spec.settings.seed, 0x636f6e76));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int s = 0; s < sample_dirs; ++s) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = gauss(rng);
    p.normalize();
    for (int k = 0; k < tab.nodes(); ++k) {
      const double su = spec.U.half_widths.dot((tab.R1[k] * p).cwiseAbs());
      double adv = spec.D.half_widths.dot((tab.R2[k] * p).cwiseAbs());
      if (tab.has_error) adv += tab.delta[k].dot((tab.E[k] * p).cwiseAbs());
      if (su < adv - 1e-10) return Convexity::Unknown;
    }
  }
  return Convexity::Convex;
}

inline void write_value_grid_csv(const ValueGrid& grid, std::ostream& os) {
  const int n = grid.points.empty() ? 0 : static_cast<int>(grid.points.front().size());
  for (int i = 0; i < n; ++i) os << "x" << i << ",";
  os << "value,converged,flags\n";
  os.precision(12);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int j = 0; j < n; ++j) os << grid.points[i][j] << ",";
    os << grid.results[i].value << "," << (grid.results[i].converged ? 1 : 0) << ","
       << grid.results[i].flags() << "\n";
  }
}

}  // namespace hopfreach
