#pragma once

// Convex input sets and target functions with closed-form support functions
// and Fenchel conjugates. These feed every Hamiltonian evaluation, so all
// formulas are exact (no inner optimization).

#include <random>

#include "hopfreach/core.hpp"

namespace hopfreach {

struct ConvexInputSet {
  enum class Kind { Box, Ball2, Ellipsoid };

  Kind kind = Kind::Box;
  Vec center;
  Vec half_widths;  // Box
  double radius = 0.0;  // Ball2
  Mat shape;  // Ellipsoid, SPD

  static ConvexInputSet box(Vec c, Vec hw) {
    if (c.size() != hw.size()) throw ConfigError("box: center/half_widths size mismatch");
    if ((hw.array() < 0.0).any()) throw ConfigError("box: negative half width");
    ConvexInputSet s;
    s.kind = Kind::Box;
    s.center = std::move(c);
    s.half_widths = std::move(hw);
    return s;
  }
  static ConvexInputSet symmetric_box(int dim, double hw) {
    return box(Vec::Zero(dim), Vec::Constant(dim, hw));
  }
  static ConvexInputSet ball(Vec c, double r) {
    if (r < 0.0) throw ConfigError("ball: negative radius");
    ConvexInputSet s;
    s.kind = Kind::Ball2;
    s.center = std::move(c);
    s.radius = r;
    return s;
  }
  static ConvexInputSet ellipsoid(Vec c, Mat q) {
    if (q.rows() != q.cols() || q.rows() != c.size()) throw ConfigError("ellipsoid: shape dims");
    if (!q.isApprox(q.transpose(), 1e-10)) throw ConfigError("ellipsoid: shape not symmetric");
    Eigen::LLT<Mat> llt(q);
    if (llt.info() != Eigen::Success) throw ConfigError("ellipsoid: shape not positive definite");
    ConvexInputSet s;
    s.kind = Kind::Ellipsoid;
    s.center = std::move(c);
    s.shape = std::move(q);
    return s;
  }
  static ConvexInputSet point(Vec c) { return box(std::move(c), Vec::Zero(c.size())); }

  int dim() const { return static_cast<int>(center.size()); }

  // Per-axis half-widths of the bounding box; used by interval propagation.
  Vec axis_extents() const {
    switch (kind) {
      case Kind::Box: return half_widths;
      case Kind::Ball2: return Vec::Constant(dim(), radius);
      case Kind::Ellipsoid: return shape.diagonal().array().sqrt().matrix();
    }
    return Vec();
  }

  bool contains(const Vec& x, double tol = 1e-12) const {
    const Vec d = x - center;
    switch (kind) {
      case Kind::Box: return (d.array().abs() <= half_widths.array() + tol).all();
      case Kind::Ball2: return d.norm() <= radius + tol;
      case Kind::Ellipsoid: {
        Eigen::LLT<Mat> llt(shape);
        return d.dot(llt.solve(d)) <= 1.0 + tol;
      }
    }
    return false;
  }

  Vec sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    switch (kind) {
      case Kind::Box: {
        Vec v = center;
        for (int i = 0; i < dim(); ++i) v[i] += uni(rng) * half_widths[i];
        return v;
      }
      case Kind::Ball2:
      case Kind::Ellipsoid: {
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vec g(dim());
        for (int i = 0; i < dim(); ++i) g[i] = gauss(rng);
        const double nrm = g.norm();
        if (nrm < 1e-300) return center;
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        g *= std::pow(u01(rng), 1.0 / dim()) / nrm;
        if (kind == Kind::Ball2) return center + radius * g;
        Eigen::SelfAdjointEigenSolver<Mat> es(shape);
        const Mat sqrt_shape =
            es.eigenvectors() * es.eigenvalues().array().max(0.0).sqrt().matrix().asDiagonal() *
            es.eigenvectors().transpose();
        return center + sqrt_shape * g;
      }
    }
    return center;
  }
};

// sup_{c in C} p . c, exact per variant.
inline double support(const ConvexInputSet& set, const Vec& p) {
  const double base = p.dot(set.center);
  switch (set.kind) {
    case ConvexInputSet::Kind::Box:
      return base + set.half_widths.dot(p.cwiseAbs());
    case ConvexInputSet::Kind::Ball2:
      return base + set.radius * p.norm();
    case ConvexInputSet::Kind::Ellipsoid:
      return base + std::sqrt(std::max(0.0, p.dot(set.shape * p)));
  }
  return base;
}

// A maximizer of p . c over the set. Box ties at p_i = 0 resolve to zero
// offset; p = 0 on a non-box set returns the center.
inline Vec support_argmax(const ConvexInputSet& set, const Vec& p) {
  switch (set.kind) {
    case ConvexInputSet::Kind::Box: {
      Vec v = set.center;
      for (int i = 0; i < set.dim(); ++i) {
        if (p[i] > 0.0) v[i] += set.half_widths[i];
        else if (p[i] < 0.0) v[i] -= set.half_widths[i];
      }
      return v;
    }
    case ConvexInputSet::Kind::Ball2: {
      const double nrm = p.norm();
      if (nrm < 1e-300) return set.center;
      return set.center + (set.radius / nrm) * p;
    }
    case ConvexInputSet::Kind::Ellipsoid: {
      const Vec qp = set.shape * p;
      const double denom = std::sqrt(std::max(0.0, p.dot(qp)));
      if (denom < 1e-300) return set.center;
      return set.center + qp / denom;
    }
  }
  return set.center;
}

// Terminal cost J with the sign convention J < 0 inside the target, = 0 on
// the boundary, > 0 outside, plus its closed-form convex conjugate.
struct TargetSpec {
  enum class Kind { QuadraticEllipsoid, NormBall };

  Kind kind = Kind::QuadraticEllipsoid;
  Vec center;
  Mat shape;  // QuadraticEllipsoid, SPD
  double radius = 0.0;  // NormBall

  static TargetSpec quadratic_ellipsoid(Vec c, Mat q) {
    Eigen::LLT<Mat> llt(q);
    if (q.rows() != q.cols() || q.rows() != c.size() || llt.info() != Eigen::Success)
      throw ConfigError("quadratic_ellipsoid: shape must be SPD and match center");
    TargetSpec t;
    t.kind = Kind::QuadraticEllipsoid;
    t.center = std::move(c);
    t.shape = std::move(q);
    return t;
  }
  static TargetSpec norm_ball(Vec c, double r) {
    if (r < 0.0) throw ConfigError("norm_ball: negative radius");
    TargetSpec t;
    t.kind = Kind::NormBall;
    t.center = std::move(c);
    t.radius = r;
    return t;
  }

  int dim() const { return static_cast<int>(center.size()); }

  double value(const Vec& x) const {
    const Vec d = x - center;
    if (kind == Kind::NormBall) return d.norm() - radius;
    Eigen::LLT<Mat> llt(shape);
    return 0.5 * (d.dot(llt.solve(d)) - 1.0);
  }

  Vec gradient(const Vec& x) const {
    const Vec d = x - center;
    if (kind == Kind::NormBall) {
      const double nrm = d.norm();
      return nrm < 1e-12 ? Vec::Zero(dim()) : Vec(d / nrm);
    }
    Eigen::LLT<Mat> llt(shape);
    return llt.solve(d);
  }

  // J*(p); +inf outside the conjugate domain (NormBall: dual unit ball).
  double conjugate(const Vec& p) const {
    if (kind == Kind::NormBall) {
      if (p.norm() > 1.0 + 1e-12) return kInf;
      return p.dot(center) + radius;
    }
    return 0.5 * p.dot(shape * p) + p.dot(center) + 0.5;
  }

  Vec conjugate_gradient(const Vec& p) const {
    if (kind == Kind::NormBall) return center;
    return shape * p + center;
  }

  double conjugate_domain_radius() const {
    return kind == Kind::NormBall ? 1.0 : kInf;
  }

  // Bounding-box half-widths of the zero sublevel set {J <= 0}.
  Vec axis_extents() const {
    if (kind == Kind::NormBall) return Vec::Constant(dim(), radius);
    return shape.diagonal().array().sqrt().matrix();
  }

  bool contains(const Vec& x, double tol = 1e-12) const { return value(x) <= tol; }
};

inline double conjugate_target(const TargetSpec& tgt, const Vec& p) { return tgt.conjugate(p); }

}  // namespace hopfreach
