#pragma once

// Product Lorentzian metrics g = -beta dt^2 + g0(t,x) on (0,T) x M and
// pointwise tensor calculus in the product chart (t, x).

#include "beamlab/expr.hpp"
#include "beamlab/smallmat.hpp"

#include "json.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace beamlab {

enum class DomainKind { Interval, Rectangle, Disk };

struct SpatialDomain {
  DomainKind kind = DomainKind::Interval;
  double lx = 1.0, ly = 1.0;          // [0,lx] or [0,lx] x [0,ly]
  double cx = 0.0, cy = 0.0, radius = 1.0;

  int dim() const { return kind == DomainKind::Interval ? 1 : 2; }
  /// Negative inside, zero on the boundary, positive outside.
  double level(const double* x) const;
  bool contains(const double* x, double tol = 1e-12) const { return level(x) <= tol; }
  double diameter() const;
  /// Euclidean outward unit conormal of the boundary piece closest to x.
  std::array<double, 2> outward(const double* x) const;
  std::array<double, 2> box_lo() const;
  std::array<double, 2> box_hi() const;
};

/// Samples of (beta, g0 components) on a uniform (t, x[, y]) grid.
struct SampledMetric {
  int n = 1;
  std::array<int, 3> nodes{};  // nt, nx, ny
  std::array<double, 3> lo{}, hi{};
  int ncomp = 0;
  std::vector<double> data;    // [comp][it][ix][iy]

  template <class T> T eval(int comp, const T* p, const std::array<int, 3>& dord) const;

private:
  double at(int comp, int it, int ix, int iy) const;
};

/// A coefficient function: closed-form expression or a sampled component.
struct ScalarField {
  Expr expr;
  std::shared_ptr<const SampledMetric> grid;
  int comp = -1;
  std::array<int, 3> dord{};

  template <class T> T eval(const T* p) const {
    if (grid) return grid->eval(comp, p, dord);
    return expr.eval(p);
  }
  ScalarField derivative(int var) const;
  bool is_zero() const { return !grid && expr.is_constant() && expr.constant_value() == 0.0; }
};

enum class DerivativeMode { Analytic, FiniteDifference };

struct MetricSpec {
  std::string kind = "minkowski";
  int n = 1;
  double T = 1.0;
  SpatialDomain domain;
  ScalarField beta;
  std::vector<ScalarField> g0;  // packed: n=1 {g11}; n=2 {g11, g12, g22}
  DerivativeMode mode = DerivativeMode::Analytic;
  double h_fd = 0.0;            // 0 selects 1e-4 * diameter
  std::string description;

  // filled by finalize()
  std::array<ScalarField, 3> dbeta;
  std::array<std::vector<ScalarField>, 3> dg0;

  int dim() const { return n + 1; }
  double fd_step() const { return h_fd > 0 ? h_fd : 1e-4 * domain.diameter(); }
  int packed(int a, int b) const {
    if (n == 1) return 0;
    if (a > b) std::swap(a, b);
    return a == 0 ? (b == 0 ? 0 : 1) : 2;
  }
  void finalize();

  static MetricSpec minkowski(int n, double T, const SpatialDomain& dom);
  static MetricSpec conformal(int n, double T, const SpatialDomain& dom, const std::string& factor);
  static MetricSpec custom(int n, double T, const SpatialDomain& dom, const std::string& beta,
                           const std::vector<std::string>& g0);
  static MetricSpec sampled(int n, double T, const SpatialDomain& dom, const std::string& path);
};

/// Build from the "metric" config object; throws Error("config", ...).
MetricSpec metric_from_json(const nlohmann::json& j);
SpatialDomain domain_from_json(const nlohmann::json& j, int n);
nlohmann::json domain_to_json(const SpatialDomain& d);

std::vector<std::string> coordinate_names(int n);

// ---- generic evaluation (double, binary128, jets) ----

template <class T> void metric_at(const MetricSpec& m, const T* p, T g[3][3]) {
  const int d = m.dim();
  const T zero = konst_like(p[0], 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g[i][j] = zero;
  g[0][0] = -m.beta.eval(p);
  for (int a = 0; a < m.n; ++a)
    for (int b = a; b < m.n; ++b) {
      g[a + 1][b + 1] = m.g0[m.packed(a, b)].eval(p);
      g[b + 1][a + 1] = g[a + 1][b + 1];
    }
}

/// dg[k][i][j] = d_k g_ij.
template <class T> void metric_deriv_at(const MetricSpec& m, const T* p, T dg[3][3][3]) {
  const int d = m.dim();
  if (m.mode == DerivativeMode::FiniteDifference) {
    const double h = m.fd_step();
    for (int k = 0; k < d; ++k) {
      T pp[3], pm[3];
      for (int i = 0; i < d; ++i) pp[i] = pm[i] = p[i];
      pp[k] = pp[k] + konst_like(p[0], h);
      pm[k] = pm[k] - konst_like(p[0], h);
      T gp[3][3], gm[3][3];
      metric_at(m, pp, gp);
      metric_at(m, pm, gm);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) dg[k][i][j] = scale_by(gp[i][j] - gm[i][j], 0.5 / h);
    }
    return;
  }
  const T zero = konst_like(p[0], 0.0);
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) dg[k][i][j] = zero;
    if (!m.dbeta[k].is_zero()) dg[k][0][0] = -m.dbeta[k].eval(p);
    for (int a = 0; a < m.n; ++a)
      for (int b = a; b < m.n; ++b) {
        const ScalarField& f = m.dg0[k][m.packed(a, b)];
        if (f.is_zero()) continue;
        dg[k][a + 1][b + 1] = f.eval(p);
        dg[k][b + 1][a + 1] = dg[k][a + 1][b + 1];
      }
  }
}

/// Gam[i][j][k] = Gamma^i_{jk}.
template <class T> void christoffel_at(const MetricSpec& m, const T* p, T Gam[3][3][3]) {
  const int d = m.dim();
  T g[3][3], gi[3][3], dg[3][3][3];
  metric_at(m, p, g);
  inv_n(g, gi, d);
  metric_deriv_at(m, p, dg);
  T low[3][3][3];  // Gamma_{ljk}
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < d; ++j)
      for (int k = j; k < d; ++k) {
        low[l][j][k] = scale_by(dg[j][l][k] + dg[k][l][j] - dg[l][j][k], 0.5);
        low[l][k][j] = low[l][j][k];
      }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = j; k < d; ++k) {
        T acc = gi[i][0] * low[0][j][k];
        for (int l = 1; l < d; ++l) acc = acc + gi[i][l] * low[l][j][k];
        Gam[i][j][k] = acc;
        Gam[i][k][j] = acc;
      }
}

// ---- public double-precision API ----

struct SpacetimePoint {
  double t = 0.0;
  std::vector<double> x;
};

enum class Variance { Vector, Covector };

struct TangentObject {
  SpacetimePoint base;
  std::vector<double> comp;  // (t, x...) slots
  Variance variance = Variance::Vector;
};

struct MetricEval {
  int dim = 2;
  std::array<std::array<double, 3>, 3> g{}, ginv{};
};

using Christoffel = std::array<std::array<std::array<double, 3>, 3>, 3>;

enum class CausalType { Timelike, Null, Spacelike };

struct CausalResult {
  CausalType type = CausalType::Null;
  double residual = 0.0;  // raw g(v,v) (or g^{-1}(v,v) for covectors)
};

const char* to_string(CausalType c);

/// Throws Error("domain") outside [0,T] x M and Error("degeneracy") if g is singular.
MetricEval eval_metric(const MetricSpec& m, const SpacetimePoint& p);
/// Throws Error("stencil") when a finite-difference stencil leaves the domain.
Christoffel christoffel(const MetricSpec& m, const SpacetimePoint& p);
CausalResult causal_character(const MetricSpec& m, const TangentObject& v, double tau_null = 1e-9);
TangentObject musical(const MetricSpec& m, const TangentObject& v);
/// Number of negative eigenvalues of g at p (1 for a Lorentzian metric).
int negative_eigenvalues(const MetricSpec& m, const SpacetimePoint& p);

// ---- sampled evaluation ----

namespace detail {
template <class T> void catmull_rom(const T& u, int deriv, T w[4]) {
  const T u2 = u * u, u3 = u2 * u;
  if (deriv == 0) {
    w[0] = scale_by(u2, 1.0) - scale_by(u3, 0.5) - scale_by(u, 0.5);
    w[1] = scale_by(u3, 1.5) - scale_by(u2, 2.5) + konst_like(u, 1.0);
    w[2] = scale_by(u2, 2.0) - scale_by(u3, 1.5) + scale_by(u, 0.5);
    w[3] = scale_by(u3, 0.5) - scale_by(u2, 0.5);
  } else if (deriv == 1) {
    w[0] = scale_by(u, 2.0) - scale_by(u2, 1.5) - konst_like(u, 0.5);
    w[1] = scale_by(u2, 4.5) - scale_by(u, 5.0);
    w[2] = scale_by(u, 4.0) - scale_by(u2, 4.5) + konst_like(u, 0.5);
    w[3] = scale_by(u2, 1.5) - scale_by(u, 1.0);
  } else if (deriv == 2) {
    w[0] = konst_like(u, 2.0) - scale_by(u, 3.0);
    w[1] = scale_by(u, 9.0) - konst_like(u, 5.0);
    w[2] = konst_like(u, 4.0) - scale_by(u, 9.0);
    w[3] = scale_by(u, 3.0) - konst_like(u, 1.0);
  } else if (deriv == 3) {
    w[0] = konst_like(u, -3.0);
    w[1] = konst_like(u, 9.0);
    w[2] = konst_like(u, -9.0);
    w[3] = konst_like(u, 3.0);
  } else {
    for (int k = 0; k < 4; ++k) w[k] = konst_like(u, 0.0);
  }
}
} // namespace detail

template <class T> T SampledMetric::eval(int comp, const T* p, const std::array<int, 3>& dord) const {
  const int d = n + 1;
  int base[3] = {0, 0, 0};
  T w[3][4];
  for (int a = 0; a < d; ++a) {
    const double h = (hi[a] - lo[a]) / (nodes[a] - 1);
    const double s = (value_of(p[a]) - lo[a]) / h;
    int i = static_cast<int>(std::floor(s));
    i = std::max(0, std::min(nodes[a] - 2, i));
    base[a] = i;
    T u = scale_by(p[a] - konst_like(p[0], lo[a]), 1.0 / h) - konst_like(p[0], double(i));
    detail::catmull_rom(u, dord[a], w[a]);
    if (dord[a] > 0)
      for (int k = 0; k < 4; ++k) w[a][k] = scale_by(w[a][k], std::pow(1.0 / h, dord[a]));
  }
  T acc = konst_like(p[0], 0.0);
  if (d == 2) {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        acc = acc + scale_by(w[0][i] * w[1][j], at(comp, base[0] - 1 + i, base[1] - 1 + j, 0));
  } else {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        T wij = w[0][i] * w[1][j];
        for (int k = 0; k < 4; ++k)
          acc = acc + scale_by(wij * w[2][k], at(comp, base[0] - 1 + i, base[1] - 1 + j, base[2] - 1 + k));
      }
  }
  return acc;
}

} // namespace beamlab
