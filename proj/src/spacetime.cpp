#include "beamlab/spacetime.hpp"

#include "beamlab/grid_io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace beamlab {

// ---------------- domain ----------------

double SpatialDomain::level(const double* x) const {
  switch (kind) {
    case DomainKind::Interval: return std::max(-x[0], x[0] - lx);
    case DomainKind::Rectangle:
      return std::max(std::max(-x[0], x[0] - lx), std::max(-x[1], x[1] - ly));
    case DomainKind::Disk: return std::hypot(x[0] - cx, x[1] - cy) - radius;
  }
  return 0.0;
}

double SpatialDomain::diameter() const {
  switch (kind) {
    case DomainKind::Interval: return lx;
    case DomainKind::Rectangle: return std::hypot(lx, ly);
    case DomainKind::Disk: return 2.0 * radius;
  }
  return 1.0;
}

std::array<double, 2> SpatialDomain::outward(const double* x) const {
  switch (kind) {
    case DomainKind::Interval: return {(-x[0] > x[0] - lx) ? -1.0 : 1.0, 0.0};
    case DomainKind::Rectangle: {
      const double v[4] = {-x[0], x[0] - lx, -x[1], x[1] - ly};
      int k = static_cast<int>(std::max_element(v, v + 4) - v);
      static const double nx[4] = {-1, 1, 0, 0}, ny[4] = {0, 0, -1, 1};
      return {nx[k], ny[k]};
    }
    case DomainKind::Disk: {
      double dx = x[0] - cx, dy = x[1] - cy, r = std::hypot(dx, dy);
      if (r == 0) return {1.0, 0.0};
      return {dx / r, dy / r};
    }
  }
  return {1.0, 0.0};
}

std::array<double, 2> SpatialDomain::box_lo() const {
  if (kind == DomainKind::Disk) return {cx - radius, cy - radius};
  return {0.0, 0.0};
}
std::array<double, 2> SpatialDomain::box_hi() const {
  if (kind == DomainKind::Disk) return {cx + radius, cy + radius};
  return {lx, kind == DomainKind::Interval ? 0.0 : ly};
}

// ---------------- sampled metric ----------------

double SampledMetric::at(int comp, int it, int ix, int iy) const {
  const int idx[3] = {it, ix, iy};
  for (int a = 0; a <= n; ++a) {
    if (idx[a] < 0) {
      int lo1[3] = {it, ix, iy}, lo2[3] = {it, ix, iy};
      lo1[a] = 0;
      lo2[a] = 1;
      return 2.0 * at(comp, lo1[0], lo1[1], lo1[2]) - at(comp, lo2[0], lo2[1], lo2[2]);
    }
    if (idx[a] >= nodes[a]) {
      int h1[3] = {it, ix, iy}, h2[3] = {it, ix, iy};
      h1[a] = nodes[a] - 1;
      h2[a] = nodes[a] - 2;
      return 2.0 * at(comp, h1[0], h1[1], h1[2]) - at(comp, h2[0], h2[1], h2[2]);
    }
  }
  std::size_t k = static_cast<std::size_t>(comp);
  k = k * nodes[0] + it;
  k = k * nodes[1] + ix;
  if (n == 2) k = k * nodes[2] + iy;
  return data[k];
}

ScalarField ScalarField::derivative(int var) const {
  ScalarField f;
  if (grid) {
    f = *this;
    f.dord[var] += 1;
    return f;
  }
  f.expr = expr.derivative(var);
  return f;
}

// ---------------- metric spec ----------------

std::vector<std::string> coordinate_names(int n) {
  if (n == 1) return {"t", "x"};
  return {"t", "x", "y"};
}

void MetricSpec::finalize() {
  if (n != 1 && n != 2) throw Error("config", "metric.n must be 1 or 2");
  if (!(T > 0)) throw Error("config", "metric.T must be positive");
  if (domain.dim() != n) throw Error("config", "metric.domain dimension does not match metric.n");
  const size_t want = n == 1 ? 1 : 3;
  if (g0.size() != want) throw Error("config", "metric.g0 needs " + std::to_string(want) + " components");
  for (int k = 0; k <= n; ++k) {
    dbeta[k] = beta.derivative(k);
    dg0[k].clear();
    for (const auto& f : g0) dg0[k].push_back(f.derivative(k));
  }
}

MetricSpec MetricSpec::minkowski(int n, double T, const SpatialDomain& dom) {
  MetricSpec m;
  m.kind = "minkowski";
  m.n = n;
  m.T = T;
  m.domain = dom;
  m.beta.expr = Expr(1.0);
  if (n == 1) m.g0 = {ScalarField{Expr(1.0)}};
  else m.g0 = {ScalarField{Expr(1.0)}, ScalarField{Expr(0.0)}, ScalarField{Expr(1.0)}};
  m.finalize();
  return m;
}

MetricSpec MetricSpec::conformal(int n, double T, const SpatialDomain& dom, const std::string& factor) {
  MetricSpec m;
  m.kind = "conformal";
  m.n = n;
  m.T = T;
  m.domain = dom;
  Expr c = Expr::parse(factor, coordinate_names(n));
  m.beta.expr = c;
  if (n == 1) m.g0 = {ScalarField{c}};
  else m.g0 = {ScalarField{c}, ScalarField{Expr(0.0)}, ScalarField{c}};
  m.description = factor;
  m.finalize();
  return m;
}

MetricSpec MetricSpec::custom(int n, double T, const SpatialDomain& dom, const std::string& beta,
                              const std::vector<std::string>& g0) {
  MetricSpec m;
  m.kind = "custom";
  m.n = n;
  m.T = T;
  m.domain = dom;
  auto names = coordinate_names(n);
  m.beta.expr = Expr::parse(beta, names);
  for (const auto& s : g0) m.g0.push_back(ScalarField{Expr::parse(s, names)});
  m.finalize();
  return m;
}

MetricSpec MetricSpec::sampled(int n, double T, const SpatialDomain& dom, const std::string& path) {
  GridFile gf = read_grid(path);
  const size_t ncomp = n == 1 ? 2 : 4;
  if (gf.dims.size() != static_cast<size_t>(n + 2) || gf.dims[0] != ncomp)
    throw Error("config", "sample file " + path + " must have dims (" + std::to_string(ncomp) + ", nt, nx" +
                              (n == 2 ? ", ny)" : ")"));
  auto s = std::make_shared<SampledMetric>();
  s->n = n;
  s->ncomp = static_cast<int>(ncomp);
  s->lo = {0.0, dom.box_lo()[0], dom.box_lo()[1]};
  s->hi = {T, dom.box_hi()[0], dom.box_hi()[1]};
  for (int a = 0; a <= n; ++a) {
    s->nodes[a] = static_cast<int>(gf.dims[a + 1]);
    if (s->nodes[a] < 4) throw Error("config", "sample file needs at least 4 nodes per axis");
  }
  s->data = std::move(gf.data);
  MetricSpec m;
  m.kind = "custom-sampled";
  m.n = n;
  m.T = T;
  m.domain = dom;
  m.beta.grid = s;
  m.beta.comp = 0;
  for (size_t c = 1; c < ncomp; ++c) {
    ScalarField f;
    f.grid = s;
    f.comp = static_cast<int>(c);
    m.g0.push_back(f);
  }
  m.description = path;
  m.finalize();
  return m;
}

SpatialDomain domain_from_json(const nlohmann::json& j, int n) {
  SpatialDomain d;
  std::string kind = j.value("kind", n == 1 ? "interval" : "rectangle");
  if (kind == "interval") {
    d.kind = DomainKind::Interval;
    d.lx = j.value("L", 1.0);
  } else if (kind == "rectangle") {
    d.kind = DomainKind::Rectangle;
    d.lx = j.value("Lx", 1.0);
    d.ly = j.value("Ly", 1.0);
  } else if (kind == "disk") {
    d.kind = DomainKind::Disk;
    d.cx = j.value("cx", 0.0);
    d.cy = j.value("cy", 0.0);
    d.radius = j.value("R", 1.0);
  } else {
    throw Error("config", "metric.domain.kind must be interval | rectangle | disk");
  }
  if (d.lx <= 0 || d.ly <= 0 || d.radius <= 0) throw Error("config", "metric.domain sizes must be positive");
  return d;
}

nlohmann::json domain_to_json(const SpatialDomain& d) {
  switch (d.kind) {
    case DomainKind::Interval: return {{"kind", "interval"}, {"L", d.lx}};
    case DomainKind::Rectangle: return {{"kind", "rectangle"}, {"Lx", d.lx}, {"Ly", d.ly}};
    case DomainKind::Disk: return {{"kind", "disk"}, {"cx", d.cx}, {"cy", d.cy}, {"R", d.radius}};
  }
  return {};
}

MetricSpec metric_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("config", "metric must be an object");
  const int n = j.value("n", 1);
  const double T = j.value("T", 1.0);
  if (n != 1 && n != 2) throw Error("config", "metric.n must be 1 or 2");
  SpatialDomain dom = domain_from_json(j.value("domain", nlohmann::json::object()), n);
  const std::string kind = j.value("kind", "minkowski");
  MetricSpec m;
  if (kind == "minkowski") {
    m = MetricSpec::minkowski(n, T, dom);
  } else if (kind == "conformal") {
    m = MetricSpec::conformal(n, T, dom, j.value("factor", "1"));
  } else if (kind == "custom") {
    std::vector<std::string> g0 = j.value("g0", std::vector<std::string>{});
    m = MetricSpec::custom(n, T, dom, j.value("beta", "1"), g0);
  } else if (kind == "custom-sampled") {
    if (!j.contains("samples")) throw Error("config", "metric.samples path required for custom-sampled");
    m = MetricSpec::sampled(n, T, dom, j.at("samples").get<std::string>());
  } else {
    throw Error("config", "metric.kind must be minkowski | conformal | custom | custom-sampled");
  }
  const std::string mode = j.value("derivative_mode", "analytic");
  if (mode == "analytic") m.mode = DerivativeMode::Analytic;
  else if (mode == "finite-difference") m.mode = DerivativeMode::FiniteDifference;
  else throw Error("config", "metric.derivative_mode must be analytic | finite-difference");
  m.h_fd = j.value("h_fd", 0.0);
  return m;
}

// ---------------- double API ----------------

const char* to_string(CausalType c) {
  switch (c) {
    case CausalType::Timelike: return "timelike";
    case CausalType::Null: return "null";
    case CausalType::Spacelike: return "spacelike";
  }
  return "?";
}

namespace {

void check_point(const MetricSpec& m, const SpacetimePoint& p) {
  if (static_cast<int>(p.x.size()) != m.n) throw Error("input", "point has wrong spatial dimension");
  const double tol = 1e-12 * std::max(1.0, m.T);
  if (p.t < -tol || p.t > m.T + tol) throw Error("domain", "t outside [0,T]");
  if (!m.domain.contains(p.x.data(), 1e-12 * std::max(1.0, m.domain.diameter())))
    throw Error("domain", "x outside the spatial domain");
}

std::array<double, 3> coords(const SpacetimePoint& p) {
  std::array<double, 3> c{p.t, 0.0, 0.0};
  for (size_t a = 0; a < p.x.size(); ++a) c[a + 1] = p.x[a];
  return c;
}

} // namespace

MetricEval eval_metric(const MetricSpec& m, const SpacetimePoint& p) {
  check_point(m, p);
  auto c = coords(p);
  double g[3][3], gi[3][3];
  metric_at(m, c.data(), g);
  const int d = m.dim();
  double scale = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) scale = std::max(scale, std::fabs(g[i][j]));
  double det = det_n(g, d);
  if (!(std::fabs(det) > 1e-14 * std::pow(scale, d))) throw Error("degeneracy", "metric is singular");
  inv_n(g, gi, d);
  MetricEval out;
  out.dim = d;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      out.g[i][j] = g[i][j];
      out.ginv[i][j] = gi[i][j];
    }
  return out;
}

Christoffel christoffel(const MetricSpec& m, const SpacetimePoint& p) {
  check_point(m, p);
  if (m.mode == DerivativeMode::FiniteDifference) {
    const double h = m.fd_step();
    SpacetimePoint q = p;
    bool ok = p.t - h >= 0 && p.t + h <= m.T;
    for (int a = 0; a < m.n && ok; ++a) {
      for (double s : {-h, h}) {
        q = p;
        q.x[a] += s;
        ok = ok && m.domain.contains(q.x.data(), 0.0);
      }
    }
    if (!ok) throw Error("stencil", "finite-difference stencil leaves the domain");
  }
  auto c = coords(p);
  double G[3][3][3];
  christoffel_at(m, c.data(), G);
  Christoffel out{};
  for (int i = 0; i < m.dim(); ++i)
    for (int j = 0; j < m.dim(); ++j)
      for (int k = 0; k < m.dim(); ++k) out[i][j][k] = G[i][j][k];
  return out;
}

CausalResult causal_character(const MetricSpec& m, const TangentObject& v, double tau_null) {
  const int d = m.dim();
  if (static_cast<int>(v.comp.size()) != d) throw Error("input", "tangent object has wrong length");
  double e2 = 0;
  for (double c : v.comp) e2 += c * c;
  if (e2 == 0) throw Error("input", "zero vector has no causal character");
  MetricEval me = eval_metric(m, v.base);
  const auto& q = v.variance == Variance::Vector ? me.g : me.ginv;
  double r = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r += q[i][j] * v.comp[i] * v.comp[j];
  CausalResult out;
  out.residual = r;
  if (std::fabs(r) <= tau_null * e2) out.type = CausalType::Null;
  else out.type = r < 0 ? CausalType::Timelike : CausalType::Spacelike;
  return out;
}

TangentObject musical(const MetricSpec& m, const TangentObject& v) {
  const int d = m.dim();
  if (static_cast<int>(v.comp.size()) != d) throw Error("input", "tangent object has wrong length");
  MetricEval me = eval_metric(m, v.base);
  const auto& q = v.variance == Variance::Vector ? me.g : me.ginv;
  TangentObject out;
  out.base = v.base;
  out.variance = v.variance == Variance::Vector ? Variance::Covector : Variance::Vector;
  out.comp.assign(d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out.comp[i] += q[i][j] * v.comp[j];
  return out;
}

int negative_eigenvalues(const MetricSpec& m, const SpacetimePoint& p) {
  MetricEval me = eval_metric(m, p);
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  for (int i = 0; i < me.dim; ++i)
    for (int j = 0; j < me.dim; ++j) g(i, j) = me.g[i][j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.topLeftCorner(me.dim, me.dim));
  int neg = 0;
  for (int i = 0; i < me.dim; ++i) neg += es.eigenvalues()(i) < 0;
  return neg;
}

} // namespace beamlab
