#include "beamlab/causal_geom.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <queue>

namespace beamlab {

namespace {

using V3 = std::array<double, 3>;

struct Frame {
  double g[3][3], gi[3][3];
};

Frame metric_frame(const MetricSpec& m, const V3& x) {
  Frame f;
  metric_at(m, x.data(), f.g);
  inv_n(f.g, f.gi, m.dim());
  return f;
}

double quad(const double q[3][3], const V3& a, const V3& b, int d) {
  double r = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r += q[i][j] * a[i] * b[j];
  return r;
}

V3 apply(const double q[3][3], const V3& a, int d) {
  V3 r{};
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r[i] += q[i][j] * a[j];
  return r;
}

double norm2e(const V3& a, int d) {
  double r = 0;
  for (int i = 0; i < d; ++i) r += a[i] * a[i];
  return r;
}

// Hamiltonian flow of H = g^{ij} p_i p_j / 2 in (x, p).
struct State {
  V3 x{}, p{};
};

State rhs(const MetricSpec& m, const State& y) {
  const int d = m.dim();
  double g[3][3], gi[3][3], dg[3][3][3];
  metric_at(m, y.x.data(), g);
  inv_n(g, gi, d);
  metric_deriv_at(m, y.x.data(), dg);
  State r;
  r.x = apply(gi, y.p, d);
  for (int k = 0; k < d; ++k) r.p[k] = 0.5 * quad(dg[k], r.x, r.x, d);
  return r;
}

State axpy(const State& y, double h, const State& k) {
  State r = y;
  for (int i = 0; i < 3; ++i) {
    r.x[i] += h * k.x[i];
    r.p[i] += h * k.p[i];
  }
  return r;
}

State rk4(const MetricSpec& m, const State& y, double h) {
  State k1 = rhs(m, y);
  State k2 = rhs(m, axpy(y, 0.5 * h, k1));
  State k3 = rhs(m, axpy(y, 0.5 * h, k2));
  State k4 = rhs(m, axpy(y, h, k3));
  State r = y;
  for (int i = 0; i < 3; ++i) {
    r.x[i] += h / 6 * (k1.x[i] + 2 * k2.x[i] + 2 * k3.x[i] + k4.x[i]);
    r.p[i] += h / 6 * (k1.p[i] + 2 * k2.p[i] + 2 * k3.p[i] + k4.p[i]);
  }
  return r;
}

enum class Hit { None, Lateral, Initial, Final };

// Largest violation among the three ways of leaving [0,T] x M.
std::pair<double, Hit> outside(const MetricSpec& m, const V3& x) {
  double lat = m.domain.level(x.data() + 1);
  double c0 = -x[0], c1 = x[0] - m.T;
  if (lat >= c0 && lat >= c1) return {lat, Hit::Lateral};
  if (c0 >= c1) return {c0, Hit::Initial};
  return {c1, Hit::Final};
}

GeodesicNode make_node(const MetricSpec& m, double s, const State& y) {
  const int d = m.dim();
  Frame f = metric_frame(m, y.x);
  GeodesicNode nd;
  nd.s = s;
  nd.x = y.x;
  nd.p = y.p;
  nd.v = apply(f.gi, y.p, d);
  nd.null_defect = std::fabs(quad(f.g, nd.v, nd.v, d)) / norm2e(nd.v, d);
  return nd;
}

V3 outward_covector(const MetricSpec& m, const V3& x) {
  auto o = m.domain.outward(x.data() + 1);
  return {0.0, o[0], m.n == 2 ? o[1] : 0.0};
}

} // namespace

const char* to_string(GeodesicEnd e) {
  switch (e) {
    case GeodesicEnd::LateralBoundary: return "lateral";
    case GeodesicEnd::InitialCap: return "t=0";
    case GeodesicEnd::FinalCap: return "t=T";
    case GeodesicEnd::MaxReflections: return "max-reflections";
    case GeodesicEnd::ParameterLimit: return "parameter-limit";
  }
  return "?";
}

V3 boundary_normal(const MetricSpec& m, const V3& x) {
  const int d = m.dim();
  Frame f = metric_frame(m, x);
  V3 n = outward_covector(m, x);
  V3 v = apply(f.gi, n, d);
  double s = std::sqrt(quad(f.gi, n, n, d));
  for (auto& c : v) c /= s;
  return v;
}

TangentObject reflect_at_boundary(const MetricSpec& m, const SpacetimePoint& at, const TangentObject& xi_in,
                                  double tau_trans) {
  const int d = m.dim();
  if (static_cast<int>(xi_in.comp.size()) != d) throw Error("input", "tangent object has wrong length");
  V3 x{at.t, 0, 0};
  for (int a = 0; a < m.n; ++a) x[a + 1] = at.x[a];
  if (std::fabs(m.domain.level(x.data() + 1)) > 1e-8 * std::max(1.0, m.domain.diameter()))
    throw Error("domain", "reflection point is not on the lateral boundary");
  Frame f = metric_frame(m, x);
  V3 nu = boundary_normal(m, x);
  V3 xi{};
  for (int i = 0; i < d; ++i) xi[i] = xi_in.comp[i];
  // work with the vector form; covectors are raised and lowered back
  if (xi_in.variance == Variance::Covector) xi = apply(f.gi, xi, d);
  double gn = quad(f.g, xi, nu, d);
  if (std::fabs(gn) < tau_trans * std::sqrt(norm2e(xi, d)))
    throw Error("tangency", "grazing incidence at the lateral boundary");
  V3 out{};
  for (int i = 0; i < d; ++i) out[i] = xi[i] - 2 * gn * nu[i];
  if (xi_in.variance == Variance::Covector) out = apply(f.g, out, d);
  TangentObject r;
  r.base = at;
  r.variance = xi_in.variance;
  r.comp.assign(out.begin(), out.begin() + d);
  return r;
}

BrokenNullGeodesic shoot_null_geodesic(const MetricSpec& m, const SpacetimePoint& p, const TangentObject& xi,
                                       const ShootOptions& opt) {
  const int d = m.dim();
  if (static_cast<int>(xi.comp.size()) != d) throw Error("input", "tangent object has wrong length");
  {
    auto c = causal_character(m, TangentObject{p, xi.comp, xi.variance}, opt.tau_null);
    if (c.type != CausalType::Null) throw Error("input", "initial direction is not null");
  }
  const double h = opt.step > 0 ? opt.step : 1e-3 * m.T;
  const double s_max = opt.s_max > 0 ? opt.s_max : 50.0 * m.T;

  State y;
  y.x = {p.t, 0, 0};
  for (int a = 0; a < m.n; ++a) y.x[a + 1] = p.x[a];
  for (int i = 0; i < d; ++i) y.p[i] = xi.comp[i];
  if (xi.variance == Variance::Vector) {
    Frame f = metric_frame(m, y.x);
    y.p = apply(f.g, y.p, d);
  }

  BrokenNullGeodesic out;
  double s = 0.0;
  out.segments.push_back({s, s, {make_node(m, s, y)}});
  auto push = [&](double sn, const State& yn) {
    GeodesicNode nd = make_node(m, sn, yn);
    if (!(nd.null_defect <= opt.tau_null))
      throw Error("stiffness", "null defect " + std::to_string(nd.null_defect) + " exceeds tolerance");
    out.max_null_defect = std::max(out.max_null_defect, nd.null_defect);
    out.segments.back().nodes.push_back(nd);
    out.segments.back().s1 = sn;
  };

  while (s < s_max) {
    State yn = rk4(m, y, h);
    auto [viol, kind] = outside(m, yn.x);
    if (viol <= 0) {
      s += h;
      y = yn;
      push(s, y);
      continue;
    }
    // bisection on the partial step
    double a = 0, b = h;
    State yb = yn;
    while (b - a > opt.event_tol) {
      double c = 0.5 * (a + b);
      State yc = rk4(m, y, c);
      if (outside(m, yc.x).first > 0) {
        b = c;
        yb = yc;
      } else {
        a = c;
      }
    }
    kind = outside(m, yb.x).second;
    s += b;
    y = yb;
    push(s, y);
    if (kind == Hit::Initial) {
      out.end = GeodesicEnd::InitialCap;
      return out;
    }
    if (kind == Hit::Final) {
      out.end = GeodesicEnd::FinalCap;
      return out;
    }
    // project onto the boundary so the reflection point lies on Sigma
    {
      auto lo = m.domain.box_lo(), hi = m.domain.box_hi();
      if (m.domain.kind == DomainKind::Disk) {
        double dx = y.x[1] - m.domain.cx, dy = y.x[2] - m.domain.cy, r = std::hypot(dx, dy);
        y.x[1] = m.domain.cx + dx * m.domain.radius / r;
        y.x[2] = m.domain.cy + dy * m.domain.radius / r;
      } else {
        for (int a2 = 0; a2 < m.n; ++a2) y.x[a2 + 1] = std::clamp(y.x[a2 + 1], lo[a2], hi[a2]);
      }
    }
    const bool stop = opt.stop_at_boundary || static_cast<int>(out.reflection_params.size()) >= opt.max_reflections;
    if (stop) {
      out.end = opt.stop_at_boundary ? GeodesicEnd::LateralBoundary : GeodesicEnd::MaxReflections;
      out.s_exit = s;
      return out;
    }
    SpacetimePoint at{y.x[0], std::vector<double>(y.x.begin() + 1, y.x.begin() + 1 + m.n)};
    TangentObject pin{at, std::vector<double>(y.p.begin(), y.p.begin() + d), Variance::Covector};
    TangentObject pout = reflect_at_boundary(m, at, pin, opt.tau_trans);
    for (int i = 0; i < d; ++i) y.p[i] = pout.comp[i];
    out.reflection_params.push_back(s);
    out.reflection_points.push_back(y.x);
    out.segments.push_back({s, s, {make_node(m, s, y)}});
  }
  out.end = GeodesicEnd::ParameterLimit;
  return out;
}

void write_geodesic_csv(std::ostream& os, const BrokenNullGeodesic& g, int n) {
  os << "segment,s,t,x" << (n == 2 ? ",y" : "") << ",xi_t,xi_x" << (n == 2 ? ",xi_y" : "") << ",null_defect\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < g.segments.size(); ++k)
    for (const auto& nd : g.segments[k].nodes) {
      os << k << ',' << nd.s;
      for (int i = 0; i <= n; ++i) os << ',' << nd.x[i];
      for (int i = 0; i <= n; ++i) os << ',' << nd.v[i];
      os << ',' << nd.null_defect << '\n';
    }
}

// ---------------- null convexity ----------------

ConvexityReport null_convexity_scan(const MetricSpec& m, int nb_points, int nt, double tau_II) {
  ConvexityReport rep;
  rep.min_II = 0.0;
  if (m.n == 1) return rep;
  const int d = 3;
  const auto& D = m.domain;

  // boundary samples with Euclidean unit tangent
  std::vector<std::pair<std::array<double, 2>, std::array<double, 2>>> pts;
  if (D.kind == DomainKind::Disk) {
    for (int k = 0; k < nb_points; ++k) {
      double a = 2 * M_PI * (k + 0.5) / nb_points;
      pts.push_back({{D.cx + D.radius * std::cos(a), D.cy + D.radius * std::sin(a)}, {-std::sin(a), std::cos(a)}});
    }
  } else {
    const int per = std::max(1, nb_points / 4);
    for (int k = 0; k < per; ++k) {
      double u = (k + 0.5) / per;
      pts.push_back({{u * D.lx, 0.0}, {1, 0}});
      pts.push_back({{u * D.lx, D.ly}, {1, 0}});
      pts.push_back({{0.0, u * D.ly}, {0, 1}});
      pts.push_back({{D.lx, u * D.ly}, {0, 1}});
    }
  }
  const double hfd = 1e-5 * D.diameter();
  // unit normal field extended off the boundary with the same outward covector
  auto nu_field = [&](const V3& x, const V3& ncov) {
    Frame f = metric_frame(m, x);
    V3 v = apply(f.gi, ncov, d);
    double s = std::sqrt(quad(f.gi, ncov, ncov, d));
    for (auto& c : v) c /= s;
    return v;
  };
  bool first = true;
  for (int it = 0; it < nt; ++it) {
    const double t = m.T * (it + 0.5) / nt;
    for (const auto& [xb, tan] : pts) {
      V3 x{t, xb[0], xb[1]};
      V3 ncov = outward_covector(m, x);
      Frame f = metric_frame(m, x);
      // null directions in span{d_t, tangent}
      V3 u1{1, 0, 0}, u2{0, tan[0], tan[1]};
      double A = quad(f.g, u2, u2, d), B = quad(f.g, u1, u2, d), C = quad(f.g, u1, u1, d);
      double disc = B * B - A * C;
      if (disc < 0) continue;
      for (double sgn : {-1.0, 1.0}) {
        double c = (-B + sgn * std::sqrt(disc)) / A;
        V3 V{1, c * tan[0], c * tan[1]};
        auto cov = [&](const V3& y) {
          // disk normals rotate with the point; faces keep a fixed covector
          if (D.kind == DomainKind::Disk) {
            double dx = y[1] - D.cx, dy = y[2] - D.cy, r = std::hypot(dx, dy);
            return V3{0, dx / r, dy / r};
          }
          return ncov;
        };
        V3 nu = nu_field(x, ncov);
        V3 dnu{};  // V^j d_j nu
        for (int j = 0; j < d; ++j) {
          V3 xp = x, xm = x;
          xp[j] += hfd;
          xm[j] -= hfd;
          V3 np = nu_field(xp, cov(xp)), nm = nu_field(xm, cov(xm));
          for (int i = 0; i < d; ++i) dnu[i] += V[j] * (np[i] - nm[i]) / (2 * hfd);
        }
        double G[3][3][3];
        christoffel_at(m, x.data(), G);
        V3 cov_d = dnu;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) cov_d[i] += G[i][j][k] * V[j] * nu[k];
        double II = quad(f.g, cov_d, V, d);
        ++rep.samples;
        if (first || II < rep.min_II) {
          rep.min_II = II;
          rep.argmin_point = x;
          rep.argmin_vector = V;
          first = false;
        }
      }
    }
  }
  rep.violated = rep.min_II < -tau_II;
  return rep;
}

// ---------------- lattice and recoverable set ----------------

Lattice Lattice::make(const MetricSpec& m, int nt, int nx, int ny) {
  if (nt < 2 || nx < 2 || (m.n == 2 && ny < 2)) throw Error("config", "lattice needs at least 2 nodes per axis");
  Lattice L;
  L.n = m.n;
  L.dims = {nt, nx, m.n == 2 ? ny : 1};
  auto lo = m.domain.box_lo(), hi = m.domain.box_hi();
  L.lo = {0.0, lo[0], lo[1]};
  L.hi = {m.T, hi[0], m.n == 2 ? hi[1] : lo[1] + 1.0};
  return L;
}

namespace {

// Travel time across a spatial step dx starting at time t from midpoint xm.
double step_time(const MetricSpec& m, double t, const V3& xm, const std::array<double, 2>& dx, double sign) {
  auto eval = [&](double tt) {
    V3 q{std::clamp(tt, 0.0, m.T), xm[1], xm[2]};
    double g[3][3];
    metric_at(m, q.data(), g);
    double l2 = g[1][1] * dx[0] * dx[0];
    if (m.n == 2) l2 += 2 * g[1][2] * dx[0] * dx[1] + g[2][2] * dx[1] * dx[1];
    return std::sqrt(l2 / -g[0][0]);
  };
  double dt0 = eval(t);
  return eval(t + sign * 0.5 * dt0);
}

} // namespace

ReachableSet reachable_set(const MetricSpec& m, const Lattice& lat) {
  ReachableSet R;
  R.lat = lat;
  const int nx = lat.dims[1], ny = lat.dims[2];
  const std::size_t ns = lat.spatial_size();
  const double tol = 1e-9 * m.domain.diameter();
  std::vector<std::uint8_t> inside(ns, 0), boundary(ns, 0);
  auto sx = [&](int ix, int iy) { return std::array<double, 2>{lat.coord(1, ix), m.n == 2 ? lat.coord(2, iy) : 0.0}; };
  auto sid = [&](int ix, int iy) { return std::size_t(ix) * ny + iy; };
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) {
      auto x = sx(ix, iy);
      inside[sid(ix, iy)] = m.domain.level(x.data()) <= tol;
    }
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) {
      if (!inside[sid(ix, iy)]) continue;
      bool b = false;
      const int nbr[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& o : nbr) {
        if (m.n == 1 && o[1] != 0) continue;
        int jx = ix + o[0], jy = iy + o[1];
        if (jx < 0 || jx >= nx || jy < 0 || jy >= ny || !inside[sid(jx, jy)]) b = true;
      }
      boundary[sid(ix, iy)] = b;
    }

  std::vector<std::array<int, 2>> offs;
  if (m.n == 1) {
    offs = {{1, 0}, {-1, 0}};
  } else {
    for (int a = -2; a <= 2; ++a)
      for (int b = -2; b <= 2; ++b) {
        if ((a == 0 && b == 0) || std::gcd(std::abs(a), std::abs(b)) != 1) continue;
        offs.push_back({a, b});
      }
  }

  const double inf = std::numeric_limits<double>::infinity();
  auto sweep = [&](bool forward) {
    std::vector<double> T(ns, forward ? inf : -inf);
    using Item = std::pair<double, std::size_t>;
    auto cmp = [forward](const Item& a, const Item& b) { return forward ? a.first > b.first : a.first < b.first; };
    std::priority_queue<Item, std::vector<Item>, decltype(cmp)> pq(cmp);
    for (std::size_t k = 0; k < ns; ++k)
      if (boundary[k]) {
        T[k] = forward ? 0.0 : m.T;
        pq.push({T[k], k});
      }
    while (!pq.empty()) {
      auto [tk, k] = pq.top();
      pq.pop();
      if (tk != T[k]) continue;
      const int ix = static_cast<int>(k / ny), iy = static_cast<int>(k % ny);
      for (const auto& o : offs) {
        int jx = ix + o[0], jy = iy + o[1];
        if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
        std::size_t j = sid(jx, jy);
        if (!inside[j]) continue;
        auto a = sx(ix, iy), b = sx(jx, jy);
        V3 xm{0, 0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
        double dt = step_time(m, tk, xm, {b[0] - a[0], b[1] - a[1]}, forward ? 1.0 : -1.0);
        double tn = forward ? tk + dt : tk - dt;
        if (forward ? tn < T[j] : tn > T[j]) {
          T[j] = tn;
          pq.push({tn, j});
        }
      }
    }
    return T;
  };
  R.arrival = sweep(true);
  R.departure = sweep(false);
  R.mask.assign(lat.size(), 0);
  for (int it = 0; it < lat.dims[0]; ++it) {
    const double t = lat.coord(0, it);
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy) {
        std::size_t k = sid(ix, iy);
        if (inside[k] && R.arrival[k] < t && t < R.departure[k]) R.mask[lat.index(it, ix, iy)] = 1;
      }
  }
  return R;
}

bool ReachableSet::contains(const SpacetimePoint& p) const {
  const int nx = lat.dims[1], ny = lat.dims[2];
  auto frac = [&](int a, double x, int nmax) {
    double u = (x - lat.lo[a]) / lat.h(a);
    int i = std::clamp(static_cast<int>(std::floor(u)), 0, nmax - 2);
    return std::pair<int, double>{i, std::clamp(u - i, 0.0, 1.0)};
  };
  auto [ix, ux] = frac(1, p.x[0], nx);
  int iy = 0;
  double uy = 0;
  if (lat.n == 2) std::tie(iy, uy) = frac(2, p.x[1], ny);
  double arr = 0, dep = 0, wsum = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < (lat.n == 2 ? 2 : 1); ++b) {
      std::size_t k = std::size_t(ix + a) * ny + (iy + b);
      double w = (a ? ux : 1 - ux) * (lat.n == 2 ? (b ? uy : 1 - uy) : 1.0);
      if (w == 0) continue;
      if (!std::isfinite(arrival[k]) || !std::isfinite(departure[k])) return false;
      arr += w * arrival[k];
      dep += w * departure[k];
      wsum += w;
    }
  if (wsum == 0) return false;
  return arr / wsum < p.t && p.t < dep / wsum;
}

// ---------------- covector selection ----------------

std::array<double, 3> null_covector(const MetricSpec& m, const SpacetimePoint& p, const std::array<double, 2>& omega) {
  MetricEval e = eval_metric(m, p);
  double w2 = 0;
  for (int a = 0; a < m.n; ++a)
    for (int b = 0; b < m.n; ++b) w2 += e.ginv[a + 1][b + 1] * omega[a] * omega[b];
  // g^{00} theta_0^2 + w2 = 0 with g^{00} = -1/beta
  double tau = std::sqrt(-w2 / e.ginv[0][0]);
  return {tau, omega[0], m.n == 2 ? omega[1] : 0.0};
}

namespace {

double min_separation(const BrokenNullGeodesic& a, const BrokenNullGeodesic& b, const V3& p, double r0) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& sa : a.segments)
    for (const auto& na : sa.nodes) {
      double da = 0;
      for (int i = 0; i < 3; ++i) da += (na.x[i] - p[i]) * (na.x[i] - p[i]);
      if (std::sqrt(da) < r0) continue;
      for (const auto& sb : b.segments)
        for (const auto& nb : sb.nodes) {
          double dd = 0;
          for (int i = 0; i < 3; ++i) dd += (na.x[i] - nb.x[i]) * (na.x[i] - nb.x[i]);
          best = std::min(best, dd);
        }
    }
  return std::sqrt(best);
}

} // namespace

CovectorSelection select_beam_covectors(const MetricSpec& m, const SpacetimePoint& p, int beams,
                                        const ReachableSet* reach, int sweep,
                                        const std::function<bool(const BrokenNullGeodesic&)>& extra) {
  if (beams < 4) throw Error("input", "beam count must be at least 4");
  if (reach && !reach->contains(p)) throw Error("unreachable", "point lies outside the recoverable set");
  const int d = m.dim();
  MetricEval e = eval_metric(m, p);
  const V3 pv{p.t, p.x[0], m.n == 2 ? p.x[1] : 0.0};

  ShootOptions so;
  so.stop_at_boundary = true;
  for (int k = 0; k < (m.n == 1 ? 1 : sweep); ++k) {
    const double alpha = 2 * M_PI * k / sweep;
    CovectorSelection out;
    out.base_angle = alpha;
    out.sweep_index = k;
    std::array<V3, 4> th;
    if (m.n == 1) {
      V3 a = null_covector(m, p, {1.0, 0.0}), b = null_covector(m, p, {-1.0, 0.0});
      th = {a, b, V3{-a[0], -a[1], 0}, V3{-b[0], -b[1], 0}};
      out.kappa = {1, 1, 1, 1};
    } else {
      Eigen::Matrix<double, 3, 4> M;
      for (int j = 0; j < 4; ++j) {
        double ang = alpha + j * M_PI / 2;
        th[j] = null_covector(m, p, {std::cos(ang), std::sin(ang)});
        for (int i = 0; i < 3; ++i) M(i, j) = th[j][i];
      }
      Eigen::FullPivLU<Eigen::Matrix<double, 3, 4>> lu(M);
      Eigen::MatrixXd ker = lu.kernel();
      if (ker.cols() != 1) continue;
      Eigen::Vector4d kap = ker.col(0);
      kap /= kap.cwiseAbs().maxCoeff();
      bool ok = true;
      for (int j = 0; j < 4; ++j) {
        if (std::fabs(kap(j)) < 1e-6) ok = false;
        if (kap(j) < 0) {
          kap(j) = -kap(j);
          for (auto& c : th[j]) c = -c;
        }
        out.kappa[j] = kap(j);
      }
      if (!ok) continue;
      double sc = out.kappa[0];
      for (auto& kj : out.kappa) kj /= sc;
    }
    out.theta = th;
    double clo = 0;
    for (int i = 0; i < d; ++i) {
      double s = 0;
      for (int j = 0; j < 4; ++j) s += out.kappa[j] * th[j][i];
      clo = std::max(clo, std::fabs(s));
    }
    out.closure = clo;

    bool admissible = true;
    for (int j = 0; j < 4 && admissible; ++j) {
      V3 v{};
      for (int i = 0; i < d; ++i)
        for (int l = 0; l < d; ++l) v[i] += e.ginv[i][l] * th[j][l];
      std::vector<double> fwd(v.begin(), v.begin() + d), bwd(d);
      for (int i = 0; i < d; ++i) bwd[i] = -fwd[i];
      if (v[0] < 0) std::swap(fwd, bwd);
      try {
        out.future[j] = shoot_null_geodesic(m, p, {p, fwd, Variance::Vector}, so);
        out.past[j] = shoot_null_geodesic(m, p, {p, bwd, Variance::Vector}, so);
      } catch (const Error&) {
        admissible = false;
        break;
      }
      admissible = out.future[j].end == GeodesicEnd::LateralBoundary && out.past[j].end == GeodesicEnd::LateralBoundary;
      if (admissible && extra) admissible = extra(out.past[j]) && extra(out.future[j]);
    }
    if (!admissible) continue;
    if (m.n == 2) {
      const double r0 = 0.1 * m.domain.diameter(), sep = 1e-2 * m.domain.diameter();
      for (int a = 0; a < 4 && admissible; ++a)
        for (int b = a + 1; b < 4 && admissible; ++b)
          for (const auto* ga : {&out.past[a], &out.future[a]})
            for (const auto* gb : {&out.past[b], &out.future[b]})
              if (min_separation(*ga, *gb, pv, r0) < sep) admissible = false;
    }
    if (!admissible) continue;
    out.multiplicity = {0, 1, 2};
    for (int r = 3; r < beams; ++r) out.multiplicity.push_back(3);
    return out;
  }
  throw Error("selection", "no admissible covector quadruple in the direction sweep");
}

} // namespace beamlab
