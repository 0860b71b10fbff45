#include "beamlab/fermi.hpp"

#include <algorithm>
#include <cmath>

namespace beamlab {

namespace {

template <class R> R gdot(const R g[3][3], const Vec3<R>& a, const Vec3<R>& b, int d) {
  R r(0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r += g[i][j] * a[i] * b[j];
  return r;
}

template <class R> Vec3<R> axpy3(const Vec3<R>& a, R c, const Vec3<R>& b) {
  return {a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]};
}

} // namespace

template <class R> void project_frame(const MetricSpec& m, ChartNode<R>& nd) {
  const int d = m.dim();
  R g[3][3];
  metric_at(m, nd.x.data(), g);
  R q00 = gdot(g, nd.e0, nd.e0, d), q01 = gdot(g, nd.e0, nd.e1, d), q11 = gdot(g, nd.e1, nd.e1, d);
  using std::isfinite;
  if (!(fabs(q01) > R(1e-12)) || !isfinite(to_double(q01))) throw Error("transport", "frame degenerated");
  // restore g(e0,e0) = 0 by the small root of q00 + 2c q01 + c^2 q11
  R disc = q01 * q01 - q00 * q11;
  R c = -q00 / (q01 + (q01 > R(0) ? sqrt(disc) : -sqrt(disc)));
  nd.e0 = axpy3(nd.e0, c, nd.e1);
  R a = gdot(g, nd.e0, nd.e1, d);
  for (auto& x : nd.e1) x = x / a;
  R q = gdot(g, nd.e1, nd.e1, d);
  nd.e1 = axpy3(nd.e1, -q / R(2), nd.e0);
  if (m.n == 2) {
    R c1 = gdot(g, nd.e2, nd.e1, d), c0 = gdot(g, nd.e2, nd.e0, d);
    nd.e2 = axpy3(axpy3(nd.e2, -c1, nd.e0), -c0, nd.e1);
    R nn = sqrt(gdot(g, nd.e2, nd.e2, d));
    for (auto& x : nd.e2) x = x / nn;
  } else {
    nd.e2 = {R(0), R(0), R(0)};
  }
}

template <class R> ChartNode<R> initial_frame(const MetricSpec& m, const Vec3<R>& x, const Vec3<R>& v) {
  const int d = m.dim();
  R g[3][3];
  metric_at(m, x.data(), g);
  ChartNode<R> nd;
  nd.x = x;
  nd.e0 = v;
  R gt(0);
  for (int j = 0; j < d; ++j) gt += g[0][j] * v[j];
  nd.e1 = {R(1) / gt, R(0), R(0)};
  if (m.n == 2) {
    R w = sqrt(v[1] * v[1] + v[2] * v[2]);
    nd.e2 = {R(0), -v[2] / w, v[1] / w};
  }
  project_frame(m, nd);
  return nd;
}

template <class R> int FermiChart<R>::node_at(double s) const {
  int k = static_cast<int>(std::lround((s - s_lo) / opt.h));
  return std::clamp(k, 0, size() - 1);
}

template <class R> SigmaJets<R> FermiChart<R>::sigma_jets(int k, int pmax) const {
  const JetShape* sh = JetShape::get(0, pmax, 0);
  const int d = n + 1;
  const ChartNode<R>& nd = nodes[k];
  SigmaJets<R> sj;
  for (int mu = 0; mu < 3; ++mu) {
    sj.x[mu] = Jet<R>(sh, nd.x[mu]);
    for (int a = 0; a <= n; ++a) sj.e[a][mu] = Jet<R>(sh, nd.e(a)[mu]);
  }
  Jet<R> gam[3][3][3];
  for (int it = 0; it <= pmax; ++it) {
    christoffel_at(*metric, sj.x.data(), gam);
    std::array<Vec3<Jet<R>>, 3> en;
    for (int a = 0; a <= n; ++a)
      for (int mu = 0; mu < d; ++mu) {
        Jet<R> r(sh);
        for (int nu = 0; nu < d; ++nu)
          for (int la = 0; la < d; ++la) r -= gam[mu][nu][la] * (sj.e[0][nu] * sj.e[a][la]);
        en[a][mu] = Jet<R>(sh, nd.e(a)[mu]) + r.integrate_sigma();
      }
    for (int mu = 0; mu < d; ++mu) sj.x[mu] = Jet<R>(sh, nd.x[mu]) + sj.e[0][mu].integrate_sigma();
    for (int a = 0; a <= n; ++a)
      for (int mu = 0; mu < d; ++mu) sj.e[a][mu] = en[a][mu];
  }
  christoffel_at(*metric, sj.x.data(), sj.gam);
  return sj;
}

template <class R> Vec3<Jet<R>> FermiChart<R>::map_jets(const SigmaJets<R>& sj, const JetShape* sh) const {
  const int d = n + 1;
  Vec3<Jet<R>> F;
  std::array<Jet<R>, 3> z;
  std::array<Vec3<Jet<R>>, 3> e;
  for (int a = 1; a <= n; ++a) {
    z[a] = Jet<R>::variable(sh, a, R(0));
    for (int mu = 0; mu < d; ++mu) e[a][mu] = sj.e[a][mu].reshape(sh);
  }
  for (int mu = 0; mu < d; ++mu) {
    F[mu] = sj.x[mu].reshape(sh);
    for (int a = 1; a <= n; ++a) F[mu] += z[a] * e[a][mu];
  }
  for (int a = 1; a <= n; ++a)
    for (int b = a; b <= n; ++b) {
      Jet<R> zz = z[a] * z[b];
      const R w = a == b ? R(-0.5) : R(-1);
      for (int mu = 0; mu < d; ++mu) {
        Jet<R> acc(sj.x[0].sh);
        for (int nu = 0; nu < d; ++nu)
          for (int la = 0; la < d; ++la) acc += sj.gam[mu][nu][la] * (sj.e[a][nu] * sj.e[b][la]);
        F[mu] += zz * acc.reshape(sh) * w;
      }
    }
  for (int mu = d; mu < 3; ++mu) F[mu] = Jet<R>(sh, R(0));
  return F;
}

template <class R> Vec3<Jet<R>> FermiChart<R>::map_jets(int k, const JetShape* sh) const {
  return map_jets(sigma_jets(k, sh->pmax), sh);
}

template <class R>
ChartMetric<R> FermiChart<R>::metric_from_map(const Vec3<Jet<R>>& F1, const JetShape* sh) const {
  const int d = n + 1;
  Jet<R> g1[3][3];
  metric_at(*metric, F1.data(), g1);
  Jet<R> g[3][3], DF[3][3];
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g[i][j] = g1[i][j].reshape(sh);
  for (int i = 0; i < d; ++i)
    for (int mu = 0; mu < d; ++mu) DF[i][mu] = F1[mu].d(i).reshape(sh);
  Jet<R> W[3][3];
  for (int i = 0; i < d; ++i)
    for (int nu = 0; nu < d; ++nu) {
      W[i][nu] = Jet<R>(sh);
      for (int mu = 0; mu < d; ++mu) W[i][nu] += DF[i][mu] * g[mu][nu];
    }
  ChartMetric<R> cm;
  cm.d = d;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      Jet<R> acc(sh);
      for (int nu = 0; nu < d; ++nu) acc += W[i][nu] * DF[j][nu];
      cm.G[i][j] = acc;
      cm.G[j][i] = acc;
    }
  Jet<R> det = inv_n(cm.G, cm.Gi, d);
  cm.sq = powr(-det, R(0.5));
  return cm;
}

template <class R> ChartMetric<R> FermiChart<R>::metric_jets(int k, const JetShape* sh) const {
  const JetShape* sh1 = JetShape::get(n, sh->pmax + 1, sh->qmax + 1);
  return metric_from_map(map_jets(k, sh1), sh);
}

template <class R> Vec3<R> FermiChart<R>::point(double s, const R* z) const {
  const int k = node_at(s);
  const JetShape* sh = JetShape::get(n, opt.taylor_order, 2);
  auto F = map_jets(k, sh);
  R sigma = R(s) - nodes[k].s;
  Vec3<R> out{};
  for (int mu = 0; mu <= n; ++mu) out[mu] = F[mu].eval(sigma, z);
  return out;
}

template <class R>
FermiChart<R> build_fermi_chart(const MetricSpec& m, const Vec3<double>& x0, const Vec3<double>& v0, double s_from,
                                double s_to, const ChartOptions& opt) {
  if (!(opt.delta_p > 0)) throw Error("radius", "tube radius must be positive");
  if (!(opt.h > 0) || opt.taylor_order < 2) throw Error("config", "chart step and Taylor order must be positive");
  if (s_from > 0 || s_to < 0) throw Error("input", "chart range must contain s = 0");
  FermiChart<R> ch;
  ch.metric = &m;
  ch.n = m.n;
  ch.opt = opt;
  const double ext = opt.extend < 0 ? opt.delta_p : opt.extend;
  const int kneg = static_cast<int>(std::ceil((ext - s_from) / opt.h - 1e-9));
  const int kpos = static_cast<int>(std::ceil((s_to + ext) / opt.h - 1e-9));
  ch.nodes.resize(kneg + kpos + 1);
  ch.base = kneg;
  ch.s_lo = -kneg * opt.h;
  ch.s_hi = kpos * opt.h;
  ch.seg0 = s_from;
  ch.seg1 = s_to;
  Vec3<R> x, v;
  for (int i = 0; i < 3; ++i) {
    x[i] = R(x0[i]);
    v[i] = R(v0[i]);
  }
  ch.nodes[kneg] = initial_frame(m, x, v);
  ch.nodes[kneg].s = R(0);
  auto step = [&](int from, int to, R sigma) {
    SigmaJets<R> sj = ch.sigma_jets(from, opt.taylor_order);
    ChartNode<R> nd;
    nd.s = ch.nodes[from].s + sigma;
    for (int mu = 0; mu < 3; ++mu) {
      nd.x[mu] = sj.x[mu].eval(sigma, static_cast<const R*>(nullptr));
      for (int a = 0; a <= m.n; ++a) nd.e(a)[mu] = sj.e[a][mu].eval(sigma, static_cast<const R*>(nullptr));
    }
    project_frame(m, nd);
    ch.nodes[to] = nd;
  };
  for (int k = kneg; k < kneg + kpos; ++k) step(k, k + 1, R(opt.h));
  for (int k = kneg; k > 0; --k) step(k, k - 1, R(-opt.h));
  return ch;
}

FermiChart<double> build_fermi_chart(const MetricSpec& m, const GeodesicSegment& seg, const ChartOptions& opt) {
  const auto& a = seg.nodes.front();
  return build_fermi_chart<double>(m, a.x, a.v, 0.0, seg.s1 - seg.s0, opt);
}

std::vector<double> chart_D(const FermiChart<double>& chart, int k) {
  const int n = chart.n;
  const JetShape* sh = JetShape::get(n, 0, 2);
  auto cm = chart.metric_jets(k, sh);
  std::vector<double> D(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::array<int, kMaxZ + 1> e{};
      e[i + 1] += 1;
      e[j + 1] += 1;
      double c = cm.Gi[1][1].coef(e);
      D[i * n + j] = i == j ? 0.5 * c : 0.25 * c;
    }
  return D;
}

std::optional<double> conjugate_point_scan(int n, const std::function<void(double, double*)>& Dfun, double s0,
                                           double s1, double h, double tau) {
  if (n < 2) return std::nullopt;
  // state: Y (n x n) and Z (n x n), Y' = C Z, Z' = -D Y
  const int nn = n * n;
  std::vector<double> y(2 * nn, 0.0);
  y[0] = 1.0;                                       // Y0 = diag(1, 0, ..)
  for (int a = 1; a < n; ++a) y[nn + a * n + a] = 1.0;  // Z0 = diag(0, 1, ..)
  auto f = [&](double s, const std::vector<double>& u) {
    std::vector<double> D(nn), r(2 * nn, 0.0);
    Dfun(s, D.data());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        r[i * n + j] = (i == 0 ? 0.0 : 2.0) * u[nn + i * n + j];
        double acc = 0;
        for (int l = 0; l < n; ++l) acc += D[i * n + l] * u[l * n + j];
        r[nn + i * n + j] = -acc;
      }
    return r;
  };
  auto det = [&](const std::vector<double>& u) {
    if (n == 2) return u[0] * u[3] - u[1] * u[2];
    double a[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a[i][j] = u[i * 3 + j];
    return det_n<double>(a, 3);
  };
  double s = s0, dmax = 0, prev = det(y);
  bool left = false;
  while (s < s1 - 1e-14) {
    const double hh = std::min(h, s1 - s);
    auto k1 = f(s, y);
    std::vector<double> t(2 * nn);
    for (int i = 0; i < 2 * nn; ++i) t[i] = y[i] + 0.5 * hh * k1[i];
    auto k2 = f(s + 0.5 * hh, t);
    for (int i = 0; i < 2 * nn; ++i) t[i] = y[i] + 0.5 * hh * k2[i];
    auto k3 = f(s + 0.5 * hh, t);
    for (int i = 0; i < 2 * nn; ++i) t[i] = y[i] + hh * k3[i];
    auto k4 = f(s + hh, t);
    for (int i = 0; i < 2 * nn; ++i) y[i] += hh / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    s += hh;
    const double dv = det(y);
    dmax = std::max(dmax, std::fabs(dv));
    if (!left) {
      // the scan starts at a degenerate Y; wait until |det Y| grows away from it
      if (std::fabs(dv) > std::fabs(prev) && std::fabs(dv) > 0) left = true;
      prev = dv;
      continue;
    }
    if (std::fabs(dv) < tau * dmax) return s;
    if ((dv > 0) != (prev > 0)) return s - hh * dv / (dv - prev);  // linear root between steps
    prev = dv;
  }
  return std::nullopt;
}

std::optional<double> conjugate_point_scan(const FermiChart<double>& chart, double tau) {
  if (chart.n < 2) return std::nullopt;
  const int n = chart.n;
  std::vector<std::vector<double>> Ds(chart.size());
  for (int k = 0; k < chart.size(); ++k) Ds[k] = chart_D(chart, k);
  auto D = [&](double s, double* out) {
    double u = (s - chart.s_lo) / chart.h();
    int k = std::clamp(static_cast<int>(std::floor(u)), 0, chart.size() - 2);
    double w = u - k;
    for (int i = 0; i < n * n; ++i) out[i] = (1 - w) * Ds[k][i] + w * Ds[k + 1][i];
  };
  return conjugate_point_scan(n, D, chart.seg0, chart.seg1, 0.25 * chart.h(), tau);
}

template class FermiChart<double>;
template class FermiChart<Quad>;
template FermiChart<double> build_fermi_chart<double>(const MetricSpec&, const Vec3<double>&, const Vec3<double>&,
                                                      double, double, const ChartOptions&);
template FermiChart<Quad> build_fermi_chart<Quad>(const MetricSpec&, const Vec3<double>&, const Vec3<double>&, double,
                                                  double, const ChartOptions&);
template ChartNode<double> initial_frame(const MetricSpec&, const Vec3<double>&, const Vec3<double>&);
template ChartNode<Quad> initial_frame(const MetricSpec&, const Vec3<Quad>&, const Vec3<Quad>&);
template void project_frame(const MetricSpec&, ChartNode<double>&);
template void project_frame(const MetricSpec&, ChartNode<Quad>&);

} // namespace beamlab
