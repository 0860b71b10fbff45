#include "beamlab/wave_forward.hpp"

#include <algorithm>
#include <cmath>

namespace beamlab {

template struct GridField<double>;
template struct GridField<cplx>;

namespace {

struct PointMetric {
  double beta = 1, sqrtg = 1;
  double gi[2][2]{};  // g0^{-1}
  double g0[2][2]{};
};

PointMetric point_metric(const MetricSpec& m, double t, double x, double y) {
  const double p[3] = {t, x, y};
  double g[3][3];
  metric_at(m, p, g);
  PointMetric r;
  r.beta = -g[0][0];
  if (m.n == 1) {
    r.g0[0][0] = g[1][1];
    r.gi[0][0] = 1.0 / g[1][1];
    r.sqrtg = std::sqrt(r.beta * g[1][1]);
  } else {
    const double a = g[1][1], b = g[1][2], c = g[2][2];
    const double det = a * c - b * b;
    r.g0[0][0] = a;
    r.g0[0][1] = r.g0[1][0] = b;
    r.g0[1][1] = c;
    r.gi[0][0] = c / det;
    r.gi[0][1] = r.gi[1][0] = -b / det;
    r.gi[1][1] = a / det;
    r.sqrtg = std::sqrt(r.beta * det);
  }
  if (!(r.beta > 0) || !std::isfinite(r.sqrtg)) throw Error("degeneracy", "metric not Lorentzian on the lattice");
  return r;
}

double max_speed2(const PointMetric& pm, int n) {
  if (n == 1) return pm.beta * pm.gi[0][0];
  const double a = pm.gi[0][0], b = pm.gi[0][1], c = pm.gi[1][1];
  const double lam = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  return pm.beta * lam;
}

double bump(double r) { return std::fabs(r) < 1 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0; }

} // namespace

// ---- boundary lattice ----

BoundaryLattice BoundaryLattice::make(const Lattice& lat) {
  BoundaryLattice b;
  const int nx = lat.dims[1], ny = lat.dims[2];
  std::vector<int> site_of(lat.spatial_size(), -1);
  auto site = [&](int ix, int iy) {
    const int s = ix * ny + iy;
    if (site_of[s] < 0) {
      site_of[s] = static_cast<int>(b.sites.size());
      b.sites.push_back(s);
    }
    return site_of[s];
  };
  if (lat.n == 1) {
    b.entries.push_back({site(0, 0), 0, 0, 0, 1.0, 0.0});
    b.entries.push_back({site(nx - 1, 0), 1, nx - 1, 0, 1.0, 0.0});
    return b;
  }
  const double dx = lat.h(1), dy = lat.h(2);
  for (int face = 0; face < 2; ++face) {
    const int ix = face == 0 ? 0 : nx - 1;
    for (int iy = 0; iy < ny; ++iy) {
      const double w = (iy == 0 || iy == ny - 1) ? 0.5 * dy : dy;
      b.entries.push_back({site(ix, iy), face, ix, iy, w, lat.coord(2, iy)});
    }
  }
  for (int face = 2; face < 4; ++face) {
    const int iy = face == 2 ? 0 : ny - 1;
    for (int ix = 0; ix < nx; ++ix) {
      const double w = (ix == 0 || ix == nx - 1) ? 0.5 * dx : dx;
      b.entries.push_back({site(ix, iy), face, ix, iy, w, lat.coord(1, ix)});
    }
  }
  return b;
}

bool GammaWindow::contains(int face, double t, double along) const {
  if (std::find(faces.begin(), faces.end(), face) == faces.end()) return false;
  return t >= t0 && t <= t1 && along >= y0 && along <= y1;
}

// ---- operator ----

WaveOperator::WaveOperator(const MetricSpec& m, const Lattice& l, double cfl_max) : metric(&m), lat(l) {
  if (m.domain.kind == DomainKind::Disk) throw Error("config", "the wave solver supports interval and rectangle domains");
  if (lat.dims[0] < 4) throw Error("config", "wave solver needs at least 4 time levels");
  bnd = BoundaryLattice::make(lat);
  dt = lat.h(0);
  dx = lat.h(1);
  dy = lat.n == 2 ? lat.h(2) : 1.0;
  const int Nt = nt(), Nx = nx(), Ny = ny();
  const std::size_t s = S();
  sqrtg.assign(lat.size(), 0.0);
  A.assign(std::size_t(Nt - 1) * s, 0.0);
  Bxx.assign(std::size_t(Nt) * (Nx - 1) * Ny, 0.0);
  Bxy.assign(lat.size(), 0.0);
  if (lat.n == 2) Byy.assign(std::size_t(Nt) * Nx * (Ny - 1), 0.0);
  double c2 = 0;
  auto y_at = [&](int iy) { return lat.n == 2 ? lat.coord(2, iy) : 0.0; };
  for (int it = 0; it < Nt; ++it) {
    const double t = lat.coord(0, it);
    for (int ix = 0; ix < Nx; ++ix)
      for (int iy = 0; iy < Ny; ++iy) {
        const double x = lat.coord(1, ix), y = y_at(iy);
        const auto pm = point_metric(m, t, x, y);
        const std::size_t node = lat.index(it, ix, iy);
        sqrtg[node] = pm.sqrtg;
        if (lat.n == 2) Bxy[node] = pm.sqrtg * pm.gi[0][1];
        c2 = std::max(c2, max_speed2(pm, lat.n));
        if (it + 1 < Nt) {
          const auto ph = point_metric(m, t + 0.5 * dt, x, y);
          A[std::size_t(it) * s + ix * Ny + iy] = ph.sqrtg / ph.beta;
        }
        if (ix + 1 < Nx) {
          const auto ph = point_metric(m, t, x + 0.5 * dx, y);
          Bxx[(std::size_t(it) * (Nx - 1) + ix) * Ny + iy] = ph.sqrtg * ph.gi[0][0];
        }
        if (lat.n == 2 && iy + 1 < Ny) {
          const auto ph = point_metric(m, t, x, y + 0.5 * dy);
          Byy[(std::size_t(it) * Nx + ix) * (Ny - 1) + iy] = ph.sqrtg * ph.gi[1][1];
        }
      }
  }
  const double inv = lat.n == 1 ? 1.0 / (dx * dx) : 1.0 / (dx * dx) + 1.0 / (dy * dy);
  cfl = std::sqrt(c2 * inv) * dt;
  if (cfl > cfl_max)
    throw Error("config", "CFL number " + std::to_string(cfl) + " exceeds " + std::to_string(cfl_max));
}

template <class T> T WaveOperator::spatial(int it, const T* u, int ix, int iy) const {
  const int Nx = nx(), Ny = ny();
  const int c = ix * Ny + iy;
  const std::size_t bx = (std::size_t(it) * (Nx - 1)) * Ny;
  T r = (Bxx[bx + ix * Ny + iy] * (u[c + Ny] - u[c]) - Bxx[bx + (ix - 1) * Ny + iy] * (u[c] - u[c - Ny])) / (dx * dx);
  if (lat.n == 2) {
    const std::size_t by = std::size_t(it) * Nx * (Ny - 1);
    r += (Byy[by + ix * (Ny - 1) + iy] * (u[c + 1] - u[c]) - Byy[by + ix * (Ny - 1) + iy - 1] * (u[c] - u[c - 1])) /
         (dy * dy);
    const std::size_t base = std::size_t(it) * S();
    const double q = 1.0 / (4 * dx * dy);
    r += q * (Bxy[base + c + Ny] * (u[c + Ny + 1] - u[c + Ny - 1]) - Bxy[base + c - Ny] * (u[c - Ny + 1] - u[c - Ny - 1]));
    r += q * (Bxy[base + c + 1] * (u[c + Ny + 1] - u[c - Ny + 1]) - Bxy[base + c - 1] * (u[c + Ny - 1] - u[c - Ny - 1]));
  }
  return r;
}

Lattice cfl_lattice(const MetricSpec& m, int nx, int ny, double cfl) {
  // speed from a coarse probe lattice, then nt from the CFL bound
  Lattice probe = Lattice::make(m, 4, nx, ny);
  double c2 = 0;
  for (int it = 0; it < 9; ++it)
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < probe.dims[2]; ++iy) {
        const auto pm = point_metric(m, m.T * it / 8.0, probe.coord(1, ix), m.n == 2 ? probe.coord(2, iy) : 0.0);
        c2 = std::max(c2, max_speed2(pm, m.n));
      }
  const double dx = probe.h(1), dy = m.n == 2 ? probe.h(2) : 0.0;
  const double inv = m.n == 1 ? 1.0 / (dx * dx) : 1.0 / (dx * dx) + 1.0 / (dy * dy);
  // 2% margin for speed maxima between probe times
  const double dt = 0.98 * cfl / std::sqrt(c2 * inv);
  const int nt = std::max(4, static_cast<int>(std::ceil(m.T / dt)) + 1);
  return Lattice::make(m, nt, nx, ny);
}

// ---- linear solves ----

template <class T>
GridField<T> solve_linear_wave(const WaveOperator& op, const GridField<T>* F, const SigmaData<T>* f,
                               const std::vector<T>* u0, const std::vector<T>* u1, Direction dir) {
  const Lattice& lat = op.lat;
  const int Nt = op.nt(), Nx = op.nx(), Ny = op.ny();
  const std::size_t S = op.S();
  const std::size_t nsites = op.bnd.sites.size();
  if (F && F->v.size() != lat.size()) throw Error("alignment", "source field does not match the lattice");
  if (f && f->size() != std::size_t(Nt) * nsites) throw Error("alignment", "boundary data do not match the lattice");
  if ((u0 && u0->size() != S) || (u1 && u1->size() != S)) throw Error("alignment", "Cauchy data size");
  GridField<T> u(lat);
  const bool fwd = dir == Direction::Forward;
  auto level = [&](int k) { return fwd ? k : Nt - 1 - k; };
  auto Ah = [&](int a, int b) { return op.A.data() + std::size_t(std::min(a, b)) * S; };
  auto src = [&](int it, std::size_t s) -> T {
    if (!F) return T(0);
    return op.sqrtg[std::size_t(it) * S + s] * F->v[std::size_t(it) * S + s];
  };
  auto set_boundary = [&](int it) {
    T* ul = u.v.data() + std::size_t(it) * S;
    for (std::size_t b = 0; b < nsites; ++b) ul[op.bnd.sites[b]] = f ? (*f)[std::size_t(it) * nsites + b] : T(0);
  };

  // level 0 and the Taylor step
  const int l0 = level(0), l1 = level(1), l2 = level(2);
  T* v0 = u.v.data() + std::size_t(l0) * S;
  if (u0) std::copy(u0->begin(), u0->end(), v0);
  set_boundary(l0);
  {
    const double* a01 = Ah(l0, l1);
    const double* a12 = Ah(l1, l2);
    const double sgn = fwd ? 1.0 : -1.0;
    T* v1 = u.v.data() + std::size_t(l1) * S;
    for (int ix = 0; ix < Nx; ++ix)
      for (int iy = 0; iy < Ny; ++iy) {
        if (!op.interior(ix, iy)) continue;
        const int s = ix * Ny + iy;
        const double a0 = 1.5 * a01[s] - 0.5 * a12[s];
        const double at = sgn * (a12[s] - a01[s]) / op.dt;  // d_t A
        const T ut = u1 ? (*u1)[s] : T(0);
        const T utt = (op.spatial(l0, v0, ix, iy) + src(l0, s) - at * ut) / a0;
        v1[s] = v0[s] + sgn * op.dt * ut + 0.5 * op.dt * op.dt * utt;
      }
    set_boundary(l1);
  }
  const double dt2 = op.dt * op.dt;
  for (int k = 1; k + 1 < Nt; ++k) {
    const int lp = level(k - 1), lc = level(k), ln = level(k + 1);
    const T* up = u.v.data() + std::size_t(lp) * S;
    const T* uc = u.v.data() + std::size_t(lc) * S;
    T* un = u.v.data() + std::size_t(ln) * S;
    const double* aprev = Ah(lp, lc);
    const double* anext = Ah(lc, ln);
    for (int ix = 1; ix < Nx - 1; ++ix)
      for (int iy = 0; iy < Ny; ++iy) {
        if (!op.interior(ix, iy)) continue;
        const int s = ix * Ny + iy;
        un[s] = uc[s] + (aprev[s] * (uc[s] - up[s]) + dt2 * (op.spatial(lc, uc, ix, iy) + src(lc, s))) / anext[s];
      }
    set_boundary(ln);
  }
  return u;
}

template <class T> GridField<T> apply_box(const WaveOperator& op, const GridField<T>& u) {
  const int Nt = op.nt(), Nx = op.nx(), Ny = op.ny();
  const std::size_t S = op.S();
  GridField<T> r(op.lat);
  auto lvl = [&](int it) { return u.v.data() + std::size_t(it) * S; };
  // q_{j+1/2} = A (u^{j+1} - u^j) / dt
  auto q = [&](int j, int s) { return op.A[std::size_t(j) * S + s] * (lvl(j + 1)[s] - lvl(j)[s]) / op.dt; };
  for (int it = 0; it < Nt; ++it)
    for (int ix = 1; ix < Nx - 1; ++ix)
      for (int iy = 0; iy < Ny; ++iy) {
        if (!op.interior(ix, iy)) continue;
        const int s = ix * Ny + iy;
        T dq;
        if (it == 0) dq = (-2.0 * q(0, s) + 3.0 * q(1, s) - q(2, s)) / op.dt;
        else if (it == Nt - 1) dq = (2.0 * q(Nt - 2, s) - 3.0 * q(Nt - 3, s) + q(Nt - 4, s)) / op.dt;
        else dq = (q(it, s) - q(it - 1, s)) / op.dt;
        r.v[std::size_t(it) * S + s] = (dq - op.spatial(it, lvl(it), ix, iy)) / op.sqrtg[std::size_t(it) * S + s];
      }
  return r;
}

// ---- data ----

double BoundaryData::sup() const {
  double m = 0;
  for (double x : f) m = std::max(m, std::fabs(x));
  return m;
}

bool BoundaryData::compatible(const Lattice& lat) const {
  const std::size_t ns = f.size() / lat.dims[0];
  for (int it = 0; it <= std::min(s_data, lat.dims[0] - 1); ++it)
    for (std::size_t b = 0; b < ns; ++b)
      if (f[it * ns + b] != 0.0) return false;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (!gamma.empty() && !gamma[i] && f[i] != 0.0) return false;
  return true;
}

SigmaData<double> BoundaryData::scaled() const {
  SigmaData<double> r(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) r[i] = eps * f[i];
  return r;
}

std::vector<std::uint8_t> gamma_mask(const WaveOperator& op, const GammaWindow& gamma) {
  const std::size_t ns = op.bnd.sites.size();
  std::vector<std::uint8_t> mask(op.nt() * ns, 0);
  for (int it = 0; it < op.nt(); ++it) {
    const double t = op.lat.coord(0, it);
    for (const auto& e : op.bnd.entries)
      if (gamma.contains(e.face, t, e.along)) mask[it * ns + e.site] = 1;
  }
  return mask;
}

BoundaryData make_boundary_data(const WaveOperator& op, const Waveform& w, const GammaWindow& gamma, double eps,
                                int s_data) {
  BoundaryData d;
  d.eps = eps;
  d.s_data = s_data;
  d.gamma = gamma_mask(op, gamma);
  const std::size_t ns = op.bnd.sites.size();
  d.f.assign(op.nt() * ns, 0.0);
  if (w.kind == "zero") return d;
  if (w.kind != "bump") throw Error("config", "unknown waveform kind '" + w.kind + "'");
  if (w.t_width <= 0 || (op.lat.n == 2 && w.y_width <= 0)) throw Error("config", "waveform widths must be positive");
  for (int it = 0; it < op.nt(); ++it) {
    const double t = op.lat.coord(0, it);
    const double bt = bump((t - w.t_center) / w.t_width);
    if (bt == 0.0) continue;
    for (const auto& e : op.bnd.entries) {
      if (e.face != w.face) continue;
      const double by = op.lat.n == 2 ? bump((e.along - w.y_center) / w.y_width) : 1.0;
      const std::size_t i = it * ns + e.site;
      if (d.gamma[i]) d.f[i] = w.amplitude * bt * by;
    }
  }
  return d;
}

RealField extend_boundary_data(const WaveOperator& op, const BoundaryData& f, int collar) {
  const int Nt = op.nt(), Nx = op.nx(), Ny = op.ny();
  const std::size_t ns = op.bnd.sites.size();
  std::vector<int> site_of(op.S(), -1);
  for (std::size_t b = 0; b < ns; ++b) site_of[op.bnd.sites[b]] = static_cast<int>(b);
  RealField h(op.lat);
  const auto data = f.scaled();
  for (int ix = 0; ix < Nx; ++ix)
    for (int iy = 0; iy < Ny; ++iy) {
      // nearest face in cells and the projected boundary site
      int d = ix, px = 0, py = iy;
      if (Nx - 1 - ix < d) d = Nx - 1 - ix, px = Nx - 1, py = iy;
      if (op.lat.n == 2) {
        if (iy < d) d = iy, px = ix, py = 0;
        if (Ny - 1 - iy < d) d = Ny - 1 - iy, px = ix, py = Ny - 1;
      }
      if (d >= collar) continue;
      const double prof = cutoff(0.5 * d / collar);
      const int b = site_of[px * Ny + py];
      for (int it = 0; it < Nt; ++it) h.v[op.lat.index(it, ix, iy)] = prof * data[it * ns + b];
    }
  return h;
}

// ---- nonlinearity ----

void NonlinearitySpec::set(int k, std::vector<double> values, int kmax_check) {
  if (k == 2) throw Error("config", "V_2 must vanish");
  if (k < 3 || k > (kmax_check > 0 ? kmax_check : kmax))
    throw Error("config", "nonlinearity order " + std::to_string(k) + " out of range");
  V[k] = std::move(values);
}

double NonlinearitySpec::eval(std::size_t node, double u) const {
  double r = 0;
  for (const auto& [k, vk] : V) r += vk[node] * std::pow(u, k) / std::tgamma(k + 1.0);
  return r;
}

double NonlinearitySpec::deriv(std::size_t node, double u) const {
  double r = 0;
  for (const auto& [k, vk] : V) r += vk[node] * std::pow(u, k - 1) / std::tgamma(double(k));
  return r;
}

NonlinearitySpec nonlinearity_from_exprs(const Lattice& lat, const std::map<int, std::string>& exprs, int kmax) {
  NonlinearitySpec V;
  V.kmax = kmax;
  const auto vars = coordinate_names(lat.n);
  for (const auto& [k, text] : exprs) {
    const Expr e = Expr::parse(text, vars);
    std::vector<double> vals(lat.size());
    for (int it = 0; it < lat.dims[0]; ++it)
      for (int ix = 0; ix < lat.dims[1]; ++ix)
        for (int iy = 0; iy < lat.dims[2]; ++iy) {
          const double p[3] = {lat.coord(0, it), lat.coord(1, ix), lat.n == 2 ? lat.coord(2, iy) : 0.0};
          vals[lat.index(it, ix, iy)] = e.eval(p);
        }
    V.set(k, std::move(vals));
  }
  return V;
}

// ---- semilinear ----

RealField solve_semilinear(const WaveOperator& op, const NonlinearitySpec& V, const BoundaryData& f,
                           SemilinearReport* report, const SemilinearOptions& opt) {
  const double amp = f.eps * f.sup();
  if (amp > opt.eps0)
    throw Error("smallness", "boundary data sup " + std::to_string(amp) + " exceeds eps0 = " + std::to_string(opt.eps0));
  SemilinearReport rep;
  const auto data = f.scaled();
  RealField prev(op.lat), F(op.lat);
  auto norm = [](const std::vector<double>& a) {
    double s = 0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
  };
  RealField u;
  for (int j = 1; j <= opt.max_iter; ++j) {
    bool have_source = false;
    if (!V.empty()) {
      for (std::size_t i = 0; i < F.v.size(); ++i) {
        F.v[i] = -V.eval(i, prev.v[i]);
        have_source = have_source || F.v[i] != 0.0;
      }
    }
    u = solve_linear_wave<double>(op, have_source ? &F : nullptr, &data);
    double inc = 0;
    for (std::size_t i = 0; i < u.v.size(); ++i) inc += (u.v[i] - prev.v[i]) * (u.v[i] - prev.v[i]);
    inc = std::sqrt(inc);
    const double un = norm(u.v);
    rep.increments.push_back(inc);
    rep.iterations = j;
    if (rep.increments.size() >= 3) {
      const double r = inc / rep.increments[rep.increments.size() - 2];
      rep.ratios.push_back(r);
      rep.max_ratio = std::max(rep.max_ratio, r);
      if (r >= 1.0 && inc > 1e3 * std::numeric_limits<double>::epsilon() * un)
        throw Error("smallness", "Picard increments do not contract (ratio " + std::to_string(r) + ")");
    }
    prev = u;
    if (inc <= opt.tol * un || (V.empty() && j >= 1)) {
      rep.converged = true;
      break;
    }
  }
  if (report) *report = rep;
  return u;
}

// ---- traces ----

template <class T> std::vector<T> neumann_trace(const WaveOperator& op, const GridField<T>& u) {
  const int Nt = op.nt(), Nx = op.nx(), Ny = op.ny();
  const std::size_t ne = op.bnd.entries.size();
  std::vector<T> out(Nt * ne);
  auto d1 = [](const T& a0, const T& a1, const T& a2, double h) { return (-3.0 * a0 + 4.0 * a1 - a2) / (2 * h); };
  for (int it = 0; it < Nt; ++it) {
    const double t = op.lat.coord(0, it);
    for (std::size_t k = 0; k < ne; ++k) {
      const auto& e = op.bnd.entries[k];
      const int ix = e.ix, iy = e.iy;
      auto U = [&](int a, int b) { return u.v[op.lat.index(it, a, b)]; };
      T dux, duy = T(0);
      double nvec[2] = {0, 0};
      // derivative along x
      if (e.face == 0) dux = d1(U(0, iy), U(1, iy), U(2, iy), op.dx);
      else if (e.face == 1) dux = -d1(U(Nx - 1, iy), U(Nx - 2, iy), U(Nx - 3, iy), op.dx);
      else if (ix == 0) dux = d1(U(0, iy), U(1, iy), U(2, iy), op.dx);
      else if (ix == Nx - 1) dux = -d1(U(Nx - 1, iy), U(Nx - 2, iy), U(Nx - 3, iy), op.dx);
      else dux = (U(ix + 1, iy) - U(ix - 1, iy)) / (2 * op.dx);
      if (op.lat.n == 2) {
        if (e.face == 2 || iy == 0) duy = d1(U(ix, 0), U(ix, 1), U(ix, 2), op.dy);
        else if (e.face == 3 || iy == Ny - 1) duy = -d1(U(ix, Ny - 1), U(ix, Ny - 2), U(ix, Ny - 3), op.dy);
        else duy = (U(ix, iy + 1) - U(ix, iy - 1)) / (2 * op.dy);
      }
      nvec[e.face / 2] = (e.face % 2 == 0) ? -1.0 : 1.0;
      const auto pm = point_metric(*op.metric, t, op.lat.coord(1, ix), op.lat.n == 2 ? op.lat.coord(2, iy) : 0.0);
      if (op.lat.n == 1) {
        out[it * ne + k] = nvec[0] * dux * std::sqrt(pm.gi[0][0]);
      } else {
        const double nu0 = pm.gi[0][0] * nvec[0] + pm.gi[0][1] * nvec[1];
        const double nu1 = pm.gi[1][0] * nvec[0] + pm.gi[1][1] * nvec[1];
        const double len = std::sqrt(nu0 * nvec[0] + nu1 * nvec[1]);
        out[it * ne + k] = (nu0 * dux + nu1 * duy) / len;
      }
    }
  }
  return out;
}

DtNSample dtn_apply(const WaveOperator& op, const NonlinearitySpec& V, const BoundaryData& f,
                    const SemilinearOptions& opt) {
  DtNSample d;
  auto u = solve_semilinear(op, V, f, &d.report, opt);
  d.trace = neumann_trace(op, u);
  const std::size_t ne = op.bnd.entries.size(), ns = op.bnd.sites.size();
  d.mask.assign(d.trace.size(), 0);
  for (int it = 0; it < op.nt(); ++it)
    for (std::size_t k = 0; k < ne; ++k) {
      const bool in = f.gamma.empty() || f.gamma[it * ns + op.bnd.entries[k].site];
      d.mask[it * ne + k] = in;
      if (!in) d.trace[it * ne + k] = 0.0;
    }
  return d;
}

double boundary_area(const WaveOperator& op, int it, const BoundaryLattice::Entry& e) {
  const auto pm = point_metric(*op.metric, op.lat.coord(0, it), op.lat.coord(1, e.ix),
                               op.lat.n == 2 ? op.lat.coord(2, e.iy) : 0.0);
  if (op.lat.n == 1) return std::sqrt(pm.beta);
  const double gt = e.face < 2 ? pm.g0[1][1] : pm.g0[0][0];
  return std::sqrt(pm.beta * gt);
}

double time_weight(const Lattice& lat, int it) {
  const double dt = lat.h(0);
  return (it == 0 || it == lat.dims[0] - 1) ? 0.5 * dt : dt;
}

template <class T> T integrate(const WaveOperator& op, const GridField<T>& u) {
  const Lattice& lat = op.lat;
  auto w = [&](int a, int i) { return (i == 0 || i == lat.dims[a] - 1) ? 0.5 * lat.h(a) : lat.h(a); };
  T acc = T(0);
  for (int it = 0; it < lat.dims[0]; ++it)
    for (int ix = 0; ix < lat.dims[1]; ++ix)
      for (int iy = 0; iy < lat.dims[2]; ++iy) {
        const std::size_t i = lat.index(it, ix, iy);
        double wt = w(0, it) * w(1, ix) * (lat.n == 2 ? w(2, iy) : 1.0);
        acc += wt * op.sqrtg[i] * u.v[i];
      }
  return acc;
}

// ---- remainders ----

ComplexField make_remainder(const WaveOperator& op, const BeamSamples& samples, double rho, Direction dir) {
  if (samples.lattice_size != op.lat.size()) throw Error("alignment", "beam samples were taken on another lattice");
  ComplexField v(op.lat);
  v.v = samples.field(rho);
  auto F = apply_box(op, v);
  for (auto& x : F.v) x = -x;
  return solve_linear_wave<cplx>(op, &F, nullptr, nullptr, nullptr, dir);
}

RemainderReport remainder_decay(const WaveOperator& op, const BeamSamples& samples, const std::vector<double>& rhos,
                                Direction dir, int fit) {
  RemainderReport rep;
  rep.target = -(op.lat.n + 1) / 2.0 - 2.0;
  for (double rho : rhos) {
    auto r = make_remainder(op, samples, rho, dir);
    double m = 0;
    for (const auto& x : r.v) m = std::max(m, std::norm(x));
    rep.rho.push_back(rho);
    rep.sup.push_back(std::sqrt(m));
  }
  rep.slope = loglog_slope(rep.rho, rep.sup, fit);
  rep.verdict = !std::isfinite(rep.slope) ? "inconclusive" : rep.slope <= rep.target + 0.3 ? "pass" : "fail";
  return rep;
}

template double WaveOperator::spatial(int, const double*, int, int) const;
template cplx WaveOperator::spatial(int, const cplx*, int, int) const;
template GridField<double> solve_linear_wave(const WaveOperator&, const GridField<double>*, const SigmaData<double>*,
                                             const std::vector<double>*, const std::vector<double>*, Direction);
template GridField<cplx> solve_linear_wave(const WaveOperator&, const GridField<cplx>*, const SigmaData<cplx>*,
                                           const std::vector<cplx>*, const std::vector<cplx>*, Direction);
template GridField<double> apply_box(const WaveOperator&, const GridField<double>&);
template GridField<cplx> apply_box(const WaveOperator&, const GridField<cplx>&);
template std::vector<double> neumann_trace(const WaveOperator&, const GridField<double>&);
template std::vector<cplx> neumann_trace(const WaveOperator&, const GridField<cplx>&);
template double integrate(const WaveOperator&, const GridField<double>&);
template cplx integrate(const WaveOperator&, const GridField<cplx>&);

} // namespace beamlab
