#include "beamlab/reconstruction.hpp"
#include "beamlab/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace beamlab {

namespace {

using V3 = Vec3<double>;

V3 to_v3(const SpacetimePoint& p) { return {p.t, p.x.empty() ? 0.0 : p.x[0], p.x.size() > 1 ? p.x[1] : 0.0}; }

double sqrt_det_g(const MetricSpec& m, const V3& x) {
  double g[3][3];
  metric_at(m, x.data(), g);
  if (m.n == 1) return std::sqrt(std::fabs(g[0][0] * g[1][1] - g[0][1] * g[1][0]));
  Eigen::Matrix3d G;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) G(i, j) = g[i][j];
  return std::sqrt(std::fabs(G.determinant()));
}

/// Beam phase and amplitude coefficients at x (no conjugation, no frequency).
struct BeamValue {
  bool inside = false;
  cplx phi;
  std::vector<cplx> a;
};

BeamValue eval_beam(const GaussianBeam<double>& beam, const V3& x) {
  BeamValue v;
  double s, z[2] = {0, 0};
  if (!beam.locate(x, s, z)) return v;
  const auto& ch = *beam.chart;
  if (std::hypot(z[0], z[1]) >= 0.5 * ch.delta_p()) return v;
  if (s < ch.s_lo - 0.5 * ch.h() || s > ch.s_hi + 0.5 * ch.h()) return v;
  auto L = beam.local(s, z);
  v.inside = true;
  v.phi = to_std(L.phi);
  for (const auto& ak : L.a) v.a.push_back(to_std(ak));
  return v;
}

void factor_value(const BeamBundle& b, int f, const BeamValue& bv, double rho, cplx& phase, cplx& amp) {
  const auto& fac = b.factors[f];
  const auto& bb = b.beams[fac.beam];
  cplx phi = bv.phi, A = 0;
  const double r = rho * fac.freq;
  cplx rk = 1;
  for (std::size_t k = 0; k < bv.a.size(); ++k) {
    A += rk * bv.a[k];
    if (r > 0) rk /= r;
    else break;
  }
  if (bb.conjugate) {
    phi = -std::conj(phi);
    A = std::conj(A);
  }
  phase = fac.freq * phi;
  amp = A;
}

/// Distinct beams used by the factors.
std::vector<int> beams_used(const BeamBundle& b) {
  std::vector<int> u;
  for (const auto& f : b.factors) {
    const GaussianBeam<double>* ptr = b.beams[f.beam].beam.get();
    bool seen = false;
    for (int j : u) seen = seen || b.beams[j].beam.get() == ptr;
    if (!seen) u.push_back(f.beam);
  }
  return u;
}

} // namespace

// ---- bundle ----

BeamBundle build_bundle(const MetricSpec& m, const SpacetimePoint& p, const BundleOptions& opt) {
  if (opt.order < 3 || opt.order > 5) throw Error("config", "bundle order must be in 3..5");
  auto sel = select_beam_covectors(m, p, 4, opt.reach, opt.sweep);
  const int d = m.dim();
  const V3 x0 = to_v3(p);
  double g[3][3], gi[3][3];
  metric_at(m, x0.data(), g);
  inv_n(g, gi, d);

  BeamBundle b;
  b.metric = &m;
  b.p = p;
  b.order = opt.order;
  b.closure = sel.closure;
  std::vector<std::pair<V3, std::shared_ptr<GaussianBeam<double>>>> built;  // future tangent -> beam

  for (int j = 0; j < 4; ++j) {
    BundleBeam bb;
    bb.theta = sel.theta[j];
    bb.kappa = sel.kappa[j];
    bb.dir = j == 0 ? Direction::Backward : Direction::Forward;
    V3 v{};
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l) v[i] += gi[i][l] * bb.theta[l];
    if (v[0] < 0)
      for (auto& c : v) c = -c;
    // same geodesic as an earlier beam: reuse it
    for (const auto& [w, beam] : built) {
      double cr = 0, nv = 0, nw = 0;
      for (int i = 0; i < d; ++i) {
        cr += v[i] * w[i];
        nv += v[i] * v[i];
        nw += w[i] * w[i];
      }
      if (cr > 0 && std::fabs(cr * cr - nv * nw) <= 1e-20 * nv * nw) bb.beam = beam;
    }
    if (!bb.beam) {
      ChartOptions co;
      co.delta_p = opt.delta_p;
      const double s_past = sel.past[j].s_exit.value_or(sel.past[j].last().s);
      const double s_fut = sel.future[j].s_exit.value_or(sel.future[j].last().s);
      // past and future shots run along -v and +v at the same speed
      auto ch = std::make_shared<FermiChart<double>>(build_fermi_chart<double>(m, x0, v, -s_past, s_fut, co));
      BeamOptions bo;
      bo.N = opt.N;
      bo.H0 = opt.H0;
      bb.beam = std::make_shared<GaussianBeam<double>>(build_beam<double>(ch, bo));
      built.push_back({v, bb.beam});
    }
    // gradient of Re phi at p
    const double h = 1e-5 * std::max(1.0, m.domain.diameter());
    std::array<double, 3> grad{};
    for (int i = 0; i < d; ++i) {
      V3 xp = x0, xm = x0;
      xp[i] += h;
      xm[i] -= h;
      auto a = eval_beam(*bb.beam, xp), c = eval_beam(*bb.beam, xm);
      if (!a.inside || !c.inside) throw Error("geometry", "beam does not cover a neighbourhood of p");
      grad[i] = (a.phi.real() - c.phi.real()) / (2 * h);
    }
    double tg = 0, gg = 0;
    for (int i = 0; i < d; ++i) {
      tg += bb.theta[i] * grad[i];
      gg += grad[i] * grad[i];
    }
    const double lam = bb.kappa * tg / gg;
    bb.conjugate = lam < 0;
    bb.lambda = std::fabs(lam);
    b.beams.push_back(bb);
  }
  for (int j = 0; j < 3; ++j) b.factors.push_back({j, b.beams[j].lambda});
  for (int r = 0; r < opt.order - 2; ++r) b.factors.push_back({3, b.beams[3].lambda / (opt.order - 2)});
  return b;
}

bool factor_at(const BeamBundle& b, int f, const Vec3<double>& x, double rho, cplx& phase, cplx& amp) {
  auto bv = eval_beam(*b.beams[b.factors[f].beam].beam, x);
  if (!bv.inside) return false;
  factor_value(b, f, bv, rho, phase, amp);
  return true;
}

cplx combined_phase(const BeamBundle& b, const Vec3<double>& x) {
  cplx S = 0;
  for (std::size_t f = 0; f < b.factors.size(); ++f) {
    cplx ph, a;
    if (!factor_at(b, static_cast<int>(f), x, 0.0, ph, a)) return cplx(NAN, NAN);
    S += ph;
  }
  return S;
}

PhaseDiagnostics phase_sum_diagnostics(const BeamBundle& b, double shell) {
  const MetricSpec& m = *b.metric;
  PhaseDiagnostics out;
  const int d = m.dim();
  out.d = d;
  const V3 x0 = to_v3(b.p);
  auto S = [&](const V3& x) { return combined_phase(b, x); };
  out.S_abs = std::abs(S(x0));

  const double scale = std::max(1.0, m.domain.diameter());
  const double h1 = 1e-5 * scale, h2 = 1e-3 * scale;
  double g2 = 0;
  for (int i = 0; i < d; ++i) {
    V3 xp = x0, xm = x0;
    xp[i] += h1;
    xm[i] -= h1;
    g2 += std::norm((S(xp) - S(xm)) / (2 * h1));
  }
  out.grad_norm = std::sqrt(g2);
  const cplx S0 = S(x0);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      cplx v;
      if (i == j) {
        V3 xp = x0, xm = x0;
        xp[i] += h2;
        xm[i] -= h2;
        v = (S(xp) - 2.0 * S0 + S(xm)) / (h2 * h2);
      } else {
        auto at = [&](double a, double c) {
          V3 x = x0;
          x[i] += a;
          x[j] += c;
          return S(x);
        };
        v = (at(h2, h2) - at(h2, -h2) - at(-h2, h2) + at(-h2, -h2)) / (4 * h2 * h2);
      }
      out.hess[i][j] = out.hess[j][i] = v;
    }

  // shell samples of Im S / r^2
  std::vector<V3> dirs;
  if (d == 2) {
    for (int k = 0; k < 32; ++k) dirs.push_back({std::cos(M_PI * k / 16), std::sin(M_PI * k / 16), 0});
  } else {
    const int K = 64;
    for (int k = 0; k < K; ++k) {
      const double zc = 1 - 2 * (k + 0.5) / K, r = std::sqrt(1 - zc * zc), ph = M_PI * (3 - std::sqrt(5.0)) * k;
      dirs.push_back({zc, r * std::cos(ph), r * std::sin(ph)});
    }
  }
  double cmin = INFINITY, num = 0, den = 0;
  for (double f : {0.25, 0.5, 1.0}) {
    const double r = f * shell;
    for (const auto& u : dirs) {
      V3 x = x0;
      for (int i = 0; i < d; ++i) x[i] += r * u[i];
      const cplx s = S(x);
      if (!std::isfinite(s.imag())) continue;
      cmin = std::min(cmin, s.imag() / (r * r));
      num += s.imag() * r * r;
      den += r * r * r * r;
    }
  }
  out.c_lower = std::isfinite(cmin) ? cmin : 0.0;
  out.c_fit = den > 0 ? num / den : 0.0;

  if (!(out.S_abs <= 1e-8)) out.failure = "|S(p)| = " + std::to_string(out.S_abs);
  else if (!(out.grad_norm <= 1e-6)) out.failure = "|grad S(p)| = " + std::to_string(out.grad_norm);
  else if (!(out.c_lower > 0)) out.failure = "Im S lower constant " + std::to_string(out.c_lower);
  out.ok = out.failure.empty();
  return out;
}

cplx stationary_phase_constant(const PhaseDiagnostics& diag) {
  const int d = diag.d;
  Eigen::MatrixXcd M(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) M(i, j) = cplx(0, -1) * diag.hess[i][j] / (2 * M_PI);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(M);
  cplx r = 1;
  for (int i = 0; i < d; ++i) r /= std::sqrt(es.eigenvalues()(i));
  return r;
}

cplx oscillatory_integral(const MetricSpec& m, const Lattice& lat, const std::vector<double>& dV, const BeamBundle& b,
                          const PhaseDiagnostics& diag, double rho, const QuadratureOptions& q) {
  if (dV.size() != lat.size()) throw Error("alignment", "coefficient field on another lattice");
  if (!(diag.c_lower > 0)) throw Error("geometry", "combined phase has no Gaussian decay at p");
  const int d = m.dim();
  // e-fold length along the stiffest direction of Im S
  Eigen::MatrixXd ImH(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) ImH(i, j) = diag.hess[i][j].imag();
  const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(ImH).eigenvalues().maxCoeff();
  double hmax = 0;
  for (int a = 0; a < d; ++a) hmax = std::max(hmax, lat.h(a));
  const double efold = std::sqrt(2.0 / (rho * lmax));
  if (efold / hmax < q.min_nodes_per_efold)
    throw Error("resolution", "lattice resolves " + std::to_string(efold / hmax) + " nodes per e-fold at rho = " +
                                  std::to_string(rho));

  const V3 x0 = to_v3(b.p);
  const double R = std::sqrt(q.window / (rho * diag.c_lower));
  int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  for (int a = 0; a < d; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor((x0[a] - R - lat.lo[a]) / lat.h(a))));
    hi[a] = std::min(lat.dims[a] - 1, static_cast<int>(std::ceil((x0[a] + R - lat.lo[a]) / lat.h(a))));
  }
  auto tw = [&](int a, int i) { return (i == 0 || i == lat.dims[a] - 1) ? 0.5 * lat.h(a) : lat.h(a); };
  const auto used = beams_used(b);
  const int nf = static_cast<int>(b.factors.size());

  cplx acc = 0;
  bool any = false;
  for (int it = lo[0]; it <= hi[0]; ++it)
    for (int ix = lo[1]; ix <= hi[1]; ++ix)
      for (int iy = (d == 3 ? lo[2] : 0); iy <= (d == 3 ? hi[2] : 0); ++iy) {
        const std::size_t i = lat.index(it, ix, iy);
        V3 x{lat.coord(0, it), lat.coord(1, ix), d == 3 ? lat.coord(2, iy) : 0.0};
        double r2 = 0;
        for (int a = 0; a < d; ++a) r2 += (x[a] - x0[a]) * (x[a] - x0[a]);
        if (r2 > R * R || !m.domain.contains(&x[1], 1e-12)) continue;
        std::vector<BeamValue> bv(b.beams.size());
        bool inside = true;
        for (int j : used) {
          bv[j] = eval_beam(*b.beams[j].beam, x);
          inside = inside && bv[j].inside;
          for (std::size_t k = 0; k < b.beams.size(); ++k)
            if (b.beams[k].beam == b.beams[j].beam) bv[k] = bv[j];
        }
        if (!inside) continue;
        cplx S = 0, A = 1;
        for (int f = 0; f < nf; ++f) {
          cplx ph, a;
          factor_value(b, f, bv[b.factors[f].beam], rho, ph, a);
          S += ph;
          A *= a;
        }
        any = true;
        if (dV[i] == 0.0) continue;
        double w = tw(0, it) * tw(1, ix) * (d == 3 ? tw(2, iy) : 1.0);
        acc += w * dV[i] * sqrt_det_g(m, x) * std::exp(cplx(0, rho) * S) * A;
      }
  if (!any) throw Error("geometry", "no lattice node carries the beam product near p");
  return std::pow(rho, 0.5 * d) * acc;
}

PointEstimate stationary_phase_extract(const BeamBundle& b, const PhaseDiagnostics& diag,
                                       const std::vector<double>& rhos, const std::vector<cplx>& integrals) {
  if (rhos.empty() || rhos.size() != integrals.size()) throw Error("config", "need one integral per rho");
  PointEstimate pe;
  pe.p = b.p;
  pe.diag = diag;
  pe.rho = rhos;
  pe.integral = integrals;
  const V3 x0 = to_v3(b.p);
  cplx prod = 1;
  for (std::size_t f = 0; f < b.factors.size(); ++f) {
    cplx ph, a;
    if (!factor_at(b, static_cast<int>(f), x0, 0.0, ph, a)) throw Error("degenerate", "factor vanishes at p");
    prod *= a;
  }
  if (std::abs(prod) < 1e-10) throw Error("degenerate", "amplitude product at p below 1e-10");
  pe.amplitude = stationary_phase_constant(diag) * sqrt_det_g(*b.metric, x0) * prod *
                 std::exp(cplx(0, 1) * combined_phase(b, x0));
  for (const auto& I : integrals) {
    const cplx e = I / pe.amplitude;
    pe.estimate.push_back(e.real());
    pe.imag_ratio = std::abs(e) > 0 ? std::fabs(e.imag()) / std::abs(e) : 0.0;
  }
  const std::size_t k = rhos.size() - 1;
  pe.value = pe.estimate[k];
  if (k > 0) {
    const double r1 = rhos[k - 1], r2 = rhos[k];
    pe.extrapolated = (r2 * pe.estimate[k] - r1 * pe.estimate[k - 1]) / (r2 - r1);
    pe.error_bar = std::fabs(pe.value - pe.extrapolated);
  } else {
    pe.extrapolated = pe.value;
  }
  pe.status = "ok";
  return pe;
}

// ---- boundary-data path ----

namespace {

struct FactorFields {
  std::vector<ComplexField> w;  // per factor, v + r
};

FactorFields factor_fields(const WaveOperator& op, const BeamBundle& b, double rho) {
  FactorFields out;
  std::vector<BeamSamples> smp(b.beams.size());
  for (std::size_t j = 0; j < b.beams.size(); ++j) {
    bool have = false;
    for (std::size_t k = 0; k < j; ++k)
      if (b.beams[k].beam == b.beams[j].beam) {
        smp[j] = smp[k];
        have = true;
      }
    if (!have) smp[j] = sample_beam(*b.beams[j].beam, op.lat, *op.metric);
  }
  for (const auto& f : b.factors) {
    BeamSamples s = smp[f.beam];
    s.kappa = f.freq;
    ComplexField w(op.lat);
    w.v = s.field(rho);
    auto r = make_remainder(op, s, rho, b.beams[f.beam].dir);
    for (std::size_t i = 0; i < w.v.size(); ++i) w.v[i] += r.v[i];
    if (b.beams[f.beam].conjugate)
      for (auto& x : w.v) x = std::conj(x);
    out.w.push_back(std::move(w));
  }
  return out;
}

NonlinearitySpec lower_part(const NonlinearitySpec& V, int m) {
  NonlinearitySpec L;
  L.kmax = V.kmax;
  for (const auto& [k, v] : V.V)
    if (k < m) L.V[k] = v;
  return L;
}

std::vector<cplx> mixed_dtn_trace(const WaveOperator& op, const NonlinearitySpec& V,
                                  const std::vector<ComplexField>& w, const ReconstructionOptions& opt) {
  const int m = static_cast<int>(w.size());
  const std::size_t ns = op.bnd.sites.size();
  const auto gmask = gamma_mask(op, opt.gamma);
  std::vector<std::array<BoundaryData, 2>> parts(m);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < 2; ++c) {
      auto& d = parts[i][c];
      d.eps = 1.0;
      d.gamma = gmask;
      d.f.assign(op.nt() * ns, 0.0);
      for (int it = 0; it < op.nt(); ++it)
        for (std::size_t s = 0; s < ns; ++s) {
          if (!gmask[it * ns + s]) continue;
          const cplx z = w[i].v[it * op.S() + op.bnd.sites[s]];
          d.f[it * ns + s] = c == 0 ? z.real() : z.imag();
        }
    }
  LinearizationOptions lo = opt.linear;
  lo.trace = true;
  std::vector<cplx> out;
  for (unsigned c = 0; c < (1u << m); ++c) {
    std::vector<BoundaryData> f;
    for (int i = 0; i < m; ++i) f.push_back(parts[i][c >> i & 1]);
    auto lf = mixed_derivative(op, V, f, lo);
    cplx unit = 1;
    for (int i = 0; i < __builtin_popcount(c); ++i) unit *= cplx(0, 1);
    if (out.empty()) out.assign(lf.trace.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += unit * lf.trace[i];
  }
  return out;
}

} // namespace

cplx boundary_integral(int m, const WaveOperator& op, const NonlinearitySpec& V1, const NonlinearitySpec& V2,
                       const BeamBundle& b, double rho, const ReconstructionOptions& opt) {
  if (static_cast<int>(b.factors.size()) != m + 1) throw Error("config", "bundle order does not match m");
  auto F = factor_fields(op, b, rho);
  std::vector<ComplexField> w(F.w.begin() + 1, F.w.end());

  std::vector<cplx> dtr;
  if (opt.source == IntegralSource::Solve) {
    auto U1 = linearized_family(op, V1, w, m), U2 = linearized_family(op, V2, w, m);
    const unsigned all = (1u << m) - 1;
    auto t1 = neumann_trace(op, U1.at(all)), t2 = neumann_trace(op, U2.at(all));
    dtr.resize(t1.size());
    for (std::size_t i = 0; i < t1.size(); ++i) dtr[i] = t1[i] - t2[i];
  } else {
    auto t1 = mixed_dtn_trace(op, V1, w, opt), t2 = mixed_dtn_trace(op, V2, w, opt);
    dtr.resize(t1.size());
    for (std::size_t i = 0; i < t1.size(); ++i) dtr[i] = t1[i] - t2[i];
    if (m > 3) {
      // remove the part of each trace generated by the known lower coefficients
      for (int k = 0; k < 2; ++k) {
        const auto L = lower_part(k == 0 ? V1 : V2, m);
        auto U = linearized_family(op, L, w, m);
        auto tr = neumann_trace(op, U.at((1u << m) - 1));
        for (std::size_t i = 0; i < dtr.size(); ++i) dtr[i] += (k == 0 ? -1.0 : 1.0) * tr[i];
      }
    }
  }

  const std::size_t ne = op.bnd.entries.size();
  cplx acc = 0;
  for (int it = 0; it < op.nt(); ++it) {
    const double t = op.lat.coord(0, it), tw = time_weight(op.lat, it);
    for (std::size_t k = 0; k < ne; ++k) {
      const auto& e = op.bnd.entries[k];
      if (!opt.gamma.contains(e.face, t, e.along)) continue;
      const cplx w0 = F.w[0].v[it * op.S() + op.bnd.sites[e.site]];
      acc += tw * e.weight * boundary_area(op, it, e) * w0 * dtr[it * ne + k];
    }
  }
  return std::pow(rho, 0.5 * op.lat.n + 0.5) * acc;
}

PointEstimate recover_vm(int m, const MetricSpec& metric, const Lattice& lat, const NonlinearitySpec& V1,
                         const NonlinearitySpec& V2, const SpacetimePoint& p, const std::vector<double>& rhos,
                         const ReconstructionOptions& opt) {
  if (m < 3 || m > 5) throw Error("config", "recoverable orders are 3..5");
  if (rhos.empty()) throw Error("config", "rho list is empty");
  if (opt.source != IntegralSource::Field) {
    auto lo1 = lower_part(V1, m).V, lo2 = lower_part(V2, m).V;
    if (lo1 != lo2) throw Error("dependency", "lower coefficients of the pair differ");
  }
  BundleOptions bo = opt.bundle;
  bo.order = m;
  auto b = build_bundle(metric, p, bo);
  auto diag = phase_sum_diagnostics(b);
  if (!diag.ok) throw Error("bundle", "bundle rejected: " + diag.failure);

  std::vector<cplx> I;
  if (opt.source == IntegralSource::Field) {
    auto get = [&](const NonlinearitySpec& V) {
      auto it = V.V.find(m);
      return it == V.V.end() ? std::vector<double>(lat.size(), 0.0) : it->second;
    };
    auto a = get(V1), c = get(V2);
    if (a.size() != lat.size() || c.size() != lat.size()) throw Error("alignment", "coefficients on another lattice");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= c[i];
    for (double rho : rhos) I.push_back(oscillatory_integral(metric, lat, a, b, diag, rho, opt.quad));
  } else {
    WaveOperator op(metric, lat);
    for (double rho : rhos) I.push_back(boundary_integral(m, op, V1, V2, b, rho, opt));
  }
  return stationary_phase_extract(b, diag, rhos, I);
}

FieldReconstruction reconstruct_v3_field(const MetricSpec& m, const Lattice& lat, const NonlinearitySpec& V1,
                                         const NonlinearitySpec& V2, const std::vector<double>& rhos,
                                         const ReconstructionOptions& opt) {
  if (opt.stride < 1) throw Error("config", "stride must be positive");
  auto reach = reachable_set(m, lat);
  FieldReconstruction out;
  out.sub = lat;
  for (int a = 0; a < m.dim(); ++a) {
    out.sub.dims[a] = (lat.dims[a] - 1) / opt.stride + 1;
    out.sub.hi[a] = lat.coord(a, (out.sub.dims[a] - 1) * opt.stride);
  }
  const std::size_t N = out.sub.size();
  out.estimate.assign(N, std::numeric_limits<double>::quiet_NaN());
  out.tested.assign(N, 0);
  out.points.resize(N);
  ReconstructionOptions o = opt;
  o.bundle.reach = &reach;
  parallel_for(static_cast<int>(N), opt.threads, [&](int k) {
    const int ny = out.sub.dims[2], nx = out.sub.dims[1];
    const int it = k / (nx * ny), ix = (k / ny) % nx, iy = k % ny;
    const std::size_t node = lat.index(it * opt.stride, ix * opt.stride, iy * opt.stride);
    SpacetimePoint p{lat.coord(0, it * opt.stride), {lat.coord(1, ix * opt.stride)}};
    if (m.n == 2) p.x.push_back(lat.coord(2, iy * opt.stride));
    auto& pe = out.points[k];
    pe.p = p;
    if (!reach.mask[node]) return;
    try {
      pe = recover_vm(3, m, lat, V1, V2, p, rhos, o);
      out.estimate[k] = pe.value;
      out.tested[k] = 1;
    } catch (const Error& e) {
      pe.p = p;
      pe.status = "rejected";
      pe.message = e.what();
    }
  });
  return out;
}

void write_reconstruction_csv(const std::string& path, const std::vector<PointEstimate>& pts, int n) {
  std::ofstream os(path);
  if (!os) throw Error("io", "cannot write " + path);
  os << "t,x," << (n == 2 ? "y," : "")
     << "rho,I_re,I_im,estimate,error_bar,S_abs,grad_norm,c_lower,status\n";
  char buf[512];
  for (const auto& p : pts) {
    const std::size_t rows = std::max<std::size_t>(1, p.rho.size());
    for (std::size_t k = 0; k < rows; ++k) {
      const bool has = k < p.rho.size();
      std::string pos;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", p.p.t, p.p.x.empty() ? 0.0 : p.p.x[0]);
      pos = buf;
      if (n == 2) {
        std::snprintf(buf, sizeof buf, "%.17g,", p.p.x.size() > 1 ? p.p.x[1] : 0.0);
        pos += buf;
      }
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", has ? p.rho[k] : NAN,
                    has ? p.integral[k].real() : NAN, has ? p.integral[k].imag() : NAN,
                    has ? p.estimate[k] : NAN, p.error_bar, p.diag.S_abs, p.diag.grad_norm, p.diag.c_lower);
      os << pos << buf << p.status << '\n';
    }
  }
}

} // namespace beamlab
