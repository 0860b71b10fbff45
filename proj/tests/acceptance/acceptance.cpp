// Acceptance checks: one PASS/FAIL line per criterion.
//   acceptance            run all
//   acceptance 3 5        run the listed criteria

#include "beamlab/gaussian_beam.hpp"
#include "beamlab/linearization.hpp"
#include "beamlab/reconstruction.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace beamlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

SpatialDomain interval(double L) {
  SpatialDomain d;
  d.kind = DomainKind::Interval;
  d.lx = L;
  return d;
}
SpatialDomain square(double L) {
  SpatialDomain d;
  d.kind = DomainKind::Rectangle;
  d.lx = d.ly = L;
  return d;
}

const char* kCatalogConformal = "(1+0.1*sin(t))*(1+0.2*x^2)";

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. det(Im H)|det Y|^2 constant along random charts
Outcome riccati_invariant() {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> U(-1, 1);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const double a = 0.15 * U(rng), b = 0.15 * U(rng), c = 0.1 * U(rng), w = 1.5 + U(rng);
    std::ostringstream beta, g11, g12, g22;
    beta << "1+" << a << "*sin(" << w << "*x+y)+" << c << "*t";
    g11 << "1+" << b << "*x^2";
    g12 << 0.1 * b << "*sin(x*y)";
    g22 << "1+" << 0.5 * a << "*cos(y)";
    auto m = MetricSpec::custom(2, 2.0, square(2.0), beta.str(), {g11.str(), g12.str(), g22.str()});
    const double ang = M_PI * U(rng);
    Vec3<double> x{0.5 + 0.3 * U(rng), 1.0 + 0.2 * U(rng), 1.0 + 0.2 * U(rng)};
    double g[3][3];
    metric_at(m, x.data(), g);
    // null vector (1, lambda w) with w a spatial direction
    const double wx = std::cos(ang), wy = std::sin(ang);
    const double A = g[1][1] * wx * wx + 2 * g[1][2] * wx * wy + g[2][2] * wy * wy;
    const double B = g[0][1] * wx + g[0][2] * wy;
    const double lam = (-B + std::sqrt(B * B - A * g[0][0])) / A;
    ChartOptions co;
    co.delta_p = 0.5;
    // short segment so the tube stays inside the square
    co.extend = 0.25;
    auto ch = build_fermi_chart<double>(m, x, {1.0, lam * wx, lam * wy}, 0.0, 0.5, co);
    for (const auto& nd : ch.nodes)
      if (nd.x[1] < 0 || nd.x[1] > 2 || nd.x[2] < 0 || nd.x[2] > 2) throw Error("input", "trial geodesic left M");
    const double h11 = 0.5 + U(rng), h22 = 0.5 + U(rng) * 0.4, h12 = 0.2 * U(rng);
    std::vector<cplx> H0{cplx(U(rng), h11), cplx(U(rng) * 0.3, h12), cplx(0, h12), cplx(U(rng), h22)};
    H0[2] = H0[1];
    auto st = solve_riccati(ch, H0);
    auto inv = [](const RiccatiState<double>& s) {
      cplx dy = to_std(s.Y[0]) * to_std(s.Y[3]) - to_std(s.Y[1]) * to_std(s.Y[2]);
      double di = s.H[0].im * s.H[3].im - s.H[1].im * s.H[2].im;
      return di * std::norm(dy);
    };
    const double ref = inv(st[ch.base]);
    for (const auto& s : st) worst = std::max(worst, std::fabs(inv(s) - ref) / ref);
  }
  return {worst <= 1e-8, "max relative invariant drift " + fmt("%.3e", worst) + " (tol 1e-8)"};
}

// 2. defect orders of phi and b0 in binary128
Outcome defect_orders() {
  auto m = MetricSpec::conformal(1, 3.0, interval(3.0), kCatalogConformal);
  ChartOptions co;
  co.delta_p = 1.0;
  co.extend = 0.1;
  auto ch = std::make_shared<FermiChart<Quad>>(build_fermi_chart<Quad>(m, {0.5, 1.0, 0}, {1.0, 1.0, 0}, 0.0, 0.1, co));
  BeamOptions bo;
  bo.N = 5;
  auto B = build_beam<Quad>(ch, bo);
  std::vector<double> r, eik, tr;
  for (int i = 0; i <= 8; ++i) {
    const double z = std::pow(10.0, -3.0 + 0.25 * i);
    double e = 0, t = 0;
    for (double sgn : {1.0, -1.0}) {
      Quad zz = Quad(sgn * z);
      for (double s : {0.0, 0.05}) {
        auto L = B.local(s, &zz);
        e = std::max(e, std::hypot(to_double(L.S.re), to_double(L.S.im)));
        t = std::max(t, std::hypot(to_double(L.Ta[0].re), to_double(L.Ta[0].im)));
      }
    }
    r.push_back(z);
    eik.push_back(e);
    tr.push_back(t);
  }
  const double se = loglog_slope(r, eik, 99), st = loglog_slope(r, tr, 99);
  return {se >= 5.8 && st >= 5.8, "eikonal slope " + fmt("%.3f", se) + ", transport slope " + fmt("%.3f", st) +
                                      " (need >= 5.8)"};
}

std::shared_ptr<GaussianBeam<double>> catalog_beam(const MetricSpec& m, double x0, double dp, int N, double* s_end) {
  double g0[3][3];
  const double p0[3] = {0.0, x0, 0.0};
  metric_at(m, p0, g0);
  const double vx = std::sqrt(-g0[0][0] / g0[1][1]);
  auto g = shoot_null_geodesic(m, {0.0, {x0}}, {{0.0, {x0}}, {1, vx}, Variance::Vector},
                               ShootOptions{0, 0, 1e-10, 1e-9, 1e-6, 0, true});
  const auto& seg = g.segments.front();
  ChartOptions co;
  co.delta_p = dp;
  auto ch = std::make_shared<FermiChart<double>>(build_fermi_chart(m, seg, co));
  BeamOptions bo;
  bo.N = N;
  if (s_end) *s_end = seg.s1 - seg.s0;
  return std::make_shared<GaussianBeam<double>>(build_beam<double>(ch, bo));
}

// 3. interior residual decay
Outcome residual_decay_check() {
  // the conformal catalog metric leaves a residual at rounding level in 1+1,
  // so the slope is measured on a non-conformal product metric
  auto m = MetricSpec::custom(1, 1.0, interval(2.0), "1+0.3*x^2+0.1*sin(t)", {"1+0.2*sin(2*x)+0.1*t"});
  auto B = catalog_beam(m, 0.5, 3.0, 5, nullptr);
  auto lat = Lattice::make(m, 2048, 1024);
  auto smp = sample_beam(*B, lat, m);
  auto rep = residual_decay(smp, lat, {64, 128, 256, 512}, 5, 1, 0);
  std::string d = "slope " + fmt("%.3f", rep.slope) + " (need <= " + fmt("%.3f", -rep.target_K + 0.3) + "); norms";
  for (auto& r : rep.rows) d += " " + fmt("%.3e", r.norm_L2);
  return {!rep.exact && rep.verdict == "pass", d};
}

// 4. boundary trace of a matched reflected pair
Outcome boundary_smallness_check() {
  auto m = MetricSpec::conformal(1, 2.0, interval(1.0), kCatalogConformal);
  double s_end = 0;
  auto inc = catalog_beam(m, 0.4, 2.0, 5, &s_end);
  ChartOptions co;
  co.delta_p = 2.0;
  auto pair = build_reflected_pair(m, inc, s_end, 0.8, co);
  // rho = 512 sits on the double-precision matching floor (about 5e-14)
  auto rep = boundary_smallness(pair, m, {16, 32, 64, 128, 256}, 0, 0.5, 4001, 3);
  std::string d = "slope " + fmt("%.3f", rep.slope) + " (need <= " + fmt("%.3f", rep.target + 0.3) + "); norms";
  for (double v : rep.norm) d += " " + fmt("%.3e", v);
  return {rep.verdict == "pass", d};
}

// 5. forward solver order and Picard contraction
// box u for u = sin(pi x) sin t, beta = 1 + x^2/5, g11 = 1 + sin(t)/10 (sympy)
const char* kManufactured1 =
    "5*(4*pi^2*x^2*sin(t)*sin(pi*x) - 4*pi*x*sin(t)*cos(pi*x) - 3*sin(t)^2*sin(pi*x) - 20*sin(t)*sin(pi*x) + "
    "20*pi^2*sin(t)*sin(pi*x) + sin(pi*x))/(2*(x^2*sin(t) + 10*x^2 + 5*sin(t) + 50))";

Outcome forward_solver_check() {
  auto m = MetricSpec::custom(1, 1.0, interval(1.0), "1+0.2*x^2", {"1+0.1*sin(t)"});
  const Expr src = Expr::parse(kManufactured1, coordinate_names(1));
  auto exact = [](double t, double x) { return std::sin(M_PI * x) * std::sin(t); };
  std::vector<double> err;
  for (int nx : {65, 129, 257}) {
    WaveOperator op(m, cfl_lattice(m, nx, 1, 0.8));
    RealField F(op.lat), ue(op.lat);
    for (int it = 0; it < op.nt(); ++it)
      for (int ix = 0; ix < op.nx(); ++ix) {
        const double p[3] = {op.lat.coord(0, it), op.lat.coord(1, ix), 0};
        F(it, ix) = src.eval(p);
        ue(it, ix) = exact(p[0], p[1]);
      }
    std::vector<double> u1(op.nx());
    for (int ix = 0; ix < op.nx(); ++ix) u1[ix] = std::sin(M_PI * op.lat.coord(1, ix));
    auto u = solve_linear_wave<double>(op, &F, nullptr, nullptr, &u1);
    double e = 0;
    for (std::size_t i = 0; i < u.v.size(); ++i) e += (u.v[i] - ue.v[i]) * (u.v[i] - ue.v[i]);
    err.push_back(std::sqrt(e / u.v.size()));
  }
  const double o1 = std::log2(err[0] / err[1]), o2 = std::log2(err[1] / err[2]);

  auto mm = MetricSpec::minkowski(1, 1.0, interval(1.0));
  WaveOperator op(mm, cfl_lattice(mm, 201));
  auto V = nonlinearity_from_exprs(op.lat, {{3, "1"}});
  Waveform w;
  w.t_center = 0.4;
  w.t_width = 0.3;
  SemilinearReport rep;
  solve_semilinear(op, V, make_boundary_data(op, w, GammaWindow{}, 1e-3), &rep);
  const bool ok = std::min(o1, o2) >= 1.9 && rep.converged && rep.max_ratio < 0.5;
  return {ok, "orders " + fmt("%.3f", o1) + ", " + fmt("%.3f", o2) + " (need >= 1.9); Picard max ratio " +
                  fmt("%.2e", rep.max_ratio) + " over " + std::to_string(rep.iterations) + " iterations (need < 0.5)"};
}

// 6. linearization structure
double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

double rms(const std::vector<double>& a) {
  double s = 0;
  for (double x : a) s += x * x;
  return std::sqrt(s / a.size());
}

Outcome linearization_check() {
  auto m = MetricSpec::custom(1, 1.0, interval(1.0), "1+0.2*x^2", {"1+0.1*sin(t)"});
  WaveOperator op(m, cfl_lattice(m, 161));
  auto V = nonlinearity_from_exprs(op.lat, {{3, "1"}});
  auto data = [&](int face, double tc, double tw) {
    Waveform w;
    w.face = face;
    w.t_center = tc;
    w.t_width = tw;
    return make_boundary_data(op, w, GammaWindow{});
  };
  auto linear = [&](const BoundaryData& f) {
    auto d = f.scaled();
    return solve_linear_wave<double>(op, nullptr, &d);
  };
  std::vector<BoundaryData> f{data(0, 0.3, 0.3), data(1, 0.35, 0.3), data(0, 0.5, 0.2)};

  LinearizationOptions opt;
  opt.richardson = false;
  std::vector<double> hs{0.08, 0.04, 0.02, 0.01}, dev;
  const auto w1 = linear(f[0]);
  for (double h : hs) {
    opt.eps_step = h;
    dev.push_back(rel_l2(mixed_derivative(op, V, {f[0]}, opt).field.v, w1.v));
  }
  const double order1 = loglog_slope(hs, dev, 4);

  auto d2 = mixed_derivative(op, V, {f[0], f[1]});
  const double n2 = rms(d2.field.v), noise2 = d2.cancellation;

  std::vector<RealField> w;
  for (const auto& fi : f) w.push_back(linear(fi));
  auto U = direct_linearized_solution<double>(op, V, w, {}, 3);
  auto d3 = mixed_derivative(op, V, f);
  const double e3 = rel_l2(d3.field.v, U.v);

  const bool ok = order1 >= 1.9 && n2 <= 10 * noise2 && e3 <= 0.03;
  return {ok, "order-1 eps order " + fmt("%.3f", order1) + " (need >= 1.9); order-2 norm " + fmt("%.2e", n2) +
                  " vs noise " + fmt("%.2e", noise2) + " (need <= 10x); order-3 vs direct " + fmt("%.2e", e3) +
                  " (need <= 3e-2)"};
}

// 7. Green identity with smooth test fields
Outcome greens_identity_acceptance() {
  auto m = MetricSpec::custom(1, 1.0, interval(1.0), "1+0.2*x^2", {"1+0.1*sin(t)"});
  std::vector<double> defect;
  double lhs = 0;
  for (int nx : {81, 161, 321}) {
    WaveOperator op(m, cfl_lattice(m, nx, 1, 0.5));
    auto sample = [&](const char* e) { return nonlinearity_from_exprs(op.lat, {{3, e}}).V.at(3); };
    const auto dV = sample("exp(-((t-0.55)^2+(x-0.5)^2)/0.1)");
    std::vector<RealField> w(4, RealField(op.lat));
    w[1].v = sample("cos(t+x)");
    w[2].v = sample("1+x*t");
    w[3].v = sample("sin(2*x-t)+0.5");
    Waveform wf;
    wf.t_center = 0.4;
    wf.t_width = 0.3;
    auto g = make_boundary_data(op, wf, GammaWindow{}).scaled();
    w[0] = solve_linear_wave<double>(op, nullptr, &g, nullptr, nullptr, Direction::Backward);
    RealField F(op.lat);
    for (std::size_t i = 0; i < F.v.size(); ++i) F.v[i] = -dV[i] * w[1].v[i] * w[2].v[i] * w[3].v[i];
    auto U = solve_linear_wave<double>(op, &F, nullptr);
    auto r = greens_identity_check<double>(op, dV, w, neumann_trace(op, U));
    defect.push_back(r.lhs - r.rhs);
    lhs = r.lhs;
  }
  const double est = std::fabs(defect[1] - defect[2]) / 3;
  const double order = std::log2(std::fabs(defect[1] / defect[2]));
  const bool ok = std::fabs(defect[2]) <= 5 * est && order >= 1.8;
  return {ok, "lhs " + fmt("%.6e", lhs) + "; defects " + fmt("%.3e", defect[0]) + " " + fmt("%.3e", defect[1]) + " " +
                  fmt("%.3e", defect[2]) + "; finest/estimate " + fmt("%.2f", std::fabs(defect[2]) / est) +
                  " (need <= 5); order " + fmt("%.3f", order) + " (need >= 1.8)"};
}

// 8. point recovery of V3 from the oscillatory integral
const char* kPeakBump = "exp(-((t-1)^2+(x-0.5)^2)/(2*0.15^2))";
const SpacetimePoint kPeak{1.0, {0.5}};

Outcome point_recovery_check() {
  auto m = MetricSpec::minkowski(1, 2.0, interval(1.0));
  auto lat = Lattice::make(m, 1024, 512);
  auto V1 = nonlinearity_from_exprs(lat, {{3, kPeakBump}});
  auto pe = recover_vm(3, m, lat, V1, NonlinearitySpec{}, kPeak, {64, 128, 256, 512});
  std::vector<double> err;
  for (double e : pe.estimate) err.push_back(std::fabs(e - 1));
  const bool decreasing = err[2] < err[1] && err[3] < err[2];
  const bool ok = pe.status == "ok" && err[3] <= 0.15 && decreasing;
  std::string d = "estimates";
  for (double e : pe.estimate) d += " " + fmt("%.4f", e);
  return {ok, d + "; error at rho 512 " + fmt("%.4f", err[3]) + " (need <= 0.15); top-three errors " +
                  (decreasing ? "decreasing" : "not decreasing") + "; extrapolated " + fmt("%.4f", pe.extrapolated)};
}

// 9. V4 with V3 shared, from mixed DtN derivatives of both nonlinearities
Outcome induction_step_check() {
  auto m = MetricSpec::minkowski(1, 2.0, interval(1.0));
  auto lat = Lattice::make(m, 1280, 512);
  auto V1 = nonlinearity_from_exprs(lat, {{3, "1"}, {4, kPeakBump}});
  auto V2 = nonlinearity_from_exprs(lat, {{3, "1"}});
  ReconstructionOptions o;
  o.source = IntegralSource::DtN;
  o.linear.richardson = false;
  auto pe = recover_vm(4, m, lat, V1, V2, kPeak, {32, 64, 128}, o);
  const double err = std::fabs(pe.value - 1);
  const bool ok = pe.status == "ok" && err <= 0.2;
  std::string d = "DtN estimates";
  for (double e : pe.estimate) d += " " + fmt("%.4f", e);
  return {ok, d + "; error at rho 128 " + fmt("%.4f", err) + " (need <= 0.2)"};
}

// 10. a difference outside U is invisible to the DtN battery; one inside is seen and localized
Outcome uniqueness_sanity_check() {
  auto m = MetricSpec::minkowski(1, 2.0, interval(1.0));
  auto lat = Lattice::make(m, 321, 129);
  WaveOperator op(m, lat);
  auto reach = reachable_set(m, lat);
  auto base = nonlinearity_from_exprs(lat, {{3, "1"}});
  auto outside = nonlinearity_from_exprs(lat, {{3, "1+exp(-((t-0.15)^2+(x-0.5)^2)/(2*0.03^2))"}});
  auto inside = nonlinearity_from_exprs(lat, {{3, std::string("1+") + kPeakBump}});

  double leak = 0;  // largest outside-pair difference on U
  for (std::size_t i = 0; i < lat.size(); ++i)
    if (reach.mask[i]) leak = std::max(leak, std::fabs(outside.V.at(3)[i] - 1));

  SemilinearOptions so{1e-12, 80, 0.1};
  double d_out = 0, d_in = 0;
  for (int face : {0, 1})
    for (double tc : {0.4, 0.7, 1.0, 1.3}) {
      Waveform wf;
      wf.face = face;
      wf.t_center = tc;
      wf.t_width = 0.25;
      auto f = make_boundary_data(op, wf, GammaWindow{}, 0.05);
      const auto ref = dtn_apply(op, base, f, so).trace;
      const auto a = dtn_apply(op, outside, f, so).trace, b = dtn_apply(op, inside, f, so).trace;
      double top = 0, da = 0, db = 0;
      for (std::size_t k = 0; k < ref.size(); ++k) {
        top = std::max(top, std::fabs(ref[k]));
        da = std::max(da, std::fabs(a[k] - ref[k]));
        db = std::max(db, std::fabs(b[k] - ref[k]));
      }
      d_out = std::max(d_out, da / top);
      d_in = std::max(d_in, db / top);
    }

  ReconstructionOptions o;
  o.quad.min_nodes_per_efold = 4;
  o.stride = 16;
  auto fr = reconstruct_v3_field(m, lat, inside, base, {16, 32}, o);
  int best = -1;
  for (std::size_t k = 0; k < fr.estimate.size(); ++k)
    if (fr.tested[k] && (best < 0 || fr.estimate[k] > fr.estimate[best])) best = static_cast<int>(k);
  double far = 0;
  for (std::size_t k = 0; k < fr.estimate.size(); ++k)
    if (fr.tested[k] && std::hypot(fr.points[k].p.t - 1, fr.points[k].p.x[0] - 0.5) > 0.6)
      far = std::max(far, std::fabs(fr.estimate[k]));
  const bool peak_ok = best >= 0 && std::fabs(fr.points[best].p.t - 1) < 1e-12 &&
                       std::fabs(fr.points[best].p.x[0] - 0.5) < 1e-12;
  const double peak = best >= 0 ? fr.estimate[best] : 0;
  const bool local = peak_ok && far <= 0.1 * peak;

  const bool ok = d_out <= 5 * so.tol && d_in > so.tol && local;
  return {ok, "outside pair " + fmt("%.2e", d_out) + " (need <= " + fmt("%.0e", 5 * so.tol) + ", max difference on U " +
                  fmt("%.1e", leak) + "); inside pair " + fmt("%.2e", d_in) + " (need > " + fmt("%.0e", so.tol) +
                  "); reconstruction peak " + fmt("%.3f", peak) + (peak_ok ? " at (1, 0.5)" : " misplaced") +
                  ", far field max " + fmt("%.3f", far) + " (need <= 0.1 peak)"};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> all = {
      {1, "riccati invariant", 10, riccati_invariant},
      {2, "eikonal/transport jet orders", 30, defect_orders},
      {3, "interior residual decay", 300, residual_decay_check},
      {4, "reflected-beam boundary smallness", 300, boundary_smallness_check},
      {5, "forward solver", 120, forward_solver_check},
      {6, "linearization structure", 600, linearization_check},
      {7, "green identity", 300, greens_identity_acceptance},
      {8, "point recovery of V3", 1200, point_recovery_check},
      {9, "induction step (V4)", 1800, induction_step_check},
      {10, "uniqueness sanity", 1800, uniqueness_sanity_check},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  int failed = 0;
  for (auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = dt < c.limit_s;
    const bool ok = o.pass && in_time;
    if (!ok) ++failed;
    std::printf("criterion %2d %-36s %s  %s; runtime %.1f s (limit %.0f s)\n", c.id, c.name, ok ? "PASS" : "FAIL",
                o.detail.c_str(), dt, c.limit_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
