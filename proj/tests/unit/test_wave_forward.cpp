#include "beamlab/wave_forward.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace beamlab;

namespace {
SpatialDomain strip(double L = 1.0) {
  SpatialDomain d;
  d.kind = DomainKind::Interval;
  d.lx = L;
  return d;
}
SpatialDomain box(double L = 1.0) {
  SpatialDomain d;
  d.kind = DomainKind::Rectangle;
  d.lx = d.ly = L;
  return d;
}

using Exact = std::function<double(double, double, double)>;

// box u for u = sin(pi x) sin t, beta = 1 + x^2/5, g11 = 1 + sin(t)/10 (sympy)
const char* kSource1 =
    "5*(4*pi^2*x^2*sin(t)*sin(pi*x) - 4*pi*x*sin(t)*cos(pi*x) - 3*sin(t)^2*sin(pi*x) - 20*sin(t)*sin(pi*x) + "
    "20*pi^2*sin(t)*sin(pi*x) + sin(pi*x))/(2*(x^2*sin(t) + 10*x^2 + 5*sin(t) + 50))";

// box u for u = sin(pi x) sin(pi y) cos t, beta = 1 + xy/10,
// g0 = [[1 + t/10, sin(x)/10], [sin(x)/10, 1 + y^2/5]] (sympy)
const char* kSource2 =
    "5*(2*pi^2*(x*y + 10)^2*(t + 2*y^2 + 20)*(2*t*y^2 + 10*t + 20*y^2 + cos(x)^2 + 99)^2*sin(pi*x)*sin(pi*y)*cos(t) "
    "+ 4*pi^2*(x*y + 10)^2*(2*t*y^2 + 10*t + 20*y^2 + cos(x)^2 + 99)^2*sin(x)*cos(t)*cos(pi*x)*cos(pi*y) + "
    "2*pi*(x*y + 10)^2*(2*t*y^2 + 10*t + 20*y^2 + cos(x)^2 + 99)^2*sin(pi*x)*cos(t)*cos(x)*cos(pi*y) + 4*pi*(x*y + "
    "10)*(2*y*(t + 10)^2*sin(pi*x)*cos(pi*y) - 2*y*(t + 10)*sin(x)*sin(pi*y)*cos(pi*x) - 2*(y^2 + "
    "5)*sin(x)*sin(pi*y)*cos(x)*cos(pi*x) + sin(x)^2*sin(pi*x)*cos(x)*cos(pi*y))*(2*t*x*y^3 + 10*t*x*y + 20*t*y^2 + "
    "100*t + 20*x*y^3 + x*y*cos(x)^2 + 99*x*y + 200*y^2 + 10*cos(x)^2 + 990)*cos(t) - pi*(x*y + 10)*((t + 10)*(6*t*x*y^2 "
    "+ 10*t*x + 40*t*y + 60*x*y^2 + x*cos(x)^2 + 99*x + 400*y)*sin(pi*x)*cos(pi*y) + 2*(y^2 + 5)*(2*t*y^3 + 10*t*y - "
    "x*y*sin(2*x) + 20*y^3 - y*sin(x)^2 + 100*y - 10*sin(2*x))*sin(pi*y)*cos(pi*x) - (2*t*y^3 + 10*t*y - x*y*sin(2*x) + "
    "20*y^3 - y*sin(x)^2 + 100*y - 10*sin(2*x))*sin(x)*sin(pi*x)*cos(pi*y) - (6*t*x*y^2 + 10*t*x + 40*t*y + 60*x*y^2 + "
    "x*cos(x)^2 + 99*x + 400*y)*sin(x)*sin(pi*y)*cos(pi*x))*(2*t*y^2 + 10*t + 20*y^2 + cos(x)^2 + 99)*cos(t) - 2*(x*y + "
    "10)*(2*t*y^2 + 10*t + 20*y^2 + cos(x)^2 + 99)^3*sin(pi*x)*sin(pi*y)*cos(t) - 2*(x*y^3 + 5*x*y + 10*y^2 + "
    "50)*(2*t*y^2 + 10*t + 20*y^2 + cos(x)^2 + 99)^2*sin(t)*sin(pi*x)*sin(pi*y))/((x*y + 10)*(2*t*y^2 + 10*t + 20*y^2 + "
    "cos(x)^2 + 99)^2*(2*t*x*y^3 + 10*t*x*y + 20*t*y^2 + 100*t + 20*x*y^3 + x*y*cos(x)^2 + 99*x*y + 200*y^2 + "
    "10*cos(x)^2 + 990))";

RealField sample(const Lattice& lat, const Exact& f) {
  RealField u(lat);
  for (int it = 0; it < lat.dims[0]; ++it)
    for (int ix = 0; ix < lat.dims[1]; ++ix)
      for (int iy = 0; iy < lat.dims[2]; ++iy)
        u(it, ix, iy) = f(lat.coord(0, it), lat.coord(1, ix), lat.n == 2 ? lat.coord(2, iy) : 0.0);
  return u;
}

RealField sample_expr(const Lattice& lat, const std::string& text) {
  const Expr e = Expr::parse(text, coordinate_names(lat.n));
  return sample(lat, [&](double t, double x, double y) {
    const double p[3] = {t, x, y};
    return e.eval(p);
  });
}

SigmaData<double> lateral(const WaveOperator& op, const Exact& f) {
  const std::size_t ns = op.bnd.sites.size();
  SigmaData<double> d(op.nt() * ns);
  for (int it = 0; it < op.nt(); ++it)
    for (std::size_t b = 0; b < ns; ++b) {
      const int s = op.bnd.sites[b];
      const int ix = s / op.ny(), iy = s % op.ny();
      d[it * ns + b] =
          f(op.lat.coord(0, it), op.lat.coord(1, ix), op.lat.n == 2 ? op.lat.coord(2, iy) : 0.0);
    }
  return d;
}

std::vector<double> level(const Lattice& lat, double t, const Exact& f) {
  std::vector<double> v(lat.spatial_size());
  for (int ix = 0; ix < lat.dims[1]; ++ix)
    for (int iy = 0; iy < lat.dims[2]; ++iy)
      v[ix * lat.dims[2] + iy] = f(t, lat.coord(1, ix), lat.n == 2 ? lat.coord(2, iy) : 0.0);
  return v;
}

double rms_error(const RealField& u, const RealField& ue) {
  double s = 0;
  for (std::size_t i = 0; i < u.v.size(); ++i) s += (u.v[i] - ue.v[i]) * (u.v[i] - ue.v[i]);
  return std::sqrt(s / u.v.size());
}

// forward or backward manufactured error at spatial resolution nx
double manufactured_error(const MetricSpec& m, int nx, const Exact& u, const Exact& ut, const char* source,
                          Direction dir) {
  const int ny = m.n == 2 ? nx : 1;
  Lattice lat = cfl_lattice(m, nx, ny, 0.8);
  WaveOperator op(m, lat);
  auto F = sample_expr(lat, source);
  auto f = lateral(op, u);
  const double t0 = dir == Direction::Forward ? 0.0 : m.T;
  auto u0 = level(lat, t0, u), u1 = level(lat, t0, ut);
  auto sol = solve_linear_wave<double>(op, &F, &f, &u0, &u1, dir);
  return rms_error(sol, sample(lat, u));
}
} // namespace

TEST(WaveOperator, RejectsCflViolation) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  EXPECT_THROW(WaveOperator(m, Lattice::make(m, 20, 41)), Error);
  Lattice ok = cfl_lattice(m, 41, 1, 0.9);
  WaveOperator op(m, ok);
  EXPECT_LE(op.cfl, 0.9);
  EXPECT_GT(op.cfl, 0.8);
}

TEST(LinearWave, ManufacturedConvergence1D) {
  auto m = MetricSpec::custom(1, 1.0, strip(), "1+0.2*x^2", {"1+0.1*sin(t)"});
  Exact u = [](double t, double x, double) { return std::sin(M_PI * x) * std::sin(t); };
  Exact ut = [](double t, double x, double) { return std::sin(M_PI * x) * std::cos(t); };
  for (auto dir : {Direction::Forward, Direction::Backward}) {
    const double e1 = manufactured_error(m, 33, u, ut, kSource1, dir);
    const double e2 = manufactured_error(m, 65, u, ut, kSource1, dir);
    const double e3 = manufactured_error(m, 129, u, ut, kSource1, dir);
    EXPECT_GE(std::log2(e1 / e2), 1.9) << e1 << " " << e2;
    EXPECT_GE(std::log2(e2 / e3), 1.9) << e2 << " " << e3;
  }
}

TEST(LinearWave, ManufacturedConvergence2DWithCrossTerm) {
  auto m = MetricSpec::custom(2, 1.0, box(), "1+0.1*x*y", {"1+0.1*t", "0.1*sin(x)", "1+0.2*y^2"});
  Exact u = [](double t, double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y) * std::cos(t); };
  Exact ut = [](double t, double x, double y) { return -std::sin(M_PI * x) * std::sin(M_PI * y) * std::sin(t); };
  const double e1 = manufactured_error(m, 17, u, ut, kSource2, Direction::Forward);
  const double e2 = manufactured_error(m, 33, u, ut, kSource2, Direction::Forward);
  const double e3 = manufactured_error(m, 65, u, ut, kSource2, Direction::Forward);
  EXPECT_GE(std::log2(e1 / e2), 1.9) << e1 << " " << e2;
  EXPECT_GE(std::log2(e2 / e3), 1.9) << e2 << " " << e3;
}

TEST(LinearWave, TravellingBumpMatchesCharacteristics) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  auto g = [](double s) { return std::fabs(s) < 0.2 ? std::pow(std::cos(2.5 * M_PI * s), 4) : 0.0; };
  Exact u = [&](double t, double x, double) { return g(x - t - 0.3) + g(x + t - 0.9); };
  auto err = [&](int nx) {
    Lattice lat = cfl_lattice(m, nx, 1, 0.5);
    WaveOperator op(m, lat);
    auto f = lateral(op, u);
    Exact ut = [&](double t, double x, double) {
      const double h = 1e-6;
      return (u(t + h, x, 0) - u(t - h, x, 0)) / (2 * h);
    };
    auto u0 = level(lat, 0, u), u1 = level(lat, 0, ut);
    auto sol = solve_linear_wave<double>(op, nullptr, &f, &u0, &u1);
    return rms_error(sol, sample(lat, u));
  };
  const double e1 = err(101), e2 = err(201);
  EXPECT_LT(e2, 2e-3);
  EXPECT_GE(std::log2(e1 / e2), 1.8);
}

TEST(LinearWave, BackwardSolveIsTimeReflection) {
  auto m = MetricSpec::custom(1, 1.0, strip(), "1+0.3*x", {"1+0.2*x^2"});
  Lattice lat = cfl_lattice(m, 81, 1, 0.8);
  WaveOperator op(m, lat);
  Exact a = [](double, double x, double) { return std::sin(M_PI * x) * std::exp(-20 * (x - 0.4) * (x - 0.4)); };
  Exact b = [](double, double x, double) { return std::sin(2 * M_PI * x); };
  auto u0 = level(lat, 0, a), u1 = level(lat, 0, b);
  auto fw = solve_linear_wave<double>(op, nullptr, nullptr, &u0, &u1, Direction::Forward);
  std::vector<double> mu1(u1.size());
  for (std::size_t i = 0; i < u1.size(); ++i) mu1[i] = -u1[i];
  auto bw = solve_linear_wave<double>(op, nullptr, nullptr, &u0, &mu1, Direction::Backward);
  const int nt = op.nt();
  double d = 0;
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < op.nx(); ++ix) d = std::max(d, std::fabs(fw(it, ix) - bw(nt - 1 - it, ix)));
  EXPECT_LT(d, 1e-12);
}

TEST(LinearWave, DiscreteEnergyConservedForStaticMetric) {
  auto m = MetricSpec::custom(1, 2.0, strip(), "1+0.3*x", {"1+0.2*x^2"});
  Lattice lat = cfl_lattice(m, 101, 1, 0.9);
  WaveOperator op(m, lat);
  Exact a = [](double, double x, double) { return std::exp(-80 * (x - 0.5) * (x - 0.5)); };
  auto u0 = level(lat, 0, a);
  auto u = solve_linear_wave<double>(op, nullptr, nullptr, &u0, nullptr);
  const int nx = op.nx();
  // leapfrog invariant: kinetic part at n+1/2 plus the staggered potential product
  auto energy = [&](int n) {
    double e = 0;
    for (int ix = 1; ix < nx - 1; ++ix) {
      const double v = (u(n + 1, ix) - u(n, ix)) / op.dt;
      e += op.A[std::size_t(n) * nx + ix] * v * v;
    }
    for (int ix = 0; ix < nx - 1; ++ix)
      e += op.Bxx[ix] * (u(n + 1, ix + 1) - u(n + 1, ix)) * (u(n, ix + 1) - u(n, ix)) / (op.dx * op.dx);
    return e;
  };
  const double e0 = energy(1);
  for (int n = 2; n + 1 < op.nt(); ++n) EXPECT_NEAR(energy(n), e0, 1e-10 * e0) << n;
}

TEST(ApplyBox, ManufacturedResidualIsSecondOrder) {
  auto m = MetricSpec::custom(1, 1.0, strip(), "1+0.2*x^2", {"1+0.1*sin(t)"});
  Exact u = [](double t, double x, double) { return std::sin(M_PI * x) * std::sin(t); };
  auto err = [&](int nx) {
    Lattice lat = cfl_lattice(m, nx, 1, 0.8);
    WaveOperator op(m, lat);
    auto r = apply_box(op, sample(lat, u));
    auto F = sample_expr(lat, kSource1);
    double e = 0;
    for (int it = 0; it < op.nt(); ++it)
      for (int ix = 1; ix < op.nx() - 1; ++ix) e = std::max(e, std::fabs(r(it, ix) - F(it, ix)));
    return e;
  };
  EXPECT_GE(std::log2(err(41) / err(81)), 1.9);
}

TEST(Semilinear, ZeroDataGivesZeroInOneIteration) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 41));
  auto V = nonlinearity_from_exprs(op.lat, {{3, "1"}});
  Waveform w;
  w.kind = "zero";
  auto f = make_boundary_data(op, w, GammaWindow{});
  SemilinearReport rep;
  auto u = solve_semilinear(op, V, f, &rep);
  EXPECT_EQ(rep.iterations, 1);
  for (double x : u.v) EXPECT_EQ(x, 0.0);
}

TEST(Semilinear, CubicScalingAndFastContraction) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 81));
  auto V = nonlinearity_from_exprs(op.lat, {{3, "1"}});
  Waveform w;
  w.t_center = 0.4;
  w.t_width = 0.3;
  std::vector<double> dev;
  for (double eps : {1e-3, 5e-4}) {
    auto f = make_boundary_data(op, w, GammaWindow{}, eps);
    ASSERT_TRUE(f.compatible(op.lat));
    SemilinearReport rep;
    auto u = solve_semilinear(op, V, f, &rep);
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.iterations, 6);
    EXPECT_LT(rep.max_ratio, 0.5);
    auto data = f.scaled();
    auto lin = solve_linear_wave<double>(op, nullptr, &data);
    double d = 0;
    for (std::size_t i = 0; i < u.v.size(); ++i) d += (u.v[i] - lin.v[i]) * (u.v[i] - lin.v[i]);
    dev.push_back(std::sqrt(d));
  }
  EXPECT_NEAR(dev[0] / dev[1], 8.0, 0.1);
}

TEST(Semilinear, RejectsLargeData) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 41));
  auto V = nonlinearity_from_exprs(op.lat, {{3, "1"}});
  auto f = make_boundary_data(op, Waveform{}, GammaWindow{}, 1.0);
  EXPECT_THROW(solve_semilinear(op, V, f), Error);
  EXPECT_THROW(nonlinearity_from_exprs(op.lat, {{2, "1"}}), Error);
}

TEST(Semilinear, ContractionRatioGrowsWithAmplitude) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 61));
  auto V = nonlinearity_from_exprs(op.lat, {{3, "50"}});
  SemilinearOptions o;
  o.eps0 = 1.0;
  double last = 0;
  for (double eps : {0.02, 0.05, 0.1}) {
    SemilinearReport rep;
    solve_semilinear(op, V, make_boundary_data(op, Waveform{}, GammaWindow{}, eps), &rep, o);
    EXPECT_GT(rep.max_ratio, last);
    last = rep.max_ratio;
  }
}

TEST(NeumannTrace, LinearAndSineProfiles) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 41));
  auto tx = neumann_trace(op, sample(op.lat, [](double, double x, double) { return x; }));
  auto ts = neumann_trace(op, sample(op.lat, [](double, double x, double) { return std::sin(M_PI * x); }));
  // entries: 0 is x = 0 (outward -x), 1 is x = 1
  for (int it = 0; it < op.nt(); ++it) {
    EXPECT_NEAR(tx[it * 2 + 1], 1.0, 1e-12);
    EXPECT_NEAR(tx[it * 2 + 0], -1.0, 1e-12);
    EXPECT_NEAR(ts[it * 2 + 1], -M_PI, 2e-2);
  }
  // g11 = (2 + t)^2 on x = 0, 1: d_nu x = +-1 / (2 + t)
  auto mc = MetricSpec::custom(1, 1.0, strip(), "1", {"(2+t)^2*(1+x*(1-x))"});
  WaveOperator oc(mc, cfl_lattice(mc, 41));
  auto tc = neumann_trace(oc, sample(oc.lat, [](double, double x, double) { return x; }));
  for (int it = 0; it < oc.nt(); ++it) {
    const double t = oc.lat.coord(0, it);
    EXPECT_NEAR(tc[it * 2 + 1], 1.0 / (2 + t), 1e-12);
    EXPECT_NEAR(tc[it * 2 + 0], -1.0 / (2 + t), 1e-12);
  }
}

TEST(NeumannTrace, RefinementQuartersErrorOnCurvedRectangle) {
  auto m = MetricSpec::custom(2, 0.5, box(), "1+0.1*x*y", {"1+0.1*t", "0.1*sin(x)", "1+0.2*y^2"});
  // u = exp(x) cos(y): outward normal derivative in closed form
  Exact u = [](double, double x, double y) { return std::exp(x) * std::cos(y); };
  auto err = [&](int nx) {
    WaveOperator op(m, cfl_lattice(m, nx, nx));
    auto tr = neumann_trace(op, sample(op.lat, u));
    double e = 0;
    const std::size_t ne = op.bnd.entries.size();
    for (int it = 0; it < op.nt(); it += 3)
      for (std::size_t k = 0; k < ne; ++k) {
        const auto& en = op.bnd.entries[k];
        const double t = op.lat.coord(0, it), x = op.lat.coord(1, en.ix), y = op.lat.coord(2, en.iy);
        const double a = 1 + 0.1 * t, b = 0.1 * std::sin(x), c = 1 + 0.2 * y * y, det = a * c - b * b;
        const double gi[2][2] = {{c / det, -b / det}, {-b / det, a / det}};
        double n[2] = {0, 0};
        n[en.face / 2] = en.face % 2 ? 1.0 : -1.0;
        const double du[2] = {std::exp(x) * std::cos(y), -std::exp(x) * std::sin(y)};
        double num = 0, len = 0;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            num += gi[i][j] * n[j] * du[i];
            len += gi[i][j] * n[i] * n[j];
          }
        e = std::max(e, std::fabs(tr[it * ne + k] - num / std::sqrt(len)));
      }
    return e;
  };
  const double r = err(21) / err(41);
  EXPECT_GT(r, 3.5);
  EXPECT_LT(r, 4.6);
}

TEST(DtN, LinearSuperpositionAndCubicDefect) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 81));
  Waveform w1, w2;
  w1.t_center = 0.35;
  w2.face = 1;
  w2.t_center = 0.5;
  GammaWindow gamma;
  gamma.faces = {0, 1};
  auto f1 = make_boundary_data(op, w1, gamma, 0.01), f2 = make_boundary_data(op, w2, gamma, 0.01);
  auto f12 = f1;
  for (std::size_t i = 0; i < f12.f.size(); ++i) f12.f[i] += f2.f[i];
  NonlinearitySpec none;
  auto a = dtn_apply(op, none, f1), b = dtn_apply(op, none, f2), c = dtn_apply(op, none, f12);
  double d = 0, s = 0;
  for (std::size_t i = 0; i < c.trace.size(); ++i) {
    d = std::max(d, std::fabs(c.trace[i] - a.trace[i] - b.trace[i]));
    s = std::max(s, std::fabs(c.trace[i]));
  }
  EXPECT_LT(d, 1e-13 * s);

  auto V = nonlinearity_from_exprs(op.lat, {{3, "1"}});
  auto defect = [&](double lam) {
    auto fl = f1;
    fl.eps = lam;
    auto big = dtn_apply(op, V, fl);
    auto unit = dtn_apply(op, V, [&] {
      auto g = f1;
      g.eps = 1e-4;
      return g;
    }());
    double e = 0;
    for (std::size_t i = 0; i < big.trace.size(); ++i)
      e = std::max(e, std::fabs(big.trace[i] - lam / 1e-4 * unit.trace[i]));
    return e;
  };
  const double slope = std::log(defect(0.04) / defect(0.02)) / std::log(2.0);
  EXPECT_NEAR(slope, 3.0, 0.1);
}

TEST(DtN, ZeroInputZeroTraceAndMaskedOutput) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator op(m, cfl_lattice(m, 41));
  GammaWindow gamma;
  gamma.faces = {0};
  Waveform w;
  w.kind = "zero";
  auto d = dtn_apply(op, nonlinearity_from_exprs(op.lat, {{3, "1"}}), make_boundary_data(op, w, gamma));
  for (double x : d.trace) EXPECT_EQ(x, 0.0);
  for (int it = 0; it < op.nt(); ++it) EXPECT_EQ(d.mask[it * 2 + 1], 0);
}

TEST(Extension, TraceLinearityAndCollar) {
  auto m = MetricSpec::minkowski(2, 1.0, box());
  WaveOperator op(m, cfl_lattice(m, 41, 41));
  Waveform w;
  w.face = 2;
  auto f = make_boundary_data(op, w, GammaWindow{}, 0.5);
  auto h = extend_boundary_data(op, f);
  const auto data = f.scaled();
  const std::size_t ns = op.bnd.sites.size();
  for (int it = 0; it < op.nt(); ++it)
    for (std::size_t b = 0; b < ns; ++b)
      EXPECT_EQ(h.v[std::size_t(it) * op.S() + op.bnd.sites[b]], data[it * ns + b]);
  for (int it = 0; it < op.nt(); ++it)
    for (int ix = 8; ix < 33; ++ix)
      for (int iy = 8; iy < 33; ++iy) EXPECT_EQ(h(it, ix, iy), 0.0);
  auto f2 = f;
  f2.eps = 1.5;
  auto h2 = extend_boundary_data(op, f2);
  for (std::size_t i = 0; i < h.v.size(); ++i) EXPECT_DOUBLE_EQ(h2.v[i], 3.0 * h.v[i]);
}

TEST(Remainder, CompletesQuasimodeToDiscreteSolution) {
  auto m = MetricSpec::conformal(1, 1.0, strip(2.0), "1+0.05*x^2");
  ChartOptions co;
  co.delta_p = 2.0;
  auto ch = std::make_shared<FermiChart<double>>(build_fermi_chart<double>(m, {0.0, 0.5, 0}, {1, 1, 0}, 0.0, 1.0, co));
  auto B = build_beam<double>(ch, {});
  WaveOperator op(m, cfl_lattice(m, 401, 1, 0.9));
  auto smp = sample_beam(B, op.lat, m);
  auto r = make_remainder(op, smp, 8);
  ComplexField w(op.lat);
  w.v = smp.field(8);
  double vmax = 0;
  for (const auto& x : w.v) vmax = std::max(vmax, std::abs(x));
  for (std::size_t i = 0; i < w.v.size(); ++i) w.v[i] += r.v[i];
  auto res = apply_box(op, w);
  double e = 0;
  for (int it = 1; it + 1 < op.nt(); ++it)
    for (int ix = 1; ix + 1 < op.nx(); ++ix) e = std::max(e, std::abs(res(it, ix)));
  EXPECT_LT(e, 1e-9 * vmax / (op.dt * op.dt));
  for (int ix = 0; ix < op.nx(); ++ix) EXPECT_EQ(r(0, ix), cplx(0));
  for (int it = 0; it < op.nt(); ++it) EXPECT_EQ(r(it, 0), cplx(0));
}
