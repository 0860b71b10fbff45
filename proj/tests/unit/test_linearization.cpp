#include "beamlab/linearization.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace beamlab;

namespace {

SpatialDomain strip() {
  SpatialDomain d;
  d.kind = DomainKind::Interval;
  d.lx = 1.0;
  return d;
}

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

BoundaryData data(const WaveOperator& op, int face, double tc, double tw, double amp = 1.0) {
  Waveform w;
  w.face = face;
  w.t_center = tc;
  w.t_width = tw;
  w.amplitude = amp;
  return make_boundary_data(op, w, GammaWindow{});
}

RealField linear(const WaveOperator& op, const BoundaryData& f) {
  auto d = f.scaled();
  return solve_linear_wave<double>(op, nullptr, &d);
}

struct Strip {
  MetricSpec m = MetricSpec::custom(1, 1.0, strip(), "1+0.2*x^2", {"1+0.1*sin(t)"});
  WaveOperator op{m, cfl_lattice(m, 81)};
};

} // namespace

TEST(SetPartitions, CountsAreBellNumbers) {
  const int bell[] = {1, 1, 2, 5, 15, 52};
  for (int m = 1; m <= 5; ++m) EXPECT_EQ(set_partitions(m).size(), bell[m]);
  int s43 = 0, s53 = 0;
  for (const auto& p : set_partitions(4)) s43 += p.size() == 3;
  for (const auto& p : set_partitions(5)) s53 += p.size() == 3;
  EXPECT_EQ(s43, 6);
  EXPECT_EQ(s53, 25);
  for (const auto& p : set_partitions(5)) {
    unsigned all = 0;
    for (unsigned b : p) {
      EXPECT_EQ(all & b, 0u);
      all |= b;
    }
    EXPECT_EQ(all, 31u);
  }
}

TEST(Source, ThirdOrderIsV3TimesProduct) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{3, "1+t*x"}, {4, "2"}});
  std::vector<RealField> w;
  for (int i = 0; i < 3; ++i) w.push_back(linear(s.op, data(s.op, i % 2, 0.3 + 0.1 * i, 0.25)));
  auto src = linearized_source<double>(V, w, {}, 3);
  for (std::size_t i = 0; i < src.v.size(); ++i)
    ASSERT_EQ(src.v[i], V.V.at(3)[i] * w[0].v[i] * w[1].v[i] * w[2].v[i]);
}

TEST(Source, FourthOrderWithoutV3IsV4TimesProduct) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{4, "1+x"}});
  std::vector<RealField> w;
  for (int i = 0; i < 4; ++i) w.push_back(linear(s.op, data(s.op, i % 2, 0.3 + 0.05 * i, 0.25)));
  auto src = linearized_source<double>(V, w, {}, 4);  // no lower fields needed
  for (std::size_t i = 0; i < src.v.size(); i += 7)
    ASSERT_NEAR(src.v[i], V.V.at(4)[i] * w[0].v[i] * w[1].v[i] * w[2].v[i] * w[3].v[i], 1e-15);
}

TEST(Source, FourthOrderMatchesBruteForceEpsExpansion) {
  // Two-cell toy lattice with random fields; the oracle expands V(u) for
  // u = sum_I eps^I U_I in square-free monomials and reads off eps1..eps4.
  Lattice lat;
  lat.n = 1;
  lat.dims = {2, 2, 1};
  lat.hi = {1, 1, 0};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  NonlinearitySpec V;
  V.set(3, {U(rng), U(rng), U(rng), U(rng)});
  V.set(4, {U(rng), U(rng), U(rng), U(rng)});
  std::vector<RealField> w(4, RealField(lat));
  std::map<unsigned, RealField> lower;
  std::vector<std::vector<double>> coef(16, std::vector<double>(lat.size(), 0.0));
  for (unsigned I = 1; I < 16; ++I) {
    RealField f(lat);
    for (auto& x : f.v) x = U(rng);
    coef[I] = f.v;
    if (__builtin_popcount(I) == 1) w[__builtin_ctz(I)] = f;
    else if (I != 15) lower[I] = f;
  }
  auto src = linearized_source<double>(V, w, lower, 4);
  for (std::size_t node = 0; node < lat.size(); ++node) {
    auto mul = [&](const std::vector<double>& a, const std::vector<double>& b) {
      std::vector<double> c(16, 0.0);
      for (unsigned i = 0; i < 16; ++i)
        for (unsigned j = 0; j < 16; ++j)
          if ((i & j) == 0) c[i | j] += a[i] * b[j];
      return c;
    };
    std::vector<double> u(16, 0.0);
    for (unsigned I = 1; I < 16; ++I) u[I] = coef[I][node];
    auto u2 = mul(u, u), u3 = mul(u2, u), u4 = mul(u3, u);
    const double oracle = V.V[3][node] * u3[15] / 6 + V.V[4][node] * u4[15] / 24;
    EXPECT_NEAR(src.v[node], oracle, 1e-14);
  }
}

TEST(Source, MissingLowerOrderFieldThrows) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{3, "1"}, {4, "1"}});
  std::vector<RealField> w(4, RealField(s.op.lat));
  try {
    linearized_source<double>(V, w, {}, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "dependency");
  }
}

TEST(MixedDerivative, FirstOrderIsLinearSolveAtSecondOrderInEps) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{3, "1"}});
  auto f = data(s.op, 0, 0.35, 0.3);
  const auto w = linear(s.op, f);
  LinearizationOptions opt;
  opt.richardson = false;
  std::vector<double> hs{0.08, 0.04, 0.02, 0.01}, dev;
  for (double h : hs) {
    opt.eps_step = h;
    dev.push_back(rel_l2(mixed_derivative(s.op, V, {f}, opt).field.v, w.v));
  }
  EXPECT_GE(loglog_slope(hs, dev, 4), 1.9);
  EXPECT_LT(dev.back(), 1e-4);
}

TEST(MixedDerivative, SecondOrderVanishesWithoutV2) {
  Strip s;
  std::vector<BoundaryData> f{data(s.op, 0, 0.35, 0.3), data(s.op, 1, 0.4, 0.3)};
  auto V3 = nonlinearity_from_exprs(s.op.lat, {{3, "1"}});
  auto lf = mixed_derivative(s.op, V3, f);
  EXPECT_LE(rms(lf.field.v), 10 * lf.cancellation + 1e-300);

  // V4 breaks the odd symmetry; the order-2 stencil then decays like h^2
  auto V34 = nonlinearity_from_exprs(s.op.lat, {{3, "1"}, {4, "1"}});
  LinearizationOptions opt;
  opt.richardson = false;
  std::vector<double> hs{0.04, 0.02, 0.01}, ratio;
  for (double h : hs) {
    opt.eps_step = h;
    auto d2 = mixed_derivative(s.op, V34, f, opt);
    auto d1 = mixed_derivative(s.op, V34, {f[0]}, opt);
    ratio.push_back(rms(d2.field.v) / rms(d1.field.v));
  }
  EXPECT_GT(ratio[0], 0);
  EXPECT_GE(loglog_slope(hs, ratio, 3), 0.9);
}

TEST(MixedDerivative, ThirdOrderMatchesDirectSolve) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{3, "1"}});
  std::vector<BoundaryData> f{data(s.op, 0, 0.3, 0.3), data(s.op, 1, 0.35, 0.3), data(s.op, 0, 0.5, 0.2)};
  std::vector<RealField> w;
  for (const auto& fi : f) w.push_back(linear(s.op, fi));
  auto U = direct_linearized_solution<double>(s.op, V, w, {}, 3);
  auto lf = mixed_derivative(s.op, V, f);
  EXPECT_LT(rel_l2(lf.field.v, U.v), 0.03);
  EXPECT_LT(rel_l2(lf.field.v, U.v), 1e-3);
  EXPECT_FALSE(lf.ill_conditioned);
  EXPECT_GT(lf.error_bar, 0);
  EXPECT_EQ(lf.corners.size(), 8u);
}

TEST(MixedDerivative, TraceFlagDifferentiatesTheNeumannTrace) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{3, "1"}});
  std::vector<BoundaryData> f{data(s.op, 0, 0.3, 0.3), data(s.op, 1, 0.35, 0.3)};
  LinearizationOptions opt;
  opt.trace = true;
  opt.richardson = false;
  opt.threads = 3;
  auto lf = mixed_derivative(s.op, V, f, opt);
  auto tr = neumann_trace(s.op, lf.field);
  ASSERT_EQ(tr.size(), lf.trace.size());
  double m = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) m = std::max(m, std::abs(tr[i] - lf.trace[i]));
  EXPECT_LT(m, 1e-8);

  opt.threads = 1;
  auto serial = mixed_derivative(s.op, V, f, opt);
  EXPECT_EQ(serial.field.v, lf.field.v);
}

TEST(MixedDerivative, RejectsDataAboveSmallness) {
  Strip s;
  auto V = nonlinearity_from_exprs(s.op.lat, {{3, "1"}});
  LinearizationOptions opt;
  opt.eps_step = 0.2;
  EXPECT_THROW(mixed_derivative(s.op, V, {data(s.op, 0, 0.3, 0.3)}, opt), Error);
}

namespace {

struct IdentityRun {
  double lhs = 0, rhs = 0;
};

IdentityRun identity_at(int nx, bool same) {
  auto m = MetricSpec::custom(1, 1.0, strip(), "1+0.2*x^2", {"1+0.1*sin(t)"});
  WaveOperator op(m, cfl_lattice(m, nx, 1, 0.5));
  auto sample = [&](const char* e) { return nonlinearity_from_exprs(op.lat, {{3, e}}).V.at(3); };
  const auto dV = same ? std::vector<double>(op.lat.size(), 0.0)
                       : sample("exp(-((t-0.55)^2+(x-0.5)^2)/0.1)");
  std::vector<RealField> w(4, RealField(op.lat));
  const auto w1 = sample("cos(t+x)"), w2 = sample("1+x*t"), w3 = sample("sin(2*x-t)+0.5");
  w[1].v = w1;
  w[2].v = w2;
  w[3].v = w3;
  Waveform wf;
  wf.t_center = 0.4;
  wf.t_width = 0.3;
  auto g = make_boundary_data(op, wf, GammaWindow{}).scaled();
  w[0] = solve_linear_wave<double>(op, nullptr, &g, nullptr, nullptr, Direction::Backward);
  RealField F(op.lat);
  for (std::size_t i = 0; i < F.v.size(); ++i) F.v[i] = -dV[i] * w1[i] * w2[i] * w3[i];
  auto U = solve_linear_wave<double>(op, &F, nullptr);
  auto r = greens_identity_check<double>(op, dV, w, neumann_trace(op, U));
  return {r.lhs, r.rhs};
}

} // namespace

TEST(GreensIdentity, EqualCoefficientsGiveZero) {
  auto r = identity_at(41, true);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
}

TEST(GreensIdentity, DefectConvergesAtSecondOrder) {
  std::vector<double> d;
  double lhs = 0;
  for (int nx : {41, 81, 161}) {
    auto r = identity_at(nx, false);
    d.push_back(r.lhs - r.rhs);
    lhs = r.lhs;
  }
  EXPECT_GT(std::abs(lhs), 1e-3);
  const double order = std::log2(std::abs(d[1] / d[2]));
  EXPECT_GE(order, 1.8);
  EXPECT_LE(std::abs(d[2]), 5 * std::abs(d[1] - d[2]) / 3);
}

TEST(GreensIdentity, RejectsMismatchedLattices) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  WaveOperator a(m, cfl_lattice(m, 21)), b(m, cfl_lattice(m, 41));
  std::vector<RealField> w(4, RealField(b.lat));
  EXPECT_THROW(greens_identity_check<double>(a, std::vector<double>(a.lat.size()), w,
                                             std::vector<double>(a.nt() * a.bnd.entries.size())),
               Error);
}
