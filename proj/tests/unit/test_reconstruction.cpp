#include "beamlab/reconstruction.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <set>

using namespace beamlab;

namespace {

const char* kBump = "exp(-((t-1)^2+(x-0.5)^2)/(2*0.15^2))";

struct Flat {
  MetricSpec m;
  Lattice lat;
  Flat(int nt = 321, int nx = 129) {
    SpatialDomain d;
    d.kind = DomainKind::Interval;
    d.lx = 1.0;
    m = MetricSpec::minkowski(1, 2.0, d);
    lat = Lattice::make(m, nt, nx);
  }
};

const SpacetimePoint kP{1.0, {0.5}};

ReconstructionOptions coarse(IntegralSource src = IntegralSource::Field) {
  ReconstructionOptions o;
  o.source = src;
  o.quad.min_nodes_per_efold = 4;
  o.linear.richardson = false;
  return o;
}

} // namespace

TEST(StationaryPhase, GaussianConstant) {
  PhaseDiagnostics d;
  d.d = 2;
  d.hess[0][0] = d.hess[1][1] = cplx(0, 2);
  EXPECT_NEAR(std::abs(stationary_phase_constant(d) - cplx(M_PI, 0)), 0.0, 1e-13);
  d.d = 3;
  d.hess[2][2] = cplx(0, 2);
  EXPECT_NEAR(std::abs(stationary_phase_constant(d) - cplx(std::pow(M_PI, 1.5), 0)), 0.0, 1e-12);
}

TEST(StationaryPhase, ComplexHessianMatchesQuadrature) {
  // int exp(i x.Hx/2) dx over R^2 is exact for the quadratic phase
  const cplx H[2][2] = {{{1.0, 2.0}, {0.3, 0.5}}, {{0.3, 0.5}, {-0.5, 1.5}}};
  PhaseDiagnostics d;
  d.d = 2;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) d.hess[i][j] = H[i][j];
  const double h = 0.02, L = 12;
  cplx acc = 0;
  for (double x = -L; x <= L; x += h)
    for (double y = -L; y <= L; y += h) {
      const cplx q = H[0][0] * x * x + 2.0 * H[0][1] * x * y + H[1][1] * y * y;
      acc += std::exp(cplx(0, 0.5) * q);
    }
  acc *= h * h;
  EXPECT_LT(std::abs(acc - stationary_phase_constant(d)), 1e-10 * std::abs(acc));
}

TEST(Bundle, AntipodalPhaseSumIsStationary) {
  Flat f;
  auto b = build_bundle(f.m, kP);
  ASSERT_EQ(b.beams.size(), 4u);
  ASSERT_EQ(b.factors.size(), 4u);
  std::set<const void*> geodesics;
  for (const auto& bb : b.beams) geodesics.insert(bb.beam.get());
  EXPECT_EQ(geodesics.size(), 2u);
  EXPECT_LT(b.closure, 1e-12);

  auto d = phase_sum_diagnostics(b);
  EXPECT_TRUE(d.ok) << d.failure;
  EXPECT_LT(d.S_abs, 1e-12);
  EXPECT_LT(d.grad_norm, 1e-8);
  EXPECT_GT(d.c_lower, 0.0);
}

TEST(Bundle, HessianFromChartJacobian) {
  // Im phi = Im H z^2 at leading order in the beam chart, so
  // Im Hess S = sum freq J^{-T} diag(0, 2 Im H) J^{-1} with J = dx/d(s, z).
  Flat f;
  auto b = build_bundle(f.m, kP);
  auto d = phase_sum_diagnostics(b);
  const Vec3<double> x0{kP.t, kP.x[0], 0};
  Eigen::Matrix2d expect = Eigen::Matrix2d::Zero();
  for (const auto& fac : b.factors) {
    const auto& beam = *b.beams[fac.beam].beam;
    double s, z[2] = {0, 0};
    ASSERT_TRUE(beam.locate(x0, s, z));
    const int k = static_cast<int>(std::lround((s - beam.chart->s_lo) / beam.chart->h()));
    ASSERT_NEAR(beam.chart->s_lo + k * beam.chart->h(), s, 1e-9);
    const double imH = beam.H(k)[0].imag();
    const double e = 1e-5;
    Eigen::Matrix2d J;
    for (int c = 0; c < 2; ++c) {
      double sp = s, sm = s, zp[2] = {z[0], 0}, zm[2] = {z[0], 0};
      if (c == 0) sp += e, sm -= e;
      else zp[0] += e, zm[0] -= e;
      auto a = beam.point(sp, zp), q = beam.point(sm, zm);
      J(0, c) = (a[0] - q[0]) / (2 * e);
      J(1, c) = (a[1] - q[1]) / (2 * e);
    }
    const Eigen::Matrix2d Ji = J.inverse();
    Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
    D(1, 1) = 2 * imH;
    expect += fac.freq * Ji.transpose() * D * Ji;
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(d.hess[i][j].imag(), expect(i, j), 1e-4 * expect.norm());
      EXPECT_NEAR(d.hess[i][j].real(), 0.0, 1e-4 * expect.norm());
    }
}

TEST(Bundle, FrequencyPerturbationBreaksStationarity) {
  Flat f;
  auto b = build_bundle(f.m, kP);
  b.factors[1].freq *= 1.01;
  auto d = phase_sum_diagnostics(b);
  EXPECT_FALSE(d.ok);
  EXPECT_GT(d.grad_norm, 1e-6);
  EXPECT_NE(d.failure.find("grad"), std::string::npos);
}

TEST(Recover, EqualCoefficientsGiveZero) {
  Flat f;
  auto V = nonlinearity_from_exprs(f.lat, {{3, kBump}});
  auto pe = recover_vm(3, f.m, f.lat, V, V, kP, {8, 16}, coarse());
  EXPECT_EQ(pe.value, 0.0);
  for (auto I : pe.integral) EXPECT_EQ(std::abs(I), 0.0);
}

TEST(Recover, BumpErrorDecreasesWithRho) {
  Flat f;
  auto V1 = nonlinearity_from_exprs(f.lat, {{3, kBump}});
  NonlinearitySpec V2;
  auto pe = recover_vm(3, f.m, f.lat, V1, V2, kP, {8, 16, 32}, coarse());
  ASSERT_EQ(pe.estimate.size(), 3u);
  EXPECT_EQ(pe.status, "ok");
  for (int k = 1; k < 3; ++k) EXPECT_LT(std::fabs(pe.estimate[k] - 1), std::fabs(pe.estimate[k - 1] - 1));
  EXPECT_LT(std::fabs(pe.value - 1), 0.2);
  EXPECT_LT(pe.imag_ratio, 0.05);
}

TEST(Recover, BoundaryPathsMatchField) {
  Flat f;
  auto V1 = nonlinearity_from_exprs(f.lat, {{3, kBump}});
  NonlinearitySpec V2;
  const std::vector<double> rhos{16};
  const double field = recover_vm(3, f.m, f.lat, V1, V2, kP, rhos, coarse()).value;
  const double solve = recover_vm(3, f.m, f.lat, V1, V2, kP, rhos, coarse(IntegralSource::Solve)).value;
  const double dtn = recover_vm(3, f.m, f.lat, V1, V2, kP, rhos, coarse(IntegralSource::DtN)).value;
  EXPECT_NEAR(dtn, solve, 1e-4 * std::fabs(solve));
  EXPECT_NEAR(solve, field, 0.1 * std::fabs(field));
}

TEST(Recover, FourthOrderWithSharedCubic) {
  Flat f;
  auto V1 = nonlinearity_from_exprs(f.lat, {{3, "1"}, {4, kBump}});
  auto V2 = nonlinearity_from_exprs(f.lat, {{3, "1"}});
  const std::vector<double> rhos{16};
  const double field = recover_vm(4, f.m, f.lat, V1, V2, kP, rhos, coarse()).value;
  const double solve = recover_vm(4, f.m, f.lat, V1, V2, kP, rhos, coarse(IntegralSource::Solve)).value;
  EXPECT_GT(field, 0.5);
  EXPECT_NEAR(solve, field, 0.1 * field);

  auto V3 = nonlinearity_from_exprs(f.lat, {{3, "2"}});
  try {
    recover_vm(4, f.m, f.lat, V1, V3, kP, rhos, coarse(IntegralSource::Solve));
    FAIL() << "differing cubic terms accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "dependency");
  }
}

TEST(Recover, UnderResolvedLatticeIsRejected) {
  Flat f(65, 33);
  auto V1 = nonlinearity_from_exprs(f.lat, {{3, kBump}});
  try {
    recover_vm(3, f.m, f.lat, V1, {}, kP, {512}, coarse());
    FAIL() << "no resolution error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "resolution");
  }
}

TEST(Recover, UnreachablePointIsRejected) {
  Flat f;
  auto reach = reachable_set(f.m, f.lat);
  const SpacetimePoint q{0.1, {0.5}};
  EXPECT_FALSE(reach.contains(q));
  auto o = coarse();
  o.bundle.reach = &reach;
  auto V1 = nonlinearity_from_exprs(f.lat, {{3, kBump}});
  EXPECT_THROW(recover_vm(3, f.m, f.lat, V1, {}, q, {8}, o), Error);
}

TEST(FieldReconstruction, LocalizesBump) {
  Flat f;
  auto V1 = nonlinearity_from_exprs(f.lat, {{3, kBump}});
  auto o = coarse();
  o.stride = 16;
  auto fr = reconstruct_v3_field(f.m, f.lat, V1, {}, {16, 32}, o);
  auto reach = reachable_set(f.m, f.lat);
  int best = -1, ntested = 0;
  for (std::size_t k = 0; k < fr.estimate.size(); ++k) {
    const int it = static_cast<int>(k) / fr.sub.dims[1], ix = static_cast<int>(k) % fr.sub.dims[1];
    const bool in = reach.mask[f.lat.index(it * 16, ix * 16, 0)];
    if (!in) {
      EXPECT_FALSE(fr.tested[k]);
      EXPECT_TRUE(std::isnan(fr.estimate[k]));
      continue;
    }
    if (!fr.tested[k]) continue;
    ++ntested;
    if (best < 0 || fr.estimate[k] > fr.estimate[best]) best = static_cast<int>(k);
  }
  ASSERT_GT(ntested, 10);
  ASSERT_GE(best, 0);
  EXPECT_DOUBLE_EQ(fr.points[best].p.t, 1.0);
  EXPECT_DOUBLE_EQ(fr.points[best].p.x[0], 0.5);
  for (std::size_t k = 0; k < fr.estimate.size(); ++k) {
    if (!fr.tested[k]) continue;
    const double r = std::hypot(fr.points[k].p.t - 1.0, fr.points[k].p.x[0] - 0.5);
    if (r > 0.6) EXPECT_LT(std::fabs(fr.estimate[k]), 0.1 * fr.estimate[best]);
  }
}
