#include "beamlab/causal_geom.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace beamlab;

namespace {
SpatialDomain strip() {
  SpatialDomain d;
  d.kind = DomainKind::Interval;
  d.lx = 1.0;
  return d;
}
SpatialDomain disk(double R) {
  SpatialDomain d;
  d.kind = DomainKind::Disk;
  d.radius = R;
  return d;
}
SpatialDomain box() {
  SpatialDomain d;
  d.kind = DomainKind::Rectangle;
  return d;
}

// x on the broken geodesic at time t by linear interpolation between nodes
double x_at(const BrokenNullGeodesic& g, double t) {
  for (const auto& seg : g.segments)
    for (std::size_t k = 1; k < seg.nodes.size(); ++k) {
      const auto &a = seg.nodes[k - 1], &b = seg.nodes[k];
      if ((a.x[0] - t) * (b.x[0] - t) <= 0 && a.x[0] != b.x[0]) {
        double u = (t - a.x[0]) / (b.x[0] - a.x[0]);
        return a.x[1] + u * (b.x[1] - a.x[1]);
      }
    }
  return NAN;
}
} // namespace

TEST(Geodesic, FlatStripReflection) {
  auto m = MetricSpec::minkowski(1, 2.0, strip());
  auto g = shoot_null_geodesic(m, {0.0, {0.5}}, {{0.0, {0.5}}, {1, 1}, Variance::Vector});
  ASSERT_GE(g.reflection_points.size(), 2u);
  EXPECT_NEAR(g.reflection_points[0][0], 0.5, 1e-9);
  EXPECT_NEAR(g.reflection_points[0][1], 1.0, 1e-12);
  EXPECT_NEAR(g.reflection_points[1][0], 1.5, 1e-9);
  EXPECT_NEAR(g.reflection_points[1][1], 0.0, 1e-12);
  const auto& after = g.segments[1].nodes.front();
  EXPECT_NEAR(after.v[1] / after.v[0], -1.0, 1e-12);
  EXPECT_EQ(g.end, GeodesicEnd::FinalCap);
  EXPECT_LE(g.max_null_defect, 1e-9);

  auto mirror = shoot_null_geodesic(m, {0.0, {0.5}}, {{0.0, {0.5}}, {1, -1}, Variance::Vector});
  EXPECT_NEAR(mirror.reflection_points[0][1], 0.0, 1e-12);
  EXPECT_NEAR(mirror.reflection_points[0][0], 0.5, 1e-9);
  for (double t : {0.3, 0.9, 1.7}) EXPECT_NEAR(x_at(g, t), 1.0 - x_at(mirror, t), 1e-9);
}

TEST(Geodesic, ConformalInvariance) {
  auto flat = MetricSpec::minkowski(1, 2.0, strip());
  auto conf = MetricSpec::conformal(1, 2.0, strip(), "1+0.1*sin(t)");
  auto a = shoot_null_geodesic(flat, {0.0, {0.5}}, {{0.0, {0.5}}, {1, 1}, Variance::Vector});
  auto b = shoot_null_geodesic(conf, {0.0, {0.5}}, {{0.0, {0.5}}, {1, 1}, Variance::Vector});
  for (double t = 0.05; t < 1.95; t += 0.1) EXPECT_NEAR(x_at(a, t), x_at(b, t), 1e-6);
  EXPECT_LE(b.max_null_defect, 1e-9);
}

TEST(Geodesic, RejectsNonNull) {
  auto m = MetricSpec::minkowski(1, 2.0, strip());
  EXPECT_THROW(shoot_null_geodesic(m, {0.0, {0.5}}, {{0.0, {0.5}}, {1, 0.5}, Variance::Vector}), Error);
}

TEST(Reflection, FlatStrip) {
  auto m = MetricSpec::minkowski(1, 2.0, strip());
  auto r = reflect_at_boundary(m, {0.5, {1.0}}, {{0.5, {1.0}}, {1, 1}, Variance::Vector});
  EXPECT_DOUBLE_EQ(r.comp[0], 1.0);
  EXPECT_DOUBLE_EQ(r.comp[1], -1.0);
  r = reflect_at_boundary(m, {0.5, {0.0}}, {{0.5, {0.0}}, {1, -1}, Variance::Vector});
  EXPECT_DOUBLE_EQ(r.comp[1], 1.0);
  EXPECT_THROW(reflect_at_boundary(m, {0.5, {0.5}}, {{0.5, {0.5}}, {1, 1}, Variance::Vector}), Error);
}

TEST(Reflection, ObliqueFacePreservesTangentialPart) {
  auto m = MetricSpec::custom(2, 1.0, box(), "1.3+0.2*x", {"1+0.1*y", "0.05*x", "1.2"});
  SpacetimePoint at{0.4, {1.0, 0.3}};
  auto th = null_covector(m, at, {0.8, 0.6});
  auto v = musical(m, {at, {th[0], th[1], th[2]}, Variance::Covector});
  auto r = reflect_at_boundary(m, at, v);
  auto nu = boundary_normal(m, {0.4, 1.0, 0.3});
  auto e = eval_metric(m, at);
  auto g = [&](const std::vector<double>& a, const std::array<double, 3>& b) {
    double s = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += e.g[i][j] * a[i] * b[j];
    return s;
  };
  double gin = g(v.comp, nu), gout = g(r.comp, nu);
  EXPECT_NEAR(gout, -gin, 1e-12);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.comp[i] - gout * nu[i], v.comp[i] - gin * nu[i], 1e-12);
  EXPECT_EQ(causal_character(m, r).type, CausalType::Null);
  EXPECT_LE(std::fabs(causal_character(m, r).residual), 1e-12);
}

TEST(Convexity, StripAndDisk) {
  auto s = null_convexity_scan(MetricSpec::minkowski(1, 1.0, strip()));
  EXPECT_EQ(s.min_II, 0.0);
  EXPECT_FALSE(s.violated);
  auto r1 = null_convexity_scan(MetricSpec::minkowski(2, 1.0, disk(1.0)));
  auto r2 = null_convexity_scan(MetricSpec::minkowski(2, 1.0, disk(2.0)));
  // null V = d_t + unit tangent: II = 1/R
  EXPECT_NEAR(r1.min_II, 1.0, 1e-6);
  EXPECT_NEAR(r2.min_II, 0.5, 1e-6);
  EXPECT_NEAR(r1.min_II / r2.min_II, 2.0, 1e-6);
  EXPECT_FALSE(r1.violated);
  auto flat = null_convexity_scan(MetricSpec::minkowski(2, 1.0, box()));
  EXPECT_NEAR(flat.min_II, 0.0, 1e-9);
}

TEST(Reachable, StripMembership) {
  auto m = MetricSpec::minkowski(1, 4.0, strip());
  auto lat = Lattice::make(m, 401, 101);
  auto R = reachable_set(m, lat);
  EXPECT_TRUE(R.contains({2.0, {0.5}}));
  EXPECT_FALSE(R.contains({0.01, {0.5}}));
  EXPECT_FALSE(R.contains({3.99, {0.5}}));
  EXPECT_TRUE(R.contains({2.0, {0.01}}));
  EXPECT_TRUE(R.contains({1.0, {0.99}}));
  // brute-force: r in U iff t > dist to boundary and T - t > dist
  int bad = 0;
  for (int it = 0; it < lat.dims[0]; it += 7)
    for (int ix = 0; ix < lat.dims[1]; ix += 3) {
      double t = lat.coord(0, it), x = lat.coord(1, ix), dd = std::min(x, 1 - x);
      bool want = t > dd + 1e-9 && 4.0 - t > dd + 1e-9;
      bool far = std::fabs(t - dd) > 1e-6 && std::fabs(4.0 - t - dd) > 1e-6;
      if (far && want != bool(R.mask[lat.index(it, ix)])) ++bad;
    }
  EXPECT_EQ(bad, 0);
}

TEST(Reachable, MonotoneInT) {
  auto m1 = MetricSpec::conformal(1, 2.0, strip(), "1+0.3*x");
  auto m2 = MetricSpec::conformal(1, 3.0, strip(), "1+0.3*x");
  auto l1 = Lattice::make(m1, 201, 51), l2 = Lattice::make(m2, 301, 51);
  auto r1 = reachable_set(m1, l1), r2 = reachable_set(m2, l2);
  for (int it = 0; it < 201; ++it)
    for (int ix = 0; ix < 51; ++ix)
      if (r1.mask[l1.index(it, ix)]) EXPECT_TRUE(r2.mask[l2.index(it, ix)]);
}

TEST(Reachable, RectangleTwoD) {
  auto m = MetricSpec::minkowski(2, 3.0, box());
  auto lat = Lattice::make(m, 61, 41, 41);
  auto R = reachable_set(m, lat);
  EXPECT_TRUE(R.contains({1.5, {0.5, 0.5}}));
  EXPECT_FALSE(R.contains({0.2, {0.5, 0.5}}));
  // the 16-neighbour front overestimates Euclidean distance by at most ~3%
  double a = R.arrival[20 * 41 + 20];
  EXPECT_NEAR(a, 0.5, 0.02);
}

TEST(Covectors, FlatOnePlusOne) {
  auto m = MetricSpec::minkowski(1, 4.0, strip());
  auto sel = select_beam_covectors(m, {2.0, {0.5}});
  EXPECT_EQ(sel.kappa, (std::array<double, 4>{1, 1, 1, 1}));
  EXPECT_EQ(sel.closure, 0.0);
  EXPECT_DOUBLE_EQ(sel.theta[0][0], 1.0);
  EXPECT_DOUBLE_EQ(sel.theta[0][1], 1.0);
}

TEST(Covectors, FlatOnePlusTwoFan) {
  auto m = MetricSpec::minkowski(2, 3.0, box());
  auto sel = select_beam_covectors(m, {1.5, {0.5, 0.5}});
  EXPECT_LE(sel.closure, 1e-14);
  for (int j = 0; j < 4; ++j) {
    EXPECT_GT(sel.kappa[j], 0);
    auto c = causal_character(m, {{1.5, {0.5, 0.5}}, {sel.theta[j][0], sel.theta[j][1], sel.theta[j][2]},
                                   Variance::Covector});
    EXPECT_EQ(c.type, CausalType::Null);
  }
  // homogeneity: scaling kappa keeps the closure
  double s = 0;
  for (int i = 0; i < 3; ++i) {
    double acc = 0;
    for (int j = 0; j < 4; ++j) acc += 3.7 * sel.kappa[j] * sel.theta[j][i];
    s = std::max(s, std::fabs(acc));
  }
  EXPECT_LE(s, 1e-13);
}

TEST(Covectors, UnreachablePoint) {
  auto m = MetricSpec::minkowski(1, 4.0, strip());
  auto R = reachable_set(m, Lattice::make(m, 101, 51));
  EXPECT_THROW(select_beam_covectors(m, {0.05, {0.5}}, 4, &R), Error);
}

TEST(Geodesic, CsvHasHeaderAndRows) {
  auto m = MetricSpec::minkowski(1, 1.0, strip());
  auto g = shoot_null_geodesic(m, {0.0, {0.5}}, {{0.0, {0.5}}, {1, 1}, Variance::Vector});
  std::ostringstream os;
  write_geodesic_csv(os, g, 1);
  auto s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "segment,s,t,x,xi_t,xi_x,null_defect");
}
