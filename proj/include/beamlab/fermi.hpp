#pragma once

// Fermi-type charts along a null geodesic segment.
//
// The chart is F(s, z) = gamma(s) + z^a e_a(s) - 1/2 z^a z^b Gamma(gamma(s))[e_a, e_b]
// with a parallel frame e_0 = gamma', e_1 null, g(e_0, e_1) = 1, e_2 unit and
// orthogonal to both. In these coordinates g = 2 ds dz_1 + dz_2^2 on gamma and
// all first derivatives of g vanish there.
//
// Nodes are spaced uniformly in s. At each node the geodesic and frame are
// expanded in a Taylor series in sigma = s - s_k (Picard iteration on the
// geodesic and transport equations) and the next node is obtained by summing
// that series, followed by re-projection onto the exact frame relations.

#include "beamlab/causal_geom.hpp"
#include "beamlab/jet.hpp"

#include <functional>
#include <optional>

namespace beamlab {

template <class R> using Vec3 = std::array<R, 3>;

template <class R> struct ChartNode {
  R s{0};
  Vec3<R> x{}, e0{}, e1{}, e2{};
  const Vec3<R>& e(int a) const { return a == 0 ? e0 : a == 1 ? e1 : e2; }
  Vec3<R>& e(int a) { return a == 0 ? e0 : a == 1 ? e1 : e2; }
};

struct ChartOptions {
  double h = 0.05;        // node spacing in s
  int taylor_order = 10;  // sigma degree used to step between nodes
  double delta_p = 0.5;   // tube radius delta'; delta = delta'/2
  double extend = -1.0;   // parameter extension beyond the segment (< 0 selects delta')
};

template <class R> struct SigmaJets {
  // sigma-only jets about a node; e[0] is the tangent
  Vec3<Jet<R>> x;
  std::array<Vec3<Jet<R>>, 3> e;
  Jet<R> gam[3][3][3];  // Christoffel symbols along gamma
};

/// Pulled-back metric on a (sigma, z) jet shape; indices 0 = s, 1.. = z.
template <class R> struct ChartMetric {
  int d = 2;
  Jet<R> G[3][3], Gi[3][3], sq;  // sq = sqrt|det G|
};

template <class R> class FermiChart {
public:
  const MetricSpec* metric = nullptr;
  int n = 1;
  ChartOptions opt;
  std::vector<ChartNode<R>> nodes;  // s_k = s_lo + k h
  int base = 0;                     // index of the node at s = 0
  double s_lo = 0, s_hi = 0;        // node range
  double seg0 = 0, seg1 = 0;        // the geodesic segment proper

  double h() const { return opt.h; }
  double delta_p() const { return opt.delta_p; }
  double delta() const { return 0.5 * opt.delta_p; }
  int size() const { return static_cast<int>(nodes.size()); }
  /// Nearest node to parameter s, clamped.
  int node_at(double s) const;

  /// Geodesic, frame and Christoffel jets in sigma at node k.
  SigmaJets<R> sigma_jets(int k, int pmax) const;
  /// Components of F in the (sigma, z) shape sh.
  Vec3<Jet<R>> map_jets(int k, const JetShape* sh) const;
  /// Same, from precomputed sigma jets.
  Vec3<Jet<R>> map_jets(const SigmaJets<R>& sj, const JetShape* sh) const;
  /// Pulled-back metric in shape sh (computed one order higher internally).
  ChartMetric<R> metric_jets(int k, const JetShape* sh) const;
  ChartMetric<R> metric_from_map(const Vec3<Jet<R>>& F1, const JetShape* sh) const;

  /// Product coordinates of chart point (s, z).
  Vec3<R> point(double s, const R* z) const;
};

/// Builds the chart of the null geodesic through x0 with tangent v0 (a
/// vector), covering parameters [s_from - extend, s_to + extend].
/// Throws Error("transport") if the frame degenerates and Error("radius")
/// for a non-positive tube radius.
template <class R>
FermiChart<R> build_fermi_chart(const MetricSpec& m, const Vec3<double>& x0, const Vec3<double>& v0, double s_from,
                                double s_to, const ChartOptions& opt = {});

/// Chart along one segment of a shot geodesic (s measured from the segment start).
FermiChart<double> build_fermi_chart(const MetricSpec& m, const GeodesicSegment& seg,
                                     const ChartOptions& opt = {});

/// Frame built from a null tangent: e1 along d_t rescaled, e2 along the
/// spatial normal, then projected onto the exact relations.
template <class R> ChartNode<R> initial_frame(const MetricSpec& m, const Vec3<R>& x, const Vec3<R>& v);
template <class R> void project_frame(const MetricSpec& m, ChartNode<R>& nd);

/// Real Jacobi scan along the chart. D(s) = 1/4 d^2 g^{11} on the screen
/// block with C = diag(0, 2, ..). Returns the first s where |det Y| drops
/// below tau * max |det Y|, or nothing.
std::optional<double> conjugate_point_scan(const FermiChart<double>& chart, double tau = 1e-8);
/// Same on an arbitrary screen matrix function (n x n, index 0 is the z_1 slot).
std::optional<double> conjugate_point_scan(int n, const std::function<void(double, double*)>& D, double s0,
                                           double s1, double h, double tau = 1e-8);

/// D(s) of the Riccati system read off the chart metric jets.
std::vector<double> chart_D(const FermiChart<double>& chart, int k);

extern template class FermiChart<double>;
extern template class FermiChart<Quad>;

} // namespace beamlab
