#pragma once

// Broken null geodesics with specular reflection, null-convexity of the
// lateral boundary, the recoverable set and beam covector selection.

#include "beamlab/spacetime.hpp"

#include <functional>
#include <optional>
#include <ostream>

namespace beamlab {

struct GeodesicNode {
  double s = 0.0;
  std::array<double, 3> x{};   // (t, x, y)
  std::array<double, 3> v{};   // tangent vector
  std::array<double, 3> p{};   // covector g(v, .)
  double null_defect = 0.0;    // |g(v,v)| / |v|^2
};

struct GeodesicSegment {
  double s0 = 0.0, s1 = 0.0;
  std::vector<GeodesicNode> nodes;
};

enum class GeodesicEnd { LateralBoundary, InitialCap, FinalCap, MaxReflections, ParameterLimit };

struct BrokenNullGeodesic {
  std::vector<GeodesicSegment> segments;
  std::vector<double> reflection_params;   // parameter of each bounce
  std::vector<std::array<double, 3>> reflection_points;
  GeodesicEnd end = GeodesicEnd::ParameterLimit;
  std::optional<double> s_exit;            // parameter of the final lateral hit, if any
  double max_null_defect = 0.0;

  const GeodesicNode& last() const { return segments.back().nodes.back(); }
  const GeodesicNode& first() const { return segments.front().nodes.front(); }
};

const char* to_string(GeodesicEnd e);

struct ShootOptions {
  int max_reflections = 4;
  double step = 0.0;        // 0 selects 1e-3 * T
  double event_tol = 1e-10;
  double tau_null = 1e-9;
  double tau_trans = 1e-6;
  double s_max = 0.0;       // 0 selects 50 * T
  /// Stop at the first lateral hit instead of reflecting.
  bool stop_at_boundary = false;
};

/// Integrates the Hamiltonian geodesic flow from p with initial tangent xi
/// (vector or covector). Throws Error("tangency") on grazing hits and
/// Error("stiffness") if the null defect exceeds tau_null.
BrokenNullGeodesic shoot_null_geodesic(const MetricSpec& m, const SpacetimePoint& p, const TangentObject& xi,
                                       const ShootOptions& opt = {});

/// Unit outward spacetime normal at a lateral boundary point, as a vector.
std::array<double, 3> boundary_normal(const MetricSpec& m, const std::array<double, 3>& x);

/// Specular reflection xi - 2 g(xi,nu) nu, for vectors or covectors.
TangentObject reflect_at_boundary(const MetricSpec& m, const SpacetimePoint& at, const TangentObject& xi_in,
                                  double tau_trans = 1e-6);

void write_geodesic_csv(std::ostream& os, const BrokenNullGeodesic& g, int n);

struct ConvexityReport {
  double min_II = 0.0;
  std::array<double, 3> argmin_point{};
  std::array<double, 3> argmin_vector{};
  int samples = 0;
  bool violated = false;
};

/// Samples the second fundamental form g(nabla_V nu, V) on the null
/// directions of the lateral boundary at nb_points x nt boundary points.
/// For n = 1 the boundary has no null tangents and the scan is empty.
ConvexityReport null_convexity_scan(const MetricSpec& m, int nb_points = 64, int nt = 9, double tau_II = 1e-9);

/// Uniform product lattice over [0,T] x bounding box of M.
struct Lattice {
  int n = 1;
  std::array<int, 3> dims{};   // nt, nx, ny (ny = 1 when n = 1)
  std::array<double, 3> lo{}, hi{};

  double h(int a) const { return (hi[a] - lo[a]) / (dims[a] - 1); }
  double coord(int a, int i) const { return lo[a] + i * h(a); }
  std::size_t size() const { return std::size_t(dims[0]) * dims[1] * dims[2]; }
  std::size_t spatial_size() const { return std::size_t(dims[1]) * dims[2]; }
  std::size_t index(int it, int ix, int iy = 0) const { return (std::size_t(it) * dims[1] + ix) * dims[2] + iy; }

  static Lattice make(const MetricSpec& m, int nt, int nx, int ny = 1);
};

struct ReachableSet {
  Lattice lat;
  std::vector<double> arrival;    // per spatial node: earliest time reachable from the lateral boundary
  std::vector<double> departure;  // per spatial node: latest time that still reaches the boundary by T
  std::vector<std::uint8_t> mask; // per space-time node

  bool contains(const SpacetimePoint& p) const;
};

/// Computes the recoverable set by forward and backward causal wavefronts.
ReachableSet reachable_set(const MetricSpec& m, const Lattice& lat);

struct CovectorSelection {
  std::array<std::array<double, 3>, 4> theta{};
  std::array<double, 4> kappa{};
  std::array<BrokenNullGeodesic, 4> past, future;  // geodesics from p back to Sigma and forward to Sigma
  std::vector<int> multiplicity;                    // beam index per factor for m > 4
  double closure = 0.0;
  double base_angle = 0.0;
  int sweep_index = 0;
};

/// Picks four null covectors at p with sum kappa_j theta_j = 0 whose
/// geodesics reach the lateral boundary in both time directions.
/// Throws Error("unreachable") if p is outside the recoverable set and
/// Error("selection") if no direction in the sweep is admissible.
CovectorSelection select_beam_covectors(const MetricSpec& m, const SpacetimePoint& p, int beams = 4,
                                        const ReachableSet* reach = nullptr, int sweep = 64,
                                        const std::function<bool(const BrokenNullGeodesic&)>& extra = {});

/// Null covector (tau, omega) at p with tau > 0.
std::array<double, 3> null_covector(const MetricSpec& m, const SpacetimePoint& p, const std::array<double, 2>& omega);

} // namespace beamlab
