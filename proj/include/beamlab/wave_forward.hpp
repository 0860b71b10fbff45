#pragma once

// Finite-difference forward solver for box_g u + V(t, x, u) = 0 on the
// product lattice, with Dirichlet data on the lateral boundary.
//
// Divergence form: sqrt|g| box u = d_t(A d_t u) - d_a(B^{ab} d_b u) with
// A = sqrt|g| / beta and B^{ab} = sqrt|g| g0^{ab}. Leapfrog in t, centred
// differences in space, Dirichlet values imposed on boundary nodes.

#include "beamlab/gaussian_beam.hpp"

#include <complex>
#include <map>
#include <string>
#include <vector>

namespace beamlab {

template <class T> struct GridField {
  Lattice lat;
  std::vector<T> v;

  GridField() = default;
  explicit GridField(const Lattice& l) : lat(l), v(l.size(), T(0)) {}
  T& operator()(int it, int ix, int iy = 0) { return v[lat.index(it, ix, iy)]; }
  const T& operator()(int it, int ix, int iy = 0) const { return v[lat.index(it, ix, iy)]; }
};
using RealField = GridField<double>;
using ComplexField = GridField<cplx>;

enum class Direction { Forward, Backward };

/// Boundary nodes of the spatial lattice. Sites are distinct nodes; entries
/// pair a site with one face, so corners appear once per face.
struct BoundaryLattice {
  struct Entry {
    int site = 0;      // index into sites
    int face = 0;      // 0: x = lo, 1: x = hi, 2: y = lo, 3: y = hi
    int ix = 0, iy = 0;
    double weight = 1; // Euclidean quadrature weight along the face (1 for n = 1)
    double along = 0;  // coordinate along the face (y on x faces, x on y faces)
  };
  std::vector<int> sites;  // spatial indices ix * ny + iy
  std::vector<Entry> entries;

  static BoundaryLattice make(const Lattice& lat);
};

/// Part of Sigma where data are prescribed and traces observed.
struct GammaWindow {
  std::vector<int> faces{0, 1, 2, 3};
  double t0 = 0, t1 = 1e300;
  double y0 = -1e300, y1 = 1e300;  // range of the coordinate along the face

  bool contains(int face, double t, double along) const;
};

/// Precomputed coefficients of the discrete operator on one lattice.
class WaveOperator {
public:
  const MetricSpec* metric = nullptr;
  Lattice lat;
  BoundaryLattice bnd;
  double dt = 0, dx = 0, dy = 1;
  double cfl = 0;

  std::vector<double> sqrtg;       // nodes
  std::vector<double> A;           // (t_{n+1/2}, x): (nt - 1) x S
  std::vector<double> Bxx, Byy;    // (t_n, x_{i+1/2}, y_j), (t_n, x_i, y_{j+1/2})
  std::vector<double> Bxy;         // nodes

  /// Throws Error("config") if the CFL number exceeds cfl_max or the
  /// domain is a disk.
  WaveOperator(const MetricSpec& m, const Lattice& lat, double cfl_max = 0.9);

  int nt() const { return lat.dims[0]; }
  int nx() const { return lat.dims[1]; }
  int ny() const { return lat.dims[2]; }
  std::size_t S() const { return lat.spatial_size(); }
  bool interior(int ix, int iy) const {
    return ix > 0 && ix < nx() - 1 && (lat.n == 1 || (iy > 0 && iy < ny() - 1));
  }

  /// (L u)_s = d_a(B^{ab} d_b u) at interior spatial nodes of time level it.
  template <class T> T spatial(int it, const T* u, int ix, int iy) const;
};

/// Smallest nt with CFL number <= cfl for the given spatial resolution.
Lattice cfl_lattice(const MetricSpec& m, int nx, int ny = 1, double cfl = 0.9);

/// Lateral data on boundary sites, nt x sites (row per time level).
template <class T> using SigmaData = std::vector<T>;

/// Discrete solution of box u = F with u = f on the lateral boundary and
/// Cauchy data (u0, u1) at t = 0 (forward) or t = T (backward). Null
/// pointers mean zero. u1 is d_t u in both directions.
template <class T>
GridField<T> solve_linear_wave(const WaveOperator& op, const GridField<T>* F, const SigmaData<T>* f,
                               const std::vector<T>* u0 = nullptr, const std::vector<T>* u1 = nullptr,
                               Direction dir = Direction::Forward);

/// box u on the lattice by the same differences as the solver (one-sided
/// in t at the first and last levels); zero on boundary sites.
template <class T> GridField<T> apply_box(const WaveOperator& op, const GridField<T>& u);

// ---- data and nonlinearity ----

struct Waveform {
  std::string kind = "bump";  // bump | zero
  int face = 0;
  double t_center = 0.5, t_width = 0.25;
  double y_center = 0.5, y_width = 0.25;  // unused for n = 1
  double amplitude = 1.0;
};

struct BoundaryData {
  SigmaData<double> f;          // shape, nt x sites
  std::vector<std::uint8_t> gamma;  // nt x sites
  double eps = 1.0;             // the data are eps * f
  int s_data = 3;               // vanishing time derivatives at t = 0

  double sup() const;
  /// f and its first s_data time differences vanish at t = 0 and f = 0 off Gamma.
  bool compatible(const Lattice& lat) const;
  SigmaData<double> scaled() const;
};

BoundaryData make_boundary_data(const WaveOperator& op, const Waveform& w, const GammaWindow& gamma,
                                double eps = 1.0, int s_data = 3);
/// Gamma mask over (time level, site).
std::vector<std::uint8_t> gamma_mask(const WaveOperator& op, const GammaWindow& gamma);

/// f times a smooth profile along the inward normal that is 1 on the
/// boundary and 0 beyond `collar` cells.
RealField extend_boundary_data(const WaveOperator& op, const BoundaryData& f, int collar = 8);

/// V(t, x, u) = sum_k V_k(t, x) u^k / k! for 3 <= k <= kmax.
struct NonlinearitySpec {
  int kmax = 5;
  std::map<int, std::vector<double>> V;  // sampled on the lattice

  /// Throws Error("config") for k < 3 or k > kmax.
  void set(int k, std::vector<double> values, int kmax_check = -1);
  bool empty() const { return V.empty(); }
  double eval(std::size_t node, double u) const;
  double deriv(std::size_t node, double u) const;  // d_u V
};

/// Samples expressions in (t, x[, y]) for each order.
NonlinearitySpec nonlinearity_from_exprs(const Lattice& lat, const std::map<int, std::string>& exprs, int kmax = 5);

struct SemilinearOptions {
  double tol = 1e-10;   // stop when |u_{j+1} - u_j| <= tol |u_{j+1}|
  int max_iter = 50;
  double eps0 = 0.1;    // admissible sup |eps f|
};

struct SemilinearReport {
  std::vector<double> increments;  // |u_{j+1} - u_j|_{L2}
  std::vector<double> ratios;      // increments[j+1] / increments[j]
  int iterations = 0;
  bool converged = false;
  double max_ratio = 0;
};

/// Picard iteration u_{j+1} = solve(box u = -V(u_j), lateral data eps f).
/// Throws Error("smallness") if the data exceed eps0 or an increment ratio
/// reaches 1.
RealField solve_semilinear(const WaveOperator& op, const NonlinearitySpec& V, const BoundaryData& f,
                           SemilinearReport* report = nullptr, const SemilinearOptions& opt = {});

/// d_nu u on every boundary entry, nt x entries, nu the outward unit normal.
template <class T> std::vector<T> neumann_trace(const WaveOperator& op, const GridField<T>& u);

struct DtNSample {
  std::vector<double> trace;         // nt x entries, zero off Gamma
  std::vector<std::uint8_t> mask;    // nt x entries
  SemilinearReport report;
};

DtNSample dtn_apply(const WaveOperator& op, const NonlinearitySpec& V, const BoundaryData& f,
                    const SemilinearOptions& opt = {});

/// Metric area weight sqrt(beta) * (length element along the face) at an
/// entry and time level; multiply by entry.weight * dt for dS_g dt.
double boundary_area(const WaveOperator& op, int it, const BoundaryLattice::Entry& e);

/// Trapezoid weights in t over the lattice levels.
double time_weight(const Lattice& lat, int it);
/// Lattice quadrature of sqrt|g| u over (0, T) x M (trapezoid in every axis).
template <class T> T integrate(const WaveOperator& op, const GridField<T>& u);

// ---- quasimode remainders ----

/// r with box r = -box v_rho (lattice differences) and zero lateral and
/// initial (forward) or final (backward) data.
ComplexField make_remainder(const WaveOperator& op, const BeamSamples& samples, double rho,
                            Direction dir = Direction::Forward);

struct RemainderReport {
  std::vector<double> rho, sup;
  double slope = 0;
  double target = 0;  // required: slope <= target + 0.3
  std::string verdict;
};

RemainderReport remainder_decay(const WaveOperator& op, const BeamSamples& samples, const std::vector<double>& rhos,
                                Direction dir = Direction::Forward, int fit = 4);

extern template struct GridField<double>;
extern template struct GridField<cplx>;

} // namespace beamlab
