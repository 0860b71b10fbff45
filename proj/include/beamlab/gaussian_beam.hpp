#pragma once

// Gaussian beam quasimodes v = chi(|z|/delta') e^{i rho phi} sum_k rho^{-k} b_k
// built in a Fermi chart. Phase and amplitudes are stored per chart node as
// (sigma, z) jets; the phase jets solve the eikonal equation and the
// amplitudes the transport hierarchy up to the truncation degrees
//   phi: z-degree N + 2,   b_k: z-degree N - 2k.

#include "beamlab/fermi.hpp"

#include <algorithm>
#include <complex>
#include <memory>
#include <string>

namespace beamlab {

using cplx = std::complex<double>;
template <class R> using CJet = Jet<Cx<R>>;

struct BeamOptions {
  int N = 5;
  int kmax = -1;             // highest amplitude order; < 0 selects N / 2
  std::vector<cplx> H0;      // n x n row-major; empty selects i * identity
  int taylor_order = 10;     // sigma degree of the node jets
  double tau_conj = 1e-8;    // |det Y| threshold for a conjugate point
};

template <class R> struct RiccatiState {
  std::array<Cx<R>, 4> H{}, Y{}, Z{};  // n x n row-major
};

template <class R> struct BeamNode {
  CJet<R> phi, dphi;              // phase and d_s phase
  std::vector<CJet<R>> b, db;     // amplitudes and their s-derivatives
  Vec3<Jet<R>> F;                 // chart map, shape (n, P, 2)
};

/// Quantities of one beam at a single chart point. a[k] = chi b_k,
/// Ta[k] = T(chi b_k), Ba[k] = box(chi b_k), S = <dphi, dphi>.
template <class R> struct BeamLocal {
  Cx<R> phi, S;
  std::vector<Cx<R>> a, Ta, Ba;
  R chi{0};
  R sqrtg{0};  // sqrt|det G| in chart coordinates
};

template <class R> class GaussianBeam {
public:
  std::shared_ptr<const FermiChart<R>> chart;
  BeamOptions opt;
  int n = 1, N = 5, Nphi = 7, kmax = 2, P = 10;
  const JetShape* sh = nullptr;
  std::vector<BeamNode<R>> nodes;
  std::vector<RiccatiState<R>> riccati;

  int degree_b(int k) const { return N - 2 * k; }
  double delta_p() const { return chart->delta_p(); }

  /// Evaluates phase, amplitudes and defect pieces at chart point (s, z).
  BeamLocal<R> local(double s, const R* z) const;
  /// Same with the node chosen explicitly (sigma relative to node k).
  BeamLocal<R> local_at(int k, R sigma, const R* z) const;

  /// Chart coordinates of product point x. Returns false if the Newton
  /// iteration does not converge near the chart.
  bool locate(const Vec3<R>& x, double& s, R* z) const;

  /// Image of chart point (s, z) in product coordinates.
  Vec3<R> point(double s, const R* z) const;

  /// Relative deviation of det(Im H)|det Y|^2 from its initial value, max over nodes.
  double riccati_invariant_error() const;
  /// Complex H at node k.
  std::vector<cplx> H(int k) const;

  /// Solves the node jets at node k from sigma-constant data.
  void solve_node(int k, const CJet<R>& phi0, const std::vector<CJet<R>>& b0);
  /// Node data at sigma = +-h of node k, used to seed its neighbour.
  void propagate_from(int k, int dir, CJet<R>& phi, std::vector<CJet<R>>& b) const;
};

/// Phase jet z1 + sum H_ij z_i z_j in shape sh.
template <class R> CJet<R> quadratic_phase(const JetShape* sh, int n, const std::vector<cplx>& H);

/// Builds the beam seeded at the chart base node with phase Hessian H0 and
/// b_0 = (det H0)^{-1/2}. Throws Error("conjugate") if det Y degenerates
/// and Error("input") if Im H0 is not positive definite.
template <class R>
GaussianBeam<R> build_beam(std::shared_ptr<const FermiChart<R>> chart, const BeamOptions& opt = {});

/// Same with arbitrary sigma-constant data at node k0 (used for reflections).
template <class R>
GaussianBeam<R> build_beam_from_data(std::shared_ptr<const FermiChart<R>> chart, const BeamOptions& opt, int k0,
                                     const CJet<R>& phi0, const std::vector<CJet<R>>& b0);

/// Riccati system Y' = C Z, Z' = -D Y with Y(base) = I, Z(base) = H0, per node.
template <class R>
std::vector<RiccatiState<R>> solve_riccati(const FermiChart<R>& chart, const std::vector<cplx>& H0, int P = 10);

/// Sigma-constant jet from the sigma series of j evaluated at sigma.
template <class T, class R> Jet<T> at_sigma(const Jet<T>& j, const R& sigma) {
  const JetShape* sh = j.sh;
  Jet<T> r(sh);
  std::vector<R> pw(sh->pmax + 1, R(1));
  for (int p = 1; p <= sh->pmax; ++p) pw[p] = pw[p - 1] * sigma;
  for (int i = 0; i < sh->size; ++i) {
    if (is_zero(j.c[i])) continue;
    auto e = sh->exps[i];
    const int p = e[0];
    e[0] = 0;
    r.c[sh->index(e)] += j.c[i] * pw[p];
  }
  return r;
}

/// Taylor coefficients of the polynomial j about (sigma, z), truncated to
/// shape `to` (same number of z variables).
template <class T, class R> Jet<T> shift_jet(const Jet<T>& j, const R& sigma, const R* z, const JetShape* to) {
  const JetShape* sh = j.sh;
  const int nz = sh->nz;
  const int top = std::max(sh->pmax, sh->qmax);
  std::vector<std::vector<R>> binom(top + 1, std::vector<R>(top + 1, R(0)));
  for (int a = 0; a <= top; ++a) {
    binom[a][0] = R(1);
    for (int b = 1; b <= a; ++b) binom[a][b] = binom[a - 1][b - 1] + (b <= a - 1 ? binom[a - 1][b] : R(0));
  }
  std::array<std::vector<R>, kMaxZ + 1> pw;
  for (int v = 0; v <= nz; ++v) {
    const R x = v == 0 ? sigma : z[v - 1];
    pw[v].assign(top + 1, R(1));
    for (int p = 1; p <= top; ++p) pw[v][p] = pw[v][p - 1] * x;
  }
  Jet<T> r(to);
  for (int i = 0; i < sh->size; ++i) {
    if (is_zero(j.c[i])) continue;
    const auto& e = sh->exps[i];
    for (int t = 0; t < to->size; ++t) {
      const auto& f = to->exps[t];
      R w(1);
      bool ok = true;
      for (int v = 0; v <= nz && ok; ++v) {
        if (f[v] > e[v]) ok = false;
        else w = w * binom[e[v]][f[v]] * pw[v][e[v] - f[v]];
      }
      if (ok) r.c[t] += j.c[i] * w;
    }
  }
  return r;
}

/// Smooth cutoff: 1 on |r| <= 1/4, 0 on |r| >= 1/2.
double cutoff(double r);

// ---- lattice sampling (double precision) ----

/// Beam data at the lattice nodes inside the tube. Fields for any rho are
/// assembled from these without repeating the chart work.
struct BeamSamples {
  std::size_t lattice_size = 0;
  double kappa = 1.0;
  int kmax = 0;
  std::vector<std::size_t> index;
  std::vector<cplx> phi, S;
  std::vector<std::vector<cplx>> a, Ta, Ba;  // [k][point]
  std::vector<double> weight;                // sqrt|g| at the node

  /// v_rho on the full lattice (zero outside the tube).
  std::vector<cplx> field(double rho) const;
  /// box v_rho evaluated from the jets.
  std::vector<cplx> box(double rho) const;
  /// Lattice nodes across one transverse e-fold of |v_rho| at rho = 1 (scales as rho^{-1/2}).
  double efold_nodes_rho1 = 0;
};

/// Samples the beam on all lattice nodes inside M. Throws Error("sampling")
/// if the tube is cut off by the chart ends inside the lattice.
BeamSamples sample_beam(const GaussianBeam<double>& beam, const Lattice& lat, const MetricSpec& m,
                        double kappa = 1.0);

struct DecayRow {
  double rho = 0, norm_L2 = 0, norm_Hk = 0;
};

struct DecayReport {
  std::vector<DecayRow> rows;
  double slope = 0;
  double target_K = 0;   // required: slope <= -target_K + 0.3
  bool exact = false;    // all norms at rounding level
  std::string verdict;   // pass / fail / inconclusive
};

/// Lattice norms of box v_rho over rhos and the least-squares slope of the
/// top `fit` values. k = 0 uses L^2, k = 1 adds lattice gradients.
DecayReport residual_decay(const BeamSamples& samples, const Lattice& lat, const std::vector<double>& rhos, int N,
                           int n, int k = 0, int fit = 4);

/// Least-squares slope of log y against log x over the last `top` entries.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y, int top = 4);

// ---- reflections ----

struct ReflectedPair {
  std::shared_ptr<GaussianBeam<double>> incident, reflected;
  Vec3<double> point{};    // reflection point
  double s_reflect = 0;    // incident chart parameter of the bounce
  int wall_axis = 1;       // spatial coordinate fixed on the wall face
  double wall_value = 0;
  double match_residual = 0;  // largest matched-coefficient mismatch
};

/// Matches a reflected beam to the incident one on the boundary at the first
/// lateral hit of its geodesic: phi^ref = phi^inc and b_k^ref = -b_k^inc as
/// boundary jets. Supports flat faces (interval, rectangle).
ReflectedPair build_reflected_pair(const MetricSpec& m, std::shared_ptr<GaussianBeam<double>> incident,
                                   double s_reflect, double reflected_length, const ChartOptions& copt);

struct SmallnessReport {
  std::vector<double> rho, norm;
  double slope = 0;
  double target = 0;  // required slope <= target
  std::string verdict;
};

/// L^2 (k = 0) or H^1 (k = 1) norm of (v^inc + v^ref) on the wall patch
/// |t - t_p| <= halfwidth for each rho.
SmallnessReport boundary_smallness(const ReflectedPair& pair, const MetricSpec& m, const std::vector<double>& rhos,
                                   int k = 0, double halfwidth = 0.5, int samples = 4001, int fit = 4);

/// Boundary jets of phi^ref - phi^inc in the wall coordinate; coefficient j
/// is the degree-j Taylor coefficient (n = 1).
std::vector<cplx> boundary_phase_mismatch(const ReflectedPair& pair, int degree);

/// Text header plus binary blocks (s grid, H/Y/Z, node jets).
void write_beam_dump(const std::string& path, const GaussianBeam<double>& beam, double kappa = 1.0);

extern template class GaussianBeam<double>;
extern template class GaussianBeam<Quad>;

} // namespace beamlab
