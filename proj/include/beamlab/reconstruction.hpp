#pragma once

// Recovery of V_m at a point p from four Gaussian beams through p:
// bundle assembly, diagnostics of the combined phase, the scaled
// oscillatory integral and its stationary-phase limit.

#include "beamlab/causal_geom.hpp"
#include "beamlab/linearization.hpp"

#include <memory>
#include <string>
#include <vector>

namespace beamlab {

struct BundleOptions {
  int N = 3;
  double delta_p = 1.0;
  std::vector<cplx> H0;  // empty selects i * identity
  int order = 3;         // m; beam 3 enters m - 2 times
  int sweep = 64;
  const ReachableSet* reach = nullptr;
};

struct BundleBeam {
  std::shared_ptr<GaussianBeam<double>> beam;
  std::array<double, 3> theta{};  // selected covector
  double kappa = 1;
  double lambda = 1;       // kappa theta = lambda * d(phase) at p
  bool conjugate = false;  // factor uses -conj(phi) and conj(b_k)
  Direction dir = Direction::Forward;
};

/// One factor of the product: beam index and frequency multiplier.
struct BundleFactor {
  int beam = 0;
  double freq = 1;
};

struct BeamBundle {
  const MetricSpec* metric = nullptr;
  SpacetimePoint p;
  int order = 3;
  std::vector<BundleBeam> beams;      // 0 backward, 1..3 forward
  std::vector<BundleFactor> factors;  // 0, 1, 2, then 3 repeated order - 2 times
  double closure = 0;                 // |sum kappa_j theta_j|_inf
};

/// Selects covectors at p and builds one beam per covector. In 1+1 the
/// quadruple is antipodal and beams 2, 3 are conjugates of beams 0, 1.
/// Throws Error("unreachable") / Error("selection") from the selection.
BeamBundle build_bundle(const MetricSpec& m, const SpacetimePoint& p, const BundleOptions& opt = {});

/// Phase (times freq) and amplitude sum_k (rho freq)^{-k} chi b_k of one
/// factor at product point x. Returns false outside the tube.
bool factor_at(const BeamBundle& b, int f, const Vec3<double>& x, double rho, cplx& phase, cplx& amp);

/// S = sum over factors of freq * phase.
cplx combined_phase(const BeamBundle& b, const Vec3<double>& x);

struct PhaseDiagnostics {
  int d = 2;
  double S_abs = 0;      // |S(p)|
  double grad_norm = 0;  // |grad S(p)|
  double c_lower = 0;    // min of Im S / |x - p|^2 on the shell
  double c_fit = 0;      // least-squares Im S ~ c |x - p|^2
  std::array<std::array<cplx, 3>, 3> hess{};
  bool ok = false;
  std::string failure;  // first failing quantity
};

/// Thresholds: |S| <= 1e-8, |grad S| <= 1e-6, c_lower > 0.
PhaseDiagnostics phase_sum_diagnostics(const BeamBundle& b, double shell = 0.05);

/// Stationary-phase constant det(-i Hess S / 2 pi)^{-1/2} (principal branch per eigenvalue).
cplx stationary_phase_constant(const PhaseDiagnostics& diag);

struct QuadratureOptions {
  double window = 40;           // keep nodes with rho * c_lower |x - p|^2 <= window
  double min_nodes_per_efold = 8;
};

/// rho^{(n+1)/2} times the lattice quadrature of dV * prod factors * sqrt|g|.
/// Throws Error("resolution") if the Gaussian is under-resolved and
/// Error("geometry") if no lattice node carries the product.
cplx oscillatory_integral(const MetricSpec& m, const Lattice& lat, const std::vector<double>& dV,
                          const BeamBundle& b, const PhaseDiagnostics& diag, double rho,
                          const QuadratureOptions& q = {});

struct PointEstimate {
  SpacetimePoint p;
  std::vector<double> rho;
  std::vector<cplx> integral;     // I(rho)
  std::vector<double> estimate;   // real part of I / (c_sp sqrt|g| prod a)
  double value = 0;               // estimate at the largest rho
  double extrapolated = 0;        // linear in 1/rho through the top two
  double error_bar = 0;           // |value - extrapolated|
  double imag_ratio = 0;          // |Im| / |I| at the largest rho
  cplx amplitude{};               // c_sp sqrt|g| prod a at p
  PhaseDiagnostics diag;
  std::string status = "untested";  // ok | rejected | untested
  std::string message;
};

/// V estimate from I at each rho. Throws Error("degenerate") if the
/// amplitude product at p is below 1e-10.
PointEstimate stationary_phase_extract(const BeamBundle& b, const PhaseDiagnostics& diag,
                                       const std::vector<double>& rhos, const std::vector<cplx>& integrals);

// ---- drivers ----

enum class IntegralSource {
  Field,  // quadrature of the coefficient difference (ground truth)
  Solve,  // boundary pairing with linearized solutions of both V's
  DtN     // boundary pairing with mixed DtN derivatives of both V's
};

struct ReconstructionOptions {
  BundleOptions bundle;
  QuadratureOptions quad;
  IntegralSource source = IntegralSource::Field;
  GammaWindow gamma;               // observation window for Solve / DtN
  LinearizationOptions linear;     // stencil for DtN
  int stride = 8;                  // p grid every stride-th lattice node
  int threads = 1;
};

/// V_m^(1) - V_m^(2) at p. Field uses dV = V_m^(1) - V_m^(2) directly; the
/// boundary sources need an operator on the lattice and the two
/// nonlinearities, whose lower coefficients must agree.
PointEstimate recover_vm(int m, const MetricSpec& metric, const Lattice& lat, const NonlinearitySpec& V1,
                         const NonlinearitySpec& V2, const SpacetimePoint& p, const std::vector<double>& rhos,
                         const ReconstructionOptions& opt = {});

/// Boundary pairing value of the order-m identity at one rho:
/// int_Gamma w0 d_nu (U^(1) - U^(2)) dS_g dt, scaled by rho^{(n+1)/2}.
cplx boundary_integral(int m, const WaveOperator& op, const NonlinearitySpec& V1, const NonlinearitySpec& V2,
                       const BeamBundle& b, double rho, const ReconstructionOptions& opt);

struct FieldReconstruction {
  Lattice sub;                       // p grid (coarse lattice)
  std::vector<double> estimate;      // NaN where untested
  std::vector<std::uint8_t> tested;
  std::vector<PointEstimate> points;
};

/// recover_vm(3) over the coarse grid of points inside the recoverable set.
/// Per-point failures are recorded, never raised.
FieldReconstruction reconstruct_v3_field(const MetricSpec& m, const Lattice& lat, const NonlinearitySpec& V1,
                                         const NonlinearitySpec& V2, const std::vector<double>& rhos,
                                         const ReconstructionOptions& opt = {});

/// CSV: t, x, [y], rho, I_re, I_im, estimate, error_bar, S_abs, grad_norm, c_lower, status.
void write_reconstruction_csv(const std::string& path, const std::vector<PointEstimate>& pts, int n);

} // namespace beamlab
