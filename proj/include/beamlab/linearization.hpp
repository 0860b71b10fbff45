#pragma once

// Higher-order linearization of the semilinear boundary problem: mixed
// eps-derivatives by central product stencils, direct solves of the
// linearized equations, and the integral identity that links interior
// interactions to boundary traces.

#include "beamlab/wave_forward.hpp"

#include <map>
#include <string>
#include <vector>

namespace beamlab {

struct StencilCorner {
  std::vector<int> signs;  // +1 / -1 per input
  double weight = 0;       // prod(signs) / (2h)^m
  double norm = 0;         // L2 norm of the corner solution
  int iterations = 0;      // Picard iterations of the corner solve
};

struct LinearizedField {
  int m = 0;
  unsigned index_set = 0;  // bit i set for input i
  double eps_step = 0;
  RealField field;          // mixed derivative of u
  std::vector<double> trace;  // mixed derivative of the Neumann trace (nt x entries), if requested
  std::vector<StencilCorner> corners;

  double truncation = 0;    // |D(h) - D(h/2)| * 4/3 (L2)
  double cancellation = 0;  // corner noise amplified by the stencil (L2)
  double error_bar = 0;     // truncation + cancellation
  bool ill_conditioned = false;  // error bar exceeds the signal
};

struct LinearizationOptions {
  double eps_step = 1e-2;
  bool trace = false;
  bool richardson = true;  // second stencil at h/2 for the truncation estimate
  int threads = 1;
  SemilinearOptions semilinear{1e-13, 80, 0.1};
};

/// d^m u / d eps_1 ... d eps_m at eps = 0 where u solves the semilinear
/// problem with lateral data sum_i eps_i f_i (f_i taken with its own eps).
LinearizedField mixed_derivative(const WaveOperator& op, const NonlinearitySpec& V,
                                 const std::vector<BoundaryData>& f, const LinearizationOptions& opt = {});

/// All set partitions of {0..m-1} into blocks (bitmasks).
std::vector<std::vector<unsigned>> set_partitions(int m);

/// R_m + V_m prod w_i, where R_m collects V_k prod_B U^(B) over partitions
/// into 3 <= k <= m-1 blocks. lower maps an index set (|B| >= 2) to U^(B);
/// singletons come from w. Throws Error("dependency") when a needed U^(B)
/// is absent and V_k is nonzero.
template <class T>
GridField<T> linearized_source(const NonlinearitySpec& V, const std::vector<GridField<T>>& w,
                               const std::map<unsigned, GridField<T>>& lower, int m);

/// Solves box U + R_m + V_m prod w_i = 0 with zero lateral and initial data.
template <class T>
GridField<T> direct_linearized_solution(const WaveOperator& op, const NonlinearitySpec& V,
                                        const std::vector<GridField<T>>& w,
                                        const std::map<unsigned, GridField<T>>& lower, int m);

/// U^(B) for every index set B of the waves with 2 <= |B| <= top_order,
/// solved bottom-up so each level feeds the next one's source.
template <class T>
std::map<unsigned, GridField<T>> linearized_family(const WaveOperator& op, const NonlinearitySpec& V,
                                                   const std::vector<GridField<T>>& w, int top_order);

template <class T> struct GreensIdentity {
  T lhs{}, rhs{};
  double defect = 0;
};

/// lhs = int dV3 w0 w1 w2 w3 dV_g dt, rhs = int over the masked boundary
/// entries of dU_nu w0 dS_g dt. dU_nu is nt x entries; an empty region
/// means all of Sigma. Throws Error("alignment") on mismatched lattices.
template <class T>
GreensIdentity<T> greens_identity_check(const WaveOperator& op, const std::vector<double>& dV3,
                                        const std::vector<GridField<T>>& w, const std::vector<T>& dU_nu,
                                        const std::vector<std::uint8_t>& region = {});

/// nt x entries mask of Sigma minus Gamma.
std::vector<std::uint8_t> complement_mask(const WaveOperator& op, const GammaWindow& gamma);

/// CSV: corner signs, solve id, norm, iterations.
void write_stencil_report(const std::string& path, const LinearizedField& lf);

} // namespace beamlab
