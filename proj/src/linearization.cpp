#include "beamlab/linearization.hpp"
#include "beamlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace beamlab {

namespace {

template <class V> double rms(const V& a) {
  double s = 0;
  for (const auto& x : a) s += std::norm(x);
  return a.empty() ? 0.0 : std::sqrt(s / a.size());
}

struct StencilResult {
  RealField field;
  std::vector<double> trace;
  std::vector<StencilCorner> corners;
  double noise = 0;
};

StencilResult run_stencil(const WaveOperator& op, const NonlinearitySpec& V, const std::vector<BoundaryData>& f,
                          double h, const LinearizationOptions& opt) {
  const int m = static_cast<int>(f.size());
  const int nc = 1 << m;
  std::vector<SigmaData<double>> data;
  for (const auto& fi : f) data.push_back(fi.scaled());

  std::vector<RealField> u(nc);
  std::vector<std::vector<double>> tr(nc);
  std::vector<StencilCorner> corners(nc);
  parallel_for(nc, opt.threads, [&](int c) {
    BoundaryData d;
    d.eps = 1.0;
    d.s_data = f[0].s_data;
    d.gamma = f[0].gamma;
    d.f.assign(data[0].size(), 0.0);
    auto& corner = corners[c];
    corner.signs.resize(m);
    int parity = 1;
    for (int i = 0; i < m; ++i) {
      const int s = (c >> i) & 1 ? -1 : 1;
      corner.signs[i] = s;
      parity *= s;
      for (std::size_t k = 0; k < d.f.size(); ++k) d.f[k] += s * h * data[i][k];
    }
    corner.weight = parity / std::pow(2 * h, m);
    SemilinearReport rep;
    u[c] = solve_semilinear(op, V, d, &rep, opt.semilinear);
    corner.iterations = rep.iterations;
    corner.norm = rms(u[c].v);
    if (opt.trace) tr[c] = neumann_trace(op, u[c]);
  });

  StencilResult r;
  r.field = RealField(op.lat);
  if (opt.trace) r.trace.assign(tr[0].size(), 0.0);
  double noise2 = 0;
  const double rel = opt.semilinear.tol + 64 * std::numeric_limits<double>::epsilon();
  for (int c = 0; c < nc; ++c) {
    const double w = corners[c].weight;
    for (std::size_t i = 0; i < r.field.v.size(); ++i) r.field.v[i] += w * u[c].v[i];
    for (std::size_t i = 0; i < r.trace.size(); ++i) r.trace[i] += w * tr[c][i];
    noise2 += std::pow(w * rel * corners[c].norm, 2);
  }
  r.noise = std::sqrt(noise2);
  r.corners = std::move(corners);
  return r;
}

} // namespace

LinearizedField mixed_derivative(const WaveOperator& op, const NonlinearitySpec& V, const std::vector<BoundaryData>& f,
                                 const LinearizationOptions& opt) {
  const int m = static_cast<int>(f.size());
  if (m < 1 || m > 5) throw Error("config", "linearization order must be in 1..5");
  if (!(opt.eps_step > 0)) throw Error("config", "eps_step must be positive");
  for (const auto& fi : f)
    if (fi.f.size() != op.nt() * op.bnd.sites.size()) throw Error("alignment", "boundary data on another lattice");

  auto a = run_stencil(op, V, f, opt.eps_step, opt);
  LinearizedField lf;
  lf.m = m;
  lf.index_set = (1u << m) - 1;
  lf.eps_step = opt.eps_step;
  lf.field = std::move(a.field);
  lf.trace = std::move(a.trace);
  lf.corners = std::move(a.corners);
  lf.cancellation = a.noise;
  if (opt.richardson) {
    auto b = run_stencil(op, V, f, opt.eps_step / 2, opt);
    double d2 = 0;
    for (std::size_t i = 0; i < lf.field.v.size(); ++i) d2 += std::pow(lf.field.v[i] - b.field.v[i], 2);
    lf.truncation = 4.0 / 3.0 * std::sqrt(d2 / lf.field.v.size());
    lf.cancellation = std::max(lf.cancellation, b.noise);
  }
  lf.error_bar = lf.truncation + lf.cancellation;
  lf.ill_conditioned = lf.error_bar > rms(lf.field.v);
  return lf;
}

std::vector<std::vector<unsigned>> set_partitions(int m) {
  // restricted growth strings
  std::vector<std::vector<unsigned>> out;
  std::vector<int> a(m, 0);
  auto emit = [&] {
    int nb = *std::max_element(a.begin(), a.end()) + 1;
    std::vector<unsigned> blocks(nb, 0u);
    for (int i = 0; i < m; ++i) blocks[a[i]] |= 1u << i;
    out.push_back(std::move(blocks));
  };
  if (m <= 0) return out;
  std::vector<int> mx(m, 0);
  while (true) {
    emit();
    int i = m - 1;
    while (i > 0 && a[i] == mx[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    mx[i] = std::max(mx[i - 1], a[i]);
    for (int j = i + 1; j < m; ++j) {
      a[j] = 0;
      mx[j] = mx[i];
    }
  }
  return out;
}

template <class T>
GridField<T> linearized_source(const NonlinearitySpec& V, const std::vector<GridField<T>>& w,
                               const std::map<unsigned, GridField<T>>& lower, int m) {
  if (static_cast<int>(w.size()) != m) throw Error("config", "need one linear wave per input");
  const Lattice& lat = w[0].lat;
  for (const auto& wi : w)
    if (wi.v.size() != lat.size()) throw Error("alignment", "linear waves on different lattices");
  GridField<T> src(lat);
  for (const auto& blocks : set_partitions(m)) {
    const int k = static_cast<int>(blocks.size());
    if (k < 3) continue;
    auto it = V.V.find(k);
    if (it == V.V.end()) continue;
    std::vector<const std::vector<T>*> factors;
    for (unsigned b : blocks) {
      if ((b & (b - 1)) == 0) {
        factors.push_back(&w[__builtin_ctz(b)].v);
        continue;
      }
      auto lo = lower.find(b);
      if (lo == lower.end()) throw Error("dependency", "missing lower-order field for index set " + std::to_string(b));
      if (lo->second.v.size() != lat.size()) throw Error("alignment", "lower-order field on another lattice");
      factors.push_back(&lo->second.v);
    }
    const auto& Vk = it->second;
    for (std::size_t i = 0; i < src.v.size(); ++i) {
      if (Vk[i] == 0.0) continue;
      T p = T(Vk[i]);
      for (const auto* f : factors) p *= (*f)[i];
      src.v[i] += p;
    }
  }
  return src;
}

template <class T>
GridField<T> direct_linearized_solution(const WaveOperator& op, const NonlinearitySpec& V,
                                        const std::vector<GridField<T>>& w,
                                        const std::map<unsigned, GridField<T>>& lower, int m) {
  auto F = linearized_source(V, w, lower, m);
  if (F.v.size() != op.lat.size()) throw Error("alignment", "linear waves not on the operator lattice");
  for (auto& x : F.v) x = -x;
  return solve_linear_wave<T>(op, &F, nullptr);
}

template <class T>
GreensIdentity<T> greens_identity_check(const WaveOperator& op, const std::vector<double>& dV3,
                                        const std::vector<GridField<T>>& w, const std::vector<T>& dU_nu,
                                        const std::vector<std::uint8_t>& region) {
  if (w.size() != 4) throw Error("config", "the identity takes four waves w0..w3");
  const std::size_t N = op.lat.size();
  const std::size_t ne = op.bnd.entries.size();
  if (dV3.size() != N) throw Error("alignment", "coefficient difference on another lattice");
  for (const auto& wi : w)
    if (wi.v.size() != N || wi.lat.dims != op.lat.dims) throw Error("alignment", "wave on another lattice");
  if (dU_nu.size() != op.nt() * ne) throw Error("alignment", "trace on another boundary lattice");
  if (!region.empty() && region.size() != dU_nu.size()) throw Error("alignment", "region mask size");

  GreensIdentity<T> g;
  GridField<T> prod(op.lat);
  for (std::size_t i = 0; i < N; ++i) prod.v[i] = dV3[i] * w[0].v[i] * w[1].v[i] * w[2].v[i] * w[3].v[i];
  g.lhs = integrate(op, prod);

  const std::size_t S = op.S();
  for (int it = 0; it < op.nt(); ++it) {
    const double tw = time_weight(op.lat, it);
    for (std::size_t k = 0; k < ne; ++k) {
      if (!region.empty() && !region[it * ne + k]) continue;
      const auto& e = op.bnd.entries[k];
      const T w0 = w[0].v[it * S + op.bnd.sites[e.site]];
      g.rhs += tw * e.weight * boundary_area(op, it, e) * dU_nu[it * ne + k] * w0;
    }
  }
  g.defect = std::abs(g.lhs - g.rhs);
  return g;
}

template <class T>
std::map<unsigned, GridField<T>> linearized_family(const WaveOperator& op, const NonlinearitySpec& V,
                                                   const std::vector<GridField<T>>& w, int top_order) {
  const int m = static_cast<int>(w.size());
  if (top_order > m) throw Error("config", "family order exceeds the number of waves");
  std::map<unsigned, GridField<T>> U;
  for (int k = 2; k <= top_order; ++k)
    for (unsigned B = 1; B < (1u << m); ++B) {
      if (__builtin_popcount(B) != k) continue;
      std::vector<int> el;
      for (int i = 0; i < m; ++i)
        if (B >> i & 1) el.push_back(i);
      std::vector<GridField<T>> wl;
      for (int i : el) wl.push_back(w[i]);
      // lower index sets renumbered to the positions inside B
      std::map<unsigned, GridField<T>> lower;
      for (unsigned sub = 1; sub < (1u << k) - 1; ++sub) {
        if (__builtin_popcount(sub) < 2) continue;
        unsigned g = 0;
        for (int i = 0; i < k; ++i)
          if (sub >> i & 1) g |= 1u << el[i];
        lower.emplace(sub, U.at(g));
      }
      U.emplace(B, direct_linearized_solution<T>(op, V, wl, lower, k));
    }
  return U;
}

std::vector<std::uint8_t> complement_mask(const WaveOperator& op, const GammaWindow& gamma) {
  const std::size_t ne = op.bnd.entries.size();
  std::vector<std::uint8_t> mask(op.nt() * ne, 0);
  for (int it = 0; it < op.nt(); ++it) {
    const double t = op.lat.coord(0, it);
    for (std::size_t k = 0; k < ne; ++k) {
      const auto& e = op.bnd.entries[k];
      mask[it * ne + k] = !gamma.contains(e.face, t, e.along);
    }
  }
  return mask;
}

void write_stencil_report(const std::string& path, const LinearizedField& lf) {
  std::ofstream os(path);
  if (!os) throw Error("io", "cannot write " + path);
  os << "solve_id,signs,weight,norm,iterations\n";
  char buf[64];
  for (std::size_t c = 0; c < lf.corners.size(); ++c) {
    const auto& k = lf.corners[c];
    os << c << ',';
    for (int s : k.signs) os << (s > 0 ? '+' : '-');
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,", k.weight, k.norm);
    os << buf << k.iterations << '\n';
  }
}

template GridField<double> linearized_source(const NonlinearitySpec&, const std::vector<GridField<double>>&,
                                             const std::map<unsigned, GridField<double>>&, int);
template GridField<cplx> linearized_source(const NonlinearitySpec&, const std::vector<GridField<cplx>>&,
                                           const std::map<unsigned, GridField<cplx>>&, int);
template GridField<double> direct_linearized_solution(const WaveOperator&, const NonlinearitySpec&,
                                                      const std::vector<GridField<double>>&,
                                                      const std::map<unsigned, GridField<double>>&, int);
template GridField<cplx> direct_linearized_solution(const WaveOperator&, const NonlinearitySpec&,
                                                    const std::vector<GridField<cplx>>&,
                                                    const std::map<unsigned, GridField<cplx>>&, int);
template std::map<unsigned, GridField<double>> linearized_family(const WaveOperator&, const NonlinearitySpec&,
                                                                 const std::vector<GridField<double>>&, int);
template std::map<unsigned, GridField<cplx>> linearized_family(const WaveOperator&, const NonlinearitySpec&,
                                                               const std::vector<GridField<cplx>>&, int);
template GreensIdentity<double> greens_identity_check(const WaveOperator&, const std::vector<double>&,
                                                      const std::vector<GridField<double>>&,
                                                      const std::vector<double>&, const std::vector<std::uint8_t>&);
template GreensIdentity<cplx> greens_identity_check(const WaveOperator&, const std::vector<double>&,
                                                    const std::vector<GridField<cplx>>&, const std::vector<cplx>&,
                                                    const std::vector<std::uint8_t>&);

} // namespace beamlab
