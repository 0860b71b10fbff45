#pragma once

// Truncated multivariate Taylor polynomials in (sigma, z_1..z_nz).
// sigma is the offset along a geodesic parameter, z are transverse chart
// coordinates. A monomial sigma^p z^a is kept when p <= pmax and |a| <= qmax.

#include "beamlab/num.hpp"

#include <array>
#include <cassert>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace beamlab {

constexpr int kMaxZ = 3;

struct JetShape {
  int nz = 0, pmax = 0, qmax = 0, size = 0;
  std::vector<std::array<int, kMaxZ + 1>> exps;  // [sigma, z1, z2, z3]
  std::vector<int> zdeg, sdeg;
  std::vector<int> zbegin;  // monomials of z-degree q occupy [zbegin[q], zbegin[q+1])
  std::vector<std::vector<std::pair<int, int>>> mul;  // mul[i] = {(j, k)}: e_i * e_j = e_k
  std::array<std::vector<std::array<int, 3>>, kMaxZ + 1> deriv;  // (src, dst, factor)
  std::vector<int> lookup;

  int index(const std::array<int, kMaxZ + 1>& e) const {
    int q = 0;
    for (int v = 1; v <= nz; ++v) q += e[v];
    if (e[0] < 0 || e[0] > pmax || q > qmax) return -1;
    for (int v = nz + 1; v <= kMaxZ; ++v)
      if (e[v] != 0) return -1;
    int key = e[0];
    for (int v = 1; v <= nz; ++v) key = key * (qmax + 1) + e[v];
    return lookup[key];
  }
  int max_order() const { return pmax + qmax; }

  static const JetShape* get(int nz, int pmax, int qmax);

private:
  void build();
};

template <class T> inline bool is_zero(const T& x) { return x == T(0); }
template <class R> inline bool is_zero(const Cx<R>& x) { return x.re == R(0) && x.im == R(0); }

template <class T> class Jet {
public:
  const JetShape* sh = nullptr;
  std::vector<T> c;

  Jet() = default;
  explicit Jet(const JetShape* s) : sh(s), c(s->size, T(0)) {}
  Jet(const JetShape* s, const T& v) : sh(s), c(s->size, T(0)) { c[0] = v; }

  /// Variable v (0 = sigma, 1.. = z) expanded about `at`.
  static Jet variable(const JetShape* s, int v, const T& at) {
    Jet j(s, at);
    std::array<int, kMaxZ + 1> e{};
    e[v] = 1;
    int k = s->index(e);
    if (k >= 0) j.c[k] = T(1);
    return j;
  }

  const T& value() const { return c[0]; }
  T& value() { return c[0]; }

  T coef(const std::array<int, kMaxZ + 1>& e) const {
    int k = sh->index(e);
    return k < 0 ? T(0) : c[k];
  }

  Jet& operator+=(const Jet& o) { for (int i = 0; i < sh->size; ++i) c[i] += o.c[i]; return *this; }
  Jet& operator-=(const Jet& o) { for (int i = 0; i < sh->size; ++i) c[i] -= o.c[i]; return *this; }
  template <class S> Jet& scale(const S& s) { for (auto& x : c) x = x * s; return *this; }
  Jet operator-() const { Jet r(*this); for (auto& x : r.c) x = -x; return r; }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, const T& s) { a.c[0] += s; return a; }
  friend Jet operator+(const T& s, Jet a) { a.c[0] += s; return a; }
  friend Jet operator-(Jet a, const T& s) { a.c[0] -= s; return a; }
  friend Jet operator-(const T& s, const Jet& a) { Jet r = -a; r.c[0] += s; return r; }
  friend Jet operator*(Jet a, const T& s) { return a.scale(s); }
  friend Jet operator*(const T& s, Jet a) { return a.scale(s); }
  friend Jet operator/(Jet a, const T& s) { for (auto& x : a.c) x = x / s; return a; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r(a.sh);
    const auto& mul = a.sh->mul;
    for (int i = 0; i < a.sh->size; ++i) {
      if (is_zero(a.c[i])) continue;
      const T ai = a.c[i];
      for (const auto& [j, k] : mul[i]) r.c[k] += ai * b.c[j];
    }
    return r;
  }
  Jet& operator*=(const Jet& o) { *this = *this * o; return *this; }

  /// Exact partial derivative in variable v (0 = sigma).
  Jet d(int v) const {
    Jet r(sh);
    for (const auto& t : sh->deriv[v]) r.c[t[1]] += c[t[0]] * T(t[2]);
    return r;
  }

  /// Antiderivative in sigma vanishing at sigma = 0, truncated at pmax.
  Jet integrate_sigma() const {
    Jet r(sh);
    for (int i = 0; i < sh->size; ++i) {
      auto e = sh->exps[i];
      e[0] += 1;
      int k = sh->index(e);
      if (k >= 0) r.c[k] = c[i] / T(e[0]);
    }
    return r;
  }

  /// Part of z-degree exactly q (all sigma powers kept).
  Jet zpart(int q) const {
    Jet r(sh);
    if (q < 0 || q > sh->qmax) return r;
    for (int i = sh->zbegin[q]; i < sh->zbegin[q + 1]; ++i) r.c[i] = c[i];
    return r;
  }
  /// Drop monomials of z-degree above q.
  Jet ztrunc(int q) const {
    Jet r(*this);
    if (q >= sh->qmax) return r;
    for (int i = sh->zbegin[q + 1]; i < sh->size; ++i) r.c[i] = T(0);
    return r;
  }
  /// Drop monomials of sigma-degree above p.
  Jet strunc(int p) const {
    Jet r(*this);
    for (int i = 0; i < sh->size; ++i)
      if (sh->sdeg[i] > p) r.c[i] = T(0);
    return r;
  }
  /// Keep sigma^0 part only.
  Jet at_sigma0() const { return strunc(0); }

  /// Evaluate at a point (sigma, z...).
  template <class S> auto eval(const S& sigma, const S* z) const {
    using Out = decltype(T(0) * S(1));
    std::array<std::vector<S>, kMaxZ + 1> pw;
    pw[0].assign(sh->pmax + 1, S(1));
    for (int p = 1; p <= sh->pmax; ++p) pw[0][p] = pw[0][p - 1] * sigma;
    for (int v = 1; v <= sh->nz; ++v) {
      pw[v].assign(sh->qmax + 1, S(1));
      for (int p = 1; p <= sh->qmax; ++p) pw[v][p] = pw[v][p - 1] * z[v - 1];
    }
    Out acc = Out(0);
    for (int i = 0; i < sh->size; ++i) {
      if (is_zero(c[i])) continue;
      const auto& e = sh->exps[i];
      S m = pw[0][e[0]];
      for (int v = 1; v <= sh->nz; ++v) m = m * pw[v][e[v]];
      acc = acc + c[i] * m;
    }
    return acc;
  }

  /// Re-express in another shape (truncating or zero-extending).
  Jet reshape(const JetShape* to) const {
    Jet r(to);
    for (int i = 0; i < sh->size; ++i) {
      if (is_zero(c[i])) continue;
      int k = to->index(sh->exps[i]);
      if (k >= 0) r.c[k] = c[i];
    }
    return r;
  }

  template <class U, class F> Jet<U> map(F f) const {
    Jet<U> r(sh);
    for (int i = 0; i < sh->size; ++i) r.c[i] = f(c[i]);
    return r;
  }
};

/// f(a) = sum_k d[k]/k! (a - a0)^k, with d[k] = f^{(k)}(a0).
template <class T, class S> Jet<T> compose(const Jet<T>& a, const std::vector<S>& d) {
  Jet<T> u(a);
  u.c[0] = T(0);
  const int K = static_cast<int>(d.size()) - 1;
  S fact = S(1);
  for (int k = 2; k <= K; ++k) fact = fact * S(k);
  Jet<T> r(a.sh, T(d[K] / fact));
  for (int k = K - 1; k >= 0; --k) {
    fact = fact / S(k + 1);
    r = r * u;
    r.c[0] += T(d[k] / fact);
  }
  return r;
}

template <class R> Jet<R> exp(const Jet<R>& a) {
  const int K = a.sh->max_order();
  R e = exp(a.c[0]);
  return compose(a, std::vector<R>(K + 1, e));
}
template <class R> Jet<R> sin(const Jet<R>& a) {
  const int K = a.sh->max_order();
  R s = sin(a.c[0]), co = cos(a.c[0]);
  std::vector<R> d(K + 1);
  for (int k = 0; k <= K; ++k) d[k] = (k % 4 == 0) ? s : (k % 4 == 1) ? co : (k % 4 == 2) ? -s : -co;
  return compose(a, d);
}
template <class R> Jet<R> cos(const Jet<R>& a) {
  const int K = a.sh->max_order();
  R s = sin(a.c[0]), co = cos(a.c[0]);
  std::vector<R> d(K + 1);
  for (int k = 0; k <= K; ++k) d[k] = (k % 4 == 0) ? co : (k % 4 == 1) ? -s : (k % 4 == 2) ? -co : s;
  return compose(a, d);
}
template <class R> Jet<R> log(const Jet<R>& a) {
  const int K = a.sh->max_order();
  R x = a.c[0];
  std::vector<R> d(K + 1);
  d[0] = log(x);
  R fk = R(1), xp = x;
  for (int k = 1; k <= K; ++k) {
    d[k] = ((k % 2) ? R(1) : R(-1)) * fk / xp;
    fk = fk * R(k);
    xp = xp * x;
  }
  return compose(a, d);
}
/// a^p for real exponent p (a0 > 0 unless p is a nonnegative integer).
template <class R> Jet<R> powr(const Jet<R>& a, R p) {
  const int K = a.sh->max_order();
  R x = a.c[0];
  std::vector<R> d(K + 1);
  R coef = R(1);
  for (int k = 0; k <= K; ++k) {
    R e = p - R(k);
    d[k] = (coef == R(0)) ? R(0) : coef * pow(x, e);
    coef = coef * e;
  }
  return compose(a, d);
}
template <class R> Jet<R> sqrt(const Jet<R>& a) { return powr(a, R(0.5)); }
template <class R> Jet<R> tan(const Jet<R>& a) { return sin(a) * reciprocal(cos(a)); }
template <class R> Jet<R> tanh(const Jet<R>& a) {
  Jet<R> e2 = exp(R(2) * a);
  return (e2 - R(1)) * reciprocal(e2 + R(1));
}
template <class R> Jet<R> atan(const Jet<R>& a) {
  const int K = a.sh->max_order();
  R x = a.c[0];
  std::vector<R> d(K + 1);
  d[0] = atan(x);
  // atan^{(k)} = g^{(k-1)} with g = 1/(1+x^2) = (i/2)(1/(x+i) - 1/(x-i))
  Cx<R> xi(x, R(1)), xm(x, R(-1));
  R fk = R(1);
  for (int k = 1; k <= K; ++k) {
    int m = k - 1;  // derivative order of g
    Cx<R> p1 = Cx<R>(R(1)) / xi, p2 = Cx<R>(R(1)) / xm;
    Cx<R> q1(R(1)), q2(R(1));
    for (int t = 0; t < m + 1; ++t) { q1 *= p1; q2 *= p2; }
    R sign = (m % 2) ? R(-1) : R(1);
    Cx<R> g = Cx<R>(R(0), R(0.5)) * (q1 - q2) * (sign * fk);
    d[k] = g.re;
    fk = fk * R(k);
  }
  return compose(a, d);
}

template <class T> Jet<T> reciprocal(const Jet<T>& a) {
  const int K = a.sh->max_order();
  T x = a.c[0];
  // 1/(x+u) = sum (-1)^k u^k / x^{k+1}
  Jet<T> u(a);
  u.c[0] = T(0);
  T inv = T(1) / x;
  Jet<T> acc(a.sh, inv);
  for (int k = 1; k <= K; ++k) acc = Jet<T>(a.sh, inv) - (u * acc) * inv;
  return acc;
}
template <class T> inline Jet<T> inv_scalar(const Jet<T>& a) { return reciprocal(a); }
template <class T> Jet<T> operator/(const Jet<T>& a, const Jet<T>& b) { return a * reciprocal(b); }
template <class T> Jet<T> operator/(const T& s, const Jet<T>& b) { return reciprocal(b) * s; }

template <class R> inline Jet<R> konst_like(const Jet<R>& like, double v) { return Jet<R>(like.sh, R(v)); }
inline double konst_like(double, double v) { return v; }
inline Quad konst_like(Quad, double v) { return Quad(v); }

template <class R> inline Jet<R> scale_by(const Jet<R>& a, double s) { return a * R(s); }
inline double scale_by(double a, double s) { return a * s; }
inline Quad scale_by(Quad a, double s) { return a * Quad(s); }

template <class R> inline double value_of(const Jet<R>& j) { return to_double(j.c[0]); }
inline double value_of(double x) { return x; }
inline double value_of(Quad x) { return to_double(x); }

/// Real jet to complex jet.
template <class R> Jet<Cx<R>> complexify(const Jet<R>& a) {
  Jet<Cx<R>> r(a.sh);
  for (int i = 0; i < a.sh->size; ++i) r.c[i] = Cx<R>(a.c[i]);
  return r;
}
template <class R> Jet<Cx<R>> operator*(const Jet<R>& a, const Jet<Cx<R>>& b) {
  Jet<Cx<R>> r(a.sh);
  for (int i = 0; i < a.sh->size; ++i) {
    if (a.c[i] == R(0)) continue;
    const R ai = a.c[i];
    for (const auto& [j, k] : a.sh->mul[i]) r.c[k] += b.c[j] * ai;
  }
  return r;
}
template <class R> Jet<Cx<R>> operator*(const Jet<Cx<R>>& b, const Jet<R>& a) { return a * b; }

} // namespace beamlab
