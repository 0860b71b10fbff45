#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <quadmath.h>
#include <stdexcept>
#include <string>

namespace beamlab {

using Quad = __float128;

inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double tan(double x) { return std::tan(x); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double atan(double x) { return std::atan(x); }
inline double atan2(double y, double x) { return std::atan2(y, x); }
inline double pow(double x, double y) { return std::pow(x, y); }
inline double fabs(double x) { return std::fabs(x); }
inline double cbrt(double x) { return std::cbrt(x); }

inline Quad sin(Quad x) { return sinq(x); }
inline Quad cos(Quad x) { return cosq(x); }
inline Quad tan(Quad x) { return tanq(x); }
inline Quad exp(Quad x) { return expq(x); }
inline Quad log(Quad x) { return logq(x); }
inline Quad sqrt(Quad x) { return sqrtq(x); }
inline Quad tanh(Quad x) { return tanhq(x); }
inline Quad atan(Quad x) { return atanq(x); }
inline Quad atan2(Quad y, Quad x) { return atan2q(y, x); }
inline Quad pow(Quad x, Quad y) { return powq(x, y); }
inline Quad fabs(Quad x) { return fabsq(x); }
inline Quad cbrt(Quad x) { return cbrtq(x); }

template <class R> inline double to_double(R x) { return static_cast<double>(x); }

template <class R> struct RealInfo;
template <> struct RealInfo<double> {
  static constexpr double eps = 2.220446049250313e-16;
  static const char* name() { return "double"; }
};
template <> struct RealInfo<Quad> {
  static constexpr double eps = 1.925929944387236e-34;
  static const char* name() { return "binary128"; }
};

template <class R> inline R pi_v() { return static_cast<R>(3.14159265358979323846264338327950288L); }
template <> inline Quad pi_v<Quad>() { return M_PIq; }

/// Minimal complex type usable with both double and binary128.
template <class R> struct Cx {
  R re{0}, im{0};
  Cx() = default;
  Cx(R r) : re(r), im(0) {}
  Cx(R r, R i) : re(r), im(i) {}
  template <class S, class = std::enable_if_t<std::is_arithmetic_v<S> && !std::is_same_v<S, R>>>
  Cx(S r) : re(static_cast<R>(r)), im(0) {}

  Cx& operator+=(const Cx& o) { re += o.re; im += o.im; return *this; }
  Cx& operator-=(const Cx& o) { re -= o.re; im -= o.im; return *this; }
  Cx& operator*=(const Cx& o) { R r = re * o.re - im * o.im; im = re * o.im + im * o.re; re = r; return *this; }
  Cx& operator*=(R s) { re *= s; im *= s; return *this; }
  Cx& operator/=(const Cx& o) { *this = *this / o; return *this; }
  Cx operator-() const { return {-re, -im}; }

  friend Cx operator+(Cx a, const Cx& b) { return a += b; }
  friend Cx operator-(Cx a, const Cx& b) { return a -= b; }
  friend Cx operator*(Cx a, const Cx& b) { return a *= b; }
  friend Cx operator*(Cx a, R s) { return a *= s; }
  friend Cx operator*(R s, Cx a) { return a *= s; }
  friend Cx operator+(Cx a, R s) { a.re += s; return a; }
  friend Cx operator+(R s, Cx a) { a.re += s; return a; }
  friend Cx operator-(Cx a, R s) { a.re -= s; return a; }
  friend Cx operator-(R s, const Cx& a) { return {s - a.re, -a.im}; }
  friend Cx operator/(const Cx& a, R s) { return {a.re / s, a.im / s}; }
  friend Cx operator/(const Cx& a, const Cx& b) {
    R d = b.re * b.re + b.im * b.im;
    return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
  }
  friend Cx operator/(R s, const Cx& b) { return Cx(s) / b; }
  friend bool operator==(const Cx& a, const Cx& b) { return a.re == b.re && a.im == b.im; }
};

template <class R> inline R real(const Cx<R>& z) { return z.re; }
template <class R> inline R imag(const Cx<R>& z) { return z.im; }
template <class R> inline Cx<R> conj(const Cx<R>& z) { return {z.re, -z.im}; }
template <class R> inline R norm2(const Cx<R>& z) { return z.re * z.re + z.im * z.im; }
template <class R> inline R abs(const Cx<R>& z) { return sqrt(z.re * z.re + z.im * z.im); }
template <class R> inline R arg(const Cx<R>& z) { return atan2(z.im, z.re); }
template <class R> inline Cx<R> exp(const Cx<R>& z) {
  R e = exp(z.re);
  return {e * cos(z.im), e * sin(z.im)};
}
template <class R> inline Cx<R> polar(R r, R th) { return {r * cos(th), r * sin(th)}; }
/// Principal square root.
template <class R> inline Cx<R> sqrt(const Cx<R>& z) {
  R r = abs(z);
  if (r == R(0)) return {R(0), R(0)};
  R a = sqrt((r + fabs(z.re)) / R(2));
  if (z.re >= R(0)) return {a, z.im / (R(2) * a)};
  return {fabs(z.im) / (R(2) * a), z.im >= R(0) ? a : -a};
}
template <class R> inline Cx<R> log(const Cx<R>& z) { return {log(abs(z)), arg(z)}; }

template <class R> inline std::complex<double> to_std(const Cx<R>& z) {
  return {to_double(z.re), to_double(z.im)};
}
template <class R> inline Cx<R> from_std(const std::complex<double>& z) {
  return {static_cast<R>(z.real()), static_cast<R>(z.imag())};
}

inline double real(double x) { return x; }
inline Quad real(Quad x) { return x; }

/// Error hierarchy shared by all modules; kind strings are stable identifiers.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }
private:
  std::string kind_;
};

} // namespace beamlab
