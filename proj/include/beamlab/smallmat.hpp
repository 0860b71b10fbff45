#pragma once

// Determinants and inverses of 1x1..3x3 matrices over any field-like type.

namespace beamlab {

template <class T> inline T inv_scalar(const T& x) { return T(1) / x; }

template <class T> T det_n(const T a[3][3], int d) {
  if (d == 1) return a[0][0];
  if (d == 2) return a[0][0] * a[1][1] - a[0][1] * a[1][0];
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

/// Inverse via the adjugate; returns the determinant.
template <class T> T inv_n(const T a[3][3], T out[3][3], int d) {
  if (d == 1) {
    out[0][0] = inv_scalar(a[0][0]);
    return a[0][0];
  }
  if (d == 2) {
    T det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    T r = inv_scalar(det);
    out[0][0] = a[1][1] * r;
    out[1][1] = a[0][0] * r;
    out[0][1] = -(a[0][1] * r);
    out[1][0] = -(a[1][0] * r);
    return det;
  }
  T c00 = a[1][1] * a[2][2] - a[1][2] * a[2][1];
  T c01 = a[1][2] * a[2][0] - a[1][0] * a[2][2];
  T c02 = a[1][0] * a[2][1] - a[1][1] * a[2][0];
  T det = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
  T r = inv_scalar(det);
  out[0][0] = c00 * r;
  out[1][0] = c01 * r;
  out[2][0] = c02 * r;
  out[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * r;
  out[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * r;
  out[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * r;
  out[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * r;
  out[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * r;
  out[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * r;
  return det;
}

} // namespace beamlab
