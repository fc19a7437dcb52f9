#pragma once

// Small fixed-size vector, matrix and quaternion types. They are templated on
// the scalar so the same simulation code runs on `double` and on `ad::Var`.

#include <array>
#include <cmath>
#include <ostream>

#include "physdf/core/autodiff.hpp"

namespace physdf {

template <class T>
struct Vec3 {
  std::array<T, 3> e{};

  constexpr Vec3() = default;
  constexpr Vec3(T x, T y, T z) : e{x, y, z} {}

  template <class U>
  static Vec3 from(const Vec3<U>& o) {
    return {T(o[0]), T(o[1]), T(o[2])};
  }

  constexpr T& operator[](int i) { return e[static_cast<std::size_t>(i)]; }
  constexpr const T& operator[](int i) const { return e[static_cast<std::size_t>(i)]; }
  constexpr const T& x() const { return e[0]; }
  constexpr const T& y() const { return e[1]; }
  constexpr const T& z() const { return e[2]; }

  friend Vec3 operator+(const Vec3& a, const Vec3& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
  }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
  }
  friend Vec3 operator-(const Vec3& a) { return {-a[0], -a[1], -a[2]}; }
  template <class S>
  friend Vec3 operator*(const Vec3& a, const S& s) {
    return {a[0] * s, a[1] * s, a[2] * s};
  }
  template <class S>
  friend Vec3 operator*(const S& s, const Vec3& a) {
    return {s * a[0], s * a[1], s * a[2]};
  }
  template <class S>
  friend Vec3 operator/(const Vec3& a, const S& s) {
    return {a[0] / s, a[1] / s, a[2] / s};
  }
  Vec3& operator+=(const Vec3& o) { return *this = *this + o; }
  Vec3& operator-=(const Vec3& o) { return *this = *this - o; }

  friend bool operator==(const Vec3& a, const Vec3& b) = default;
};

using Vec3d = Vec3<double>;

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

template <class T>
T squared_norm(const Vec3<T>& a) {
  return dot(a, a);
}

template <class T>
T norm(const Vec3<T>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

inline double norm1(const Vec3d& a) { return std::abs(a[0]) + std::abs(a[1]) + std::abs(a[2]); }

template <class T>
Vec3d values(const Vec3<T>& a) {
  return {value(a[0]), value(a[1]), value(a[2])};
}

inline bool all_finite(const Vec3d& a) {
  return std::isfinite(a[0]) && std::isfinite(a[1]) && std::isfinite(a[2]);
}

inline std::ostream& operator<<(std::ostream& os, const Vec3d& v) {
  return os << '(' << v[0] << ", " << v[1] << ", " << v[2] << ')';
}

/// Row-major 3x3 matrix.
template <class T>
struct Mat3 {
  std::array<std::array<T, 3>, 3> m{};

  static Mat3 zero() { return Mat3{}; }
  static Mat3 identity() {
    Mat3 r;
    r.m[0][0] = T(1.0);
    r.m[1][1] = T(1.0);
    r.m[2][2] = T(1.0);
    return r;
  }
  static Mat3 diagonal(T a, T b, T c) {
    Mat3 r;
    r.m[0][0] = a;
    r.m[1][1] = b;
    r.m[2][2] = c;
    return r;
  }
  /// [v]x, so that skew(v) * w == cross(v, w).
  static Mat3 skew(const Vec3<T>& v) {
    Mat3 r;
    r.m[0] = {T(0.0), -v[2], v[1]};
    r.m[1] = {v[2], T(0.0), -v[0]};
    r.m[2] = {-v[1], v[0], T(0.0)};
    return r;
  }
  static Mat3 outer(const Vec3<T>& a, const Vec3<T>& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a[i] * b[j];
    return r;
  }

  T& operator()(int i, int j) { return m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  const T& operator()(int i, int j) const {
    return m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }

  Vec3<T> row(int i) const { return {(*this)(i, 0), (*this)(i, 1), (*this)(i, 2)}; }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  T trace() const { return (*this)(0, 0) + (*this)(1, 1) + (*this)(2, 2); }

  T determinant() const {
    const auto& a = *this;
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  }

  /// Cofactor inverse; the caller is responsible for checking conditioning.
  Mat3 inverse_unchecked(const T& det) const {
    const auto& a = *this;
    Mat3 r;
    r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / det;
    r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det;
    r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det;
    r(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / det;
    r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det;
    r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det;
    r(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / det;
    r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / det;
    r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det;
    return r;
  }

  friend Mat3 operator+(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a(i, j) + b(i, j);
    return r;
  }
  friend Mat3 operator-(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a(i, j) - b(i, j);
    return r;
  }
  template <class S>
  friend Mat3 operator*(const Mat3& a, const S& s) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a(i, j) * s;
    return r;
  }
  friend Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
  }
  friend Vec3<T> operator*(const Mat3& a, const Vec3<T>& v) {
    return {a(0, 0) * v[0] + a(0, 1) * v[1] + a(0, 2) * v[2],
            a(1, 0) * v[0] + a(1, 1) * v[1] + a(1, 2) * v[2],
            a(2, 0) * v[0] + a(2, 1) * v[1] + a(2, 2) * v[2]};
  }
};

using Mat3d = Mat3<double>;

template <class T>
Mat3d values(const Mat3<T>& a) {
  Mat3d r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = value(a(i, j));
  return r;
}

/// Quaternion stored as (w, x, y, z) with w the scalar part.
template <class T>
struct Quat {
  T w{1.0}, x{0.0}, y{0.0}, z{0.0};

  static Quat identity() { return {T(1.0), T(0.0), T(0.0), T(0.0)}; }

  static Quat from_axis_angle(const Vec3d& axis, double angle) {
    const double n = norm(axis);
    const double s = std::sin(angle / 2.0) / n;
    return {T(std::cos(angle / 2.0)), T(axis[0] * s), T(axis[1] * s), T(axis[2] * s)};
  }

  T squared_norm() const { return w * w + x * x + y * y + z * z; }

  friend Quat operator*(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
  }
};

using Quatd = Quat<double>;

template <class T>
Quatd values(const Quat<T>& q) {
  return {value(q.w), value(q.x), value(q.y), value(q.z)};
}

/// Geodesic angle between two orientations, robust to the double cover.
inline double rotation_angle_between(const Quatd& a, const Quatd& b) {
  const double na = std::sqrt(a.squared_norm());
  const double nb = std::sqrt(b.squared_norm());
  double d = std::abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z) / (na * nb);
  if (d > 1.0) d = 1.0;
  return 2.0 * std::acos(d);
}

inline constexpr double kPi = 3.14159265358979323846;

inline double degrees(double rad) { return rad * 180.0 / kPi; }
inline double radians(double deg) { return deg * kPi / 180.0; }

}  // namespace physdf
