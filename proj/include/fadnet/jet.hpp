#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace fadnet {

/// Forward-mode dual number with N tangent directions. Used to differentiate
/// the closed-form box codecs inside the per-object regression losses.
template <std::size_t N>
struct Jet {
  double a = 0.0;
  std::array<double, N> v{};

  Jet() = default;
  Jet(double value) : a(value) {}  // NOLINT: implicit lift of constants
  static Jet variable(double value, std::size_t i) {
    Jet j(value);
    j.v[i] = 1.0;
    return j;
  }

  Jet& operator+=(const Jet& o) { return *this = *this + o; }
  Jet& operator-=(const Jet& o) { return *this = *this - o; }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator+(const Jet& x, const Jet& y) {
    Jet r(x.a + y.a);
    for (std::size_t i = 0; i < N; ++i) r.v[i] = x.v[i] + y.v[i];
    return r;
  }
  friend Jet operator-(const Jet& x, const Jet& y) {
    Jet r(x.a - y.a);
    for (std::size_t i = 0; i < N; ++i) r.v[i] = x.v[i] - y.v[i];
    return r;
  }
  friend Jet operator-(const Jet& x) {
    Jet r(-x.a);
    for (std::size_t i = 0; i < N; ++i) r.v[i] = -x.v[i];
    return r;
  }
  friend Jet operator*(const Jet& x, const Jet& y) {
    Jet r(x.a * y.a);
    for (std::size_t i = 0; i < N; ++i) r.v[i] = x.v[i] * y.a + x.a * y.v[i];
    return r;
  }
  friend Jet operator/(const Jet& x, const Jet& y) {
    Jet r(x.a / y.a);
    const double inv = 1.0 / y.a;
    for (std::size_t i = 0; i < N; ++i) r.v[i] = (x.v[i] - r.a * y.v[i]) * inv;
    return r;
  }
  friend bool operator<(const Jet& x, const Jet& y) { return x.a < y.a; }
  friend bool operator>(const Jet& x, const Jet& y) { return x.a > y.a; }
  friend bool operator<=(const Jet& x, const Jet& y) { return x.a <= y.a; }
};

namespace detail {
template <std::size_t N>
Jet<N> chain(const Jet<N>& x, double value, double deriv) {
  Jet<N> r(value);
  for (std::size_t i = 0; i < N; ++i) r.v[i] = deriv * x.v[i];
  return r;
}
}  // namespace detail

template <std::size_t N>
Jet<N> exp(const Jet<N>& x) {
  const double e = std::exp(x.a);
  return detail::chain(x, e, e);
}
template <std::size_t N>
Jet<N> log(const Jet<N>& x) {
  return detail::chain(x, std::log(x.a), 1.0 / x.a);
}
template <std::size_t N>
Jet<N> sin(const Jet<N>& x) {
  return detail::chain(x, std::sin(x.a), std::cos(x.a));
}
template <std::size_t N>
Jet<N> cos(const Jet<N>& x) {
  return detail::chain(x, std::cos(x.a), -std::sin(x.a));
}
template <std::size_t N>
Jet<N> abs(const Jet<N>& x) {
  return detail::chain(x, std::abs(x.a), x.a < 0 ? -1.0 : 1.0);
}
template <std::size_t N>
Jet<N> atan2(const Jet<N>& y, const Jet<N>& x) {
  const double d = x.a * x.a + y.a * y.a;
  Jet<N> r(std::atan2(y.a, x.a));
  for (std::size_t i = 0; i < N; ++i) r.v[i] = (x.a * y.v[i] - y.a * x.v[i]) / d;
  return r;
}

inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Jet<N>& x) {
  return x.a;
}

}  // namespace fadnet
