#pragma once

// Tape-based reverse-mode differentiation for scalar code.
//
// A `Var` carries a value and, when created while a `Tape` is active, the index
// of the node that produced it. Every arithmetic operation on tracked values
// appends one node holding at most two parent indices with their local
// partials. Comparisons look only at values, so control flow taken during the
// forward run is frozen into the tape.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "physdf/core/error.hpp"

namespace physdf::ad {

class Tape {
 public:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
  };

  std::int32_t push(std::int32_t a, double da, std::int32_t b, double db) {
    nodes_.push_back({a, b, da, db});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::int32_t new_input() { return push(-1, 0.0, -1, 0.0); }

  std::size_t size() const { return nodes_.size(); }

  /// Propagates adjoints for nodes in [begin, end), walking backwards.
  void backward_segment(std::vector<double>& adjoint, std::size_t begin,
                        std::size_t end) const {
    for (std::size_t n = end; n-- > begin;) {
      const double g = adjoint[n];
      if (g == 0.0) continue;
      const Node& node = nodes_[n];
      if (node.a >= 0) adjoint[static_cast<std::size_t>(node.a)] += node.da * g;
      if (node.b >= 0) adjoint[static_cast<std::size_t>(node.b)] += node.db * g;
    }
  }

  /// Full reverse sweep from `output`. A nonzero `chunk` processes the tape in
  /// segments of that many nodes; the visiting order is the same either way.
  std::vector<double> adjoints(std::int32_t output, std::size_t chunk = 0) const {
    std::vector<double> adjoint(nodes_.size(), 0.0);
    if (output < 0) return adjoint;
    adjoint[static_cast<std::size_t>(output)] = 1.0;
    const std::size_t end = static_cast<std::size_t>(output) + 1;
    if (chunk == 0) chunk = end;
    for (std::size_t hi = end; hi > 0;) {
      const std::size_t lo = hi > chunk ? hi - chunk : 0;
      backward_segment(adjoint, lo, hi);
      hi = lo;
    }
    return adjoint;
  }

 private:
  std::vector<Node> nodes_;
};

namespace detail {
inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

/// Makes `tape` the recording target for the current thread for its lifetime.
class ScopedTape {
 public:
  explicit ScopedTape(Tape& tape) : previous_(detail::active_tape()) {
    detail::active_tape() = &tape;
  }
  ~ScopedTape() { detail::active_tape() = previous_; }
  ScopedTape(const ScopedTape&) = delete;
  ScopedTape& operator=(const ScopedTape&) = delete;

 private:
  Tape* previous_;
};

class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT(google-explicit-constructor)

  static Var input(double v) {
    Tape* tape = detail::active_tape();
    if (!tape) throw Error("ad::Var::input requires an active tape");
    return Var(v, tape->new_input());
  }

  double value() const { return value_; }
  std::int32_t id() const { return id_; }
  bool tracked() const { return id_ >= 0; }

  /// Records a node for f(x) with df/dx = d.
  static Var unary(const Var& x, double v, double d) {
    if (!x.tracked()) return Var(v);
    return Var(v, detail::active_tape()->push(x.id_, d, -1, 0.0));
  }

  static Var binary(const Var& x, double dx, const Var& y, double dy, double v) {
    if (!x.tracked() && !y.tracked()) return Var(v);
    return Var(v, detail::active_tape()->push(x.id_, dx, y.id_, dy));
  }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var operator+(const Var& a, const Var& b) {
    return binary(a, 1.0, b, 1.0, a.value_ + b.value_);
  }
  friend Var operator-(const Var& a, const Var& b) {
    return binary(a, 1.0, b, -1.0, a.value_ - b.value_);
  }
  friend Var operator*(const Var& a, const Var& b) {
    return binary(a, b.value_, b, a.value_, a.value_ * b.value_);
  }
  friend Var operator/(const Var& a, const Var& b) {
    const double q = a.value_ / b.value_;
    return binary(a, 1.0 / b.value_, b, -q / b.value_, q);
  }
  friend Var operator-(const Var& a) { return unary(a, -a.value_, -1.0); }

  friend Var operator+(const Var& a, double b) { return unary(a, a.value_ + b, 1.0); }
  friend Var operator+(double a, const Var& b) { return unary(b, a + b.value_, 1.0); }
  friend Var operator-(const Var& a, double b) { return unary(a, a.value_ - b, 1.0); }
  friend Var operator-(double a, const Var& b) { return unary(b, a - b.value_, -1.0); }
  friend Var operator*(const Var& a, double b) { return unary(a, a.value_ * b, b); }
  friend Var operator*(double a, const Var& b) { return unary(b, a * b.value_, a); }
  friend Var operator/(const Var& a, double b) { return unary(a, a.value_ / b, 1.0 / b); }
  friend Var operator/(double a, const Var& b) {
    const double q = a / b.value_;
    return unary(b, q, -q / b.value_);
  }

  friend bool operator<(const Var& a, const Var& b) { return a.value_ < b.value_; }
  friend bool operator>(const Var& a, const Var& b) { return a.value_ > b.value_; }
  friend bool operator<=(const Var& a, const Var& b) { return a.value_ <= b.value_; }
  friend bool operator>=(const Var& a, const Var& b) { return a.value_ >= b.value_; }

 private:
  Var(double v, std::int32_t id) : value_(v), id_(id) {}

  double value_ = 0.0;
  std::int32_t id_ = -1;
};

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return Var::unary(x, s, s > 0.0 ? 0.5 / s : 0.0);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return Var::unary(x, e, e);
}
inline Var log(const Var& x) { return Var::unary(x, std::log(x.value()), 1.0 / x.value()); }
inline Var abs(const Var& x) {
  return Var::unary(x, std::abs(x.value()), x.value() < 0.0 ? -1.0 : 1.0);
}

/// Gradient of `output` with respect to each of `inputs`.
inline std::vector<double> gradient(const Tape& tape, const Var& output,
                                    std::span<const Var> inputs, std::size_t chunk = 0) {
  const auto adjoint = tape.adjoints(output.id(), chunk);
  std::vector<double> g(inputs.size(), 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].tracked() && inputs[i].id() <= output.id())
      g[i] = adjoint[static_cast<std::size_t>(inputs[i].id())];
  }
  return g;
}

}  // namespace physdf::ad

namespace physdf {

inline double value(double x) { return x; }
inline double value(const ad::Var& x) { return x.value(); }

}  // namespace physdf
