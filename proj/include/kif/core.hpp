#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace kif {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

//! Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

//! Numerical failures: the requested computation has no well-posed answer.
class NumericalError : public Error {
public:
  using Error::Error;
};

class DesignInfeasible : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class InvalidCovariance : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class InsufficientData : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class ZeroModulus : public NumericalError {
public:
  ZeroModulus(std::size_t index)
    : NumericalError("zero modulus sample at index " + std::to_string(index)),
      index_(index) {}
  std::size_t index() const { return index_; }

private:
  std::size_t index_;
};

//! Caller supplied arguments outside an operation's domain.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

class UnsupportedOrder : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

//! Kernel order (q,p): estimates the q-th derivative, first free moment is p.
struct KernelOrder {
  int q = 0;
  int p = 2;

  constexpr KernelOrder() = default;
  constexpr KernelOrder(int q_, int p_) : q(q_), p(p_) {
    if (q < 0 || p <= q)
      throw InvalidArgument("kernel order requires 0 <= q < p, got (" + std::to_string(q) +
                            "," + std::to_string(p) + ")");
  }

  static KernelOrder preferred(int q) { return {q, q + 2}; }

  bool operator==(const KernelOrder&) const = default;
};

inline double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k)
    f *= k;
  return f;
}

inline double int_pow(double x, int m) {
  double r = 1.0;
  for (int k = 0; k < m; ++k)
    r *= x;
  return r;
}

//! The normalized sample grid t_j = j / N.
inline std::vector<double> grid_times(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j)
    t[j] = static_cast<double>(j) / static_cast<double>(n);
  return t;
}

//! Uniformly sampled real data on the normalized grid t_j = j / N, j = 0..N-1.
class SampledSignal {
public:
  SampledSignal() = default;
  explicit SampledSignal(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2)
      throw InvalidArgument("a sampled signal needs at least 2 samples");
  }

  std::size_t size() const { return values_.size(); }
  double rate() const { return static_cast<double>(values_.size()); }
  double time(std::size_t j) const { return static_cast<double>(j) / rate(); }
  std::vector<double> times() const { return grid_times(size()); }

  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t j) const { return values_[j]; }

private:
  std::vector<double> values_;
};

} // namespace kif
