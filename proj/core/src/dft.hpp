// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "unfoldsep/dsp.hpp"

namespace unfoldsep::detail {

/// Real-input DFT of even size n with n/2+1 output bins.
class RealDft {
 public:
  virtual ~RealDft() = default;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  /// out[k] = sum_j in[j] exp(-2 pi i k j / n), k < n/2+1.
  virtual void forward(const double* in, std::complex<double>* out) const = 0;
  /// Unnormalized inverse of a Hermitian half spectrum:
  /// out[j] = sum_{k<n} Y[k] exp(2 pi i k j / n) with Y extended by symmetry.
  /// The imaginary parts of the DC and Nyquist bins are ignored.
  virtual void backward(const std::complex<double>* in, double* out) const = 0;

  /// Shared, cached instance. Thread-safe.
  static std::shared_ptr<const RealDft> get(int n, DftMethod method);

 protected:
  explicit RealDft(int n) : n_(n) {}
  int n_;
};

}  // namespace unfoldsep::detail
