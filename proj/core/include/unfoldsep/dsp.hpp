// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace unfoldsep {

/// Row-major T x F real matrix (frames x bins).
using RealMatrix =
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Row-major T x F complex matrix (frames x bins).
using ComplexMatrix = Eigen::Array<std::complex<double>, Eigen::Dynamic,
                                   Eigen::Dynamic, Eigen::RowMajor>;

enum class DftMethod {
  kFft,    // FFTW real transforms
  kDense,  // explicit cos/sin matrices; O(N^2), for small configs and checks
};

/// STFT framing parameters. Defaults are 32 ms windows with an 8 ms hop at
/// 8 kHz and a 256-point DFT (129 bins).
struct StftConfig {
  int win_len = 256;
  int hop = 64;
  int dft_size = 256;
  int sample_rate = 8000;
  DftMethod dft_method = DftMethod::kFft;

  /// Throws ConfigError unless hop | win_len, hop <= win_len <= dft_size and
  /// dft_size is even.
  void validate() const;

  int num_bins() const { return dft_size / 2 + 1; }
  /// Zeros added at each end of the signal before framing.
  int padding() const { return win_len - hop; }
  /// Frame count for a signal of `length` samples:
  /// ceil((length + 2 * padding - win_len) / hop) + 1.
  std::size_t num_frames(std::size_t length) const;
  /// Signal length that yields exactly `frames` frames.
  std::size_t length_for_frames(std::size_t frames) const;

  /// win 16, hop 4, dft 16; used by the gradient-check suites.
  static StftConfig miniature();

  bool operator==(const StftConfig&) const = default;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t size() const { return samples.size(); }
  /// Throws InputError if empty or non-finite.
  void validate() const;
};

struct ComplexSpectrogram {
  ComplexMatrix data;
  StftConfig config;
  std::optional<std::size_t> original_length;

  std::size_t frames() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(data.cols()); }
};

struct WindowPair {
  std::vector<double> analysis;
  std::vector<double> synthesis;
};

/// Periodic sqrt-Hann analysis window and the matching WOLA synthesis
/// window: synthesis[n] = analysis[n] / sum_m analysis[n + m*hop]^2.
WindowPair make_windows(const StftConfig& config);

namespace detail {
class RealDft;
}

/// The STFT and iSTFT of a fixed signal length as linear maps on flat
/// buffers, together with their adjoints.
///
/// Spectra are stored interleaved (re, im) in row-major T x F order, the same
/// memory layout as a ComplexMatrix. Signals are `length()` samples long.
class StftOperator {
 public:
  StftOperator(const StftConfig& config, std::size_t length);

  const StftConfig& config() const { return config_; }
  const WindowPair& windows() const { return windows_; }
  std::size_t length() const { return length_; }
  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return static_cast<std::size_t>(config_.num_bins()); }
  /// Number of doubles in an interleaved spectrum.
  std::size_t spectrum_size() const { return frames_ * bins() * 2; }

  void analyze(std::span<const double> signal, std::span<double> spectrum) const;
  void analyze_adjoint(std::span<const double> spectrum,
                       std::span<double> signal) const;
  void synthesize(std::span<const double> spectrum,
                  std::span<double> signal) const;
  void synthesize_adjoint(std::span<const double> signal,
                          std::span<double> spectrum) const;

 private:
  void check_sizes(std::span<const double> signal,
                   std::span<const double> spectrum) const;

  StftConfig config_;
  WindowPair windows_;
  std::size_t length_;
  std::size_t frames_;
  std::shared_ptr<const detail::RealDft> dft_;
};

ComplexSpectrogram stft(const Waveform& signal, const StftConfig& config);
Waveform istft(const ComplexSpectrogram& spectrogram);

RealMatrix magnitude(const ComplexSpectrogram& spectrogram);
/// Phase in [-pi, pi]; a zero bin has phase 0.
RealMatrix phase(const ComplexSpectrogram& spectrogram);
ComplexSpectrogram from_polar(const RealMatrix& magnitude,
                              const RealMatrix& phase, const StftConfig& config,
                              std::optional<std::size_t> original_length);

}  // namespace unfoldsep
