// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

#include "dft.hpp"
#include "unfoldsep/errors.hpp"

namespace unfoldsep {

namespace detail {
namespace {

class DenseDft final : public RealDft {
 public:
  explicit DenseDft(int n) : RealDft(n), cos_(n), sin_(n) {
    for (int j = 0; j < n; ++j) {
      const double angle = 2.0 * std::numbers::pi * j / n;
      cos_[j] = std::cos(angle);
      sin_[j] = std::sin(angle);
    }
  }

  void forward(const double* in, std::complex<double>* out) const override {
    const int bins = this->bins();
    for (int k = 0; k < bins; ++k) {
      double re = 0.0;
      double im = 0.0;
      for (int j = 0; j < n_; ++j) {
        const int idx = static_cast<int>((static_cast<long>(k) * j) % n_);
        re += in[j] * cos_[idx];
        im -= in[j] * sin_[idx];
      }
      out[k] = {re, im};
    }
  }

  void backward(const std::complex<double>* in, double* out) const override {
    const int half = n_ / 2;
    for (int j = 0; j < n_; ++j) {
      double acc = in[0].real() + ((j % 2 == 0) ? 1.0 : -1.0) * in[half].real();
      for (int k = 1; k < half; ++k) {
        const int idx = static_cast<int>((static_cast<long>(k) * j) % n_);
        acc += 2.0 * (in[k].real() * cos_[idx] - in[k].imag() * sin_[idx]);
      }
      out[j] = acc;
    }
  }

 private:
  std::vector<double> cos_;
  std::vector<double> sin_;
};

std::mutex& planner_mutex() {
  static std::mutex mutex;
  return mutex;
}

class FftwDft final : public RealDft {
 public:
  explicit FftwDft(int n) : RealDft(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    double* real = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* cplx = fftw_alloc_complex(static_cast<std::size_t>(bins()));
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    r2c_ = fftw_plan_dft_r2c_1d(n, real, cplx, flags);
    c2r_ = fftw_plan_dft_c2r_1d(n, cplx, real, flags);
    fftw_free(real);
    fftw_free(cplx);
    if (r2c_ == nullptr || c2r_ == nullptr) {
      throw ConfigError("FFTW could not plan a transform of size " +
                        std::to_string(n));
    }
  }

  ~FftwDft() override {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(r2c_);
    fftw_destroy_plan(c2r_);
  }

  FftwDft(const FftwDft&) = delete;
  FftwDft& operator=(const FftwDft&) = delete;

  void forward(const double* in, std::complex<double>* out) const override {
    // r2c leaves its input untouched; FFTW just doesn't declare it const.
    fftw_execute_dft_r2c(r2c_, const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
  }

  void backward(const std::complex<double>* in, double* out) const override {
    // c2r overwrites its input.
    std::vector<std::complex<double>> scratch(in, in + bins());
    scratch[0].imag(0.0);
    scratch[static_cast<std::size_t>(n_ / 2)].imag(0.0);
    fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(scratch.data()),
                         out);
  }

 private:
  fftw_plan r2c_ = nullptr;
  fftw_plan c2r_ = nullptr;
};

}  // namespace

std::shared_ptr<const RealDft> RealDft::get(int n, DftMethod method) {
  static std::mutex cache_mutex;
  static std::map<std::pair<int, DftMethod>, std::shared_ptr<const RealDft>>
      cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto& slot = cache[{n, method}];
  if (!slot) {
    if (method == DftMethod::kDense) {
      slot = std::make_shared<DenseDft>(n);
    } else {
      slot = std::make_shared<FftwDft>(n);
    }
  }
  return slot;
}

}  // namespace detail

void StftConfig::validate() const {
  if (win_len <= 0 || hop <= 0 || dft_size <= 0 || sample_rate <= 0) {
    throw ConfigError("StftConfig: all sizes must be positive");
  }
  if (hop > win_len || win_len > dft_size) {
    throw ConfigError("StftConfig: require hop <= win_len <= dft_size (got hop " +
                      std::to_string(hop) + ", win " + std::to_string(win_len) +
                      ", dft " + std::to_string(dft_size) + ")");
  }
  if (win_len % hop != 0) {
    throw ConfigError("StftConfig: hop must divide win_len");
  }
  if (dft_size % 2 != 0) {
    throw ConfigError("StftConfig: dft_size must be even");
  }
}

std::size_t StftConfig::num_frames(std::size_t length) const {
  const std::size_t span = length + 2 * static_cast<std::size_t>(padding()) -
                           static_cast<std::size_t>(win_len);
  const auto h = static_cast<std::size_t>(hop);
  return (span + h - 1) / h + 1;
}

std::size_t StftConfig::length_for_frames(std::size_t frames) const {
  if (frames == 0) {
    throw ConfigError("length_for_frames: need at least one frame");
  }
  const std::size_t covered = frames * static_cast<std::size_t>(hop);
  const auto pad = static_cast<std::size_t>(padding());
  if (covered <= pad) {
    throw ConfigError("length_for_frames: too few frames for this config");
  }
  return covered - pad;
}

StftConfig StftConfig::miniature() {
  StftConfig config;
  config.win_len = 16;
  config.hop = 4;
  config.dft_size = 16;
  return config;
}

void Waveform::validate() const {
  if (samples.empty()) {
    throw InputError("Waveform is empty");
  }
  for (double v : samples) {
    if (!std::isfinite(v)) {
      throw InputError("Waveform contains non-finite samples");
    }
  }
}

WindowPair make_windows(const StftConfig& config) {
  config.validate();
  const auto win = static_cast<std::size_t>(config.win_len);
  const auto hop = static_cast<std::size_t>(config.hop);
  WindowPair pair;
  pair.analysis.resize(win);
  pair.synthesis.resize(win);
  for (std::size_t n = 0; n < win; ++n) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                             static_cast<double>(win));
    pair.analysis[n] = std::sqrt(std::max(hann, 0.0));
  }
  // Per-offset energy of the overlapping analysis windows.
  std::vector<double> energy(hop, 0.0);
  for (std::size_t n = 0; n < win; ++n) {
    energy[n % hop] += pair.analysis[n] * pair.analysis[n];
  }
  for (std::size_t n = 0; n < win; ++n) {
    pair.synthesis[n] = pair.analysis[n] / std::max(energy[n % hop], 1e-12);
  }
  return pair;
}

StftOperator::StftOperator(const StftConfig& config, std::size_t length)
    : config_(config), length_(length) {
  config_.validate();
  if (length == 0) {
    throw InputError("StftOperator: signal length must be positive");
  }
  windows_ = make_windows(config_);
  frames_ = config_.num_frames(length);
  dft_ = detail::RealDft::get(config_.dft_size, config_.dft_method);
}

void StftOperator::check_sizes(std::span<const double> signal,
                               std::span<const double> spectrum) const {
  if (signal.size() != length_ || spectrum.size() != spectrum_size()) {
    throw InputError("StftOperator: buffer sizes do not match the operator");
  }
}

void StftOperator::analyze(std::span<const double> signal,
                           std::span<double> spectrum) const {
  check_sizes(signal, spectrum);
  const int n_dft = config_.dft_size;
  const int win = config_.win_len;
  const long pad = config_.padding();
  const std::size_t nbins = bins();
  std::vector<double> frame(static_cast<std::size_t>(n_dft), 0.0);
  auto* out = reinterpret_cast<std::complex<double>*>(spectrum.data());
  for (std::size_t t = 0; t < frames_; ++t) {
    const long start = static_cast<long>(t) * config_.hop - pad;
    for (int n = 0; n < win; ++n) {
      const long i = start + n;
      frame[n] = (i >= 0 && i < static_cast<long>(length_))
                     ? windows_.analysis[n] * signal[static_cast<std::size_t>(i)]
                     : 0.0;
    }
    dft_->forward(frame.data(), out + t * nbins);
  }
}

void StftOperator::analyze_adjoint(std::span<const double> spectrum,
                                   std::span<double> signal) const {
  check_sizes(signal, spectrum);
  const int n_dft = config_.dft_size;
  const int half = n_dft / 2;
  const int win = config_.win_len;
  const long pad = config_.padding();
  const std::size_t nbins = bins();
  std::fill(signal.begin(), signal.end(), 0.0);
  std::vector<std::complex<double>> half_spec(nbins);
  std::vector<double> frame(static_cast<std::size_t>(n_dft));
  const auto* in = reinterpret_cast<const std::complex<double>*>(spectrum.data());
  for (std::size_t t = 0; t < frames_; ++t) {
    // Re sum_k G_k e^{+i...} over the kept bins, written as a c2r call: the
    // c2r doubles interior bins, so they are halved first. DC and Nyquist
    // imaginary parts contribute nothing to the real part.
    for (std::size_t k = 0; k < nbins; ++k) {
      const bool edge = k == 0 || static_cast<int>(k) == half;
      half_spec[k] = edge ? std::complex<double>(in[t * nbins + k].real(), 0.0)
                          : 0.5 * in[t * nbins + k];
    }
    dft_->backward(half_spec.data(), frame.data());
    const long start = static_cast<long>(t) * config_.hop - pad;
    for (int n = 0; n < win; ++n) {
      const long i = start + n;
      if (i >= 0 && i < static_cast<long>(length_)) {
        signal[static_cast<std::size_t>(i)] += windows_.analysis[n] * frame[n];
      }
    }
  }
}

void StftOperator::synthesize(std::span<const double> spectrum,
                              std::span<double> signal) const {
  check_sizes(signal, spectrum);
  const int n_dft = config_.dft_size;
  const int win = config_.win_len;
  const long pad = config_.padding();
  const std::size_t nbins = bins();
  const double scale = 1.0 / n_dft;
  std::fill(signal.begin(), signal.end(), 0.0);
  std::vector<double> frame(static_cast<std::size_t>(n_dft));
  const auto* in = reinterpret_cast<const std::complex<double>*>(spectrum.data());
  for (std::size_t t = 0; t < frames_; ++t) {
    dft_->backward(in + t * nbins, frame.data());
    const long start = static_cast<long>(t) * config_.hop - pad;
    for (int n = 0; n < win; ++n) {
      const long i = start + n;
      if (i >= 0 && i < static_cast<long>(length_)) {
        signal[static_cast<std::size_t>(i)] +=
            scale * windows_.synthesis[n] * frame[n];
      }
    }
  }
}

void StftOperator::synthesize_adjoint(std::span<const double> signal,
                                      std::span<double> spectrum) const {
  check_sizes(signal, spectrum);
  const int n_dft = config_.dft_size;
  const int half = n_dft / 2;
  const int win = config_.win_len;
  const long pad = config_.padding();
  const std::size_t nbins = bins();
  const double scale = 1.0 / n_dft;
  std::vector<double> frame(static_cast<std::size_t>(n_dft), 0.0);
  auto* out = reinterpret_cast<std::complex<double>*>(spectrum.data());
  for (std::size_t t = 0; t < frames_; ++t) {
    const long start = static_cast<long>(t) * config_.hop - pad;
    for (int n = 0; n < win; ++n) {
      const long i = start + n;
      frame[n] = (i >= 0 && i < static_cast<long>(length_))
                     ? windows_.synthesis[n] * signal[static_cast<std::size_t>(i)]
                     : 0.0;
    }
    std::complex<double>* bins_out = out + t * nbins;
    dft_->forward(frame.data(), bins_out);
    for (std::size_t k = 0; k < nbins; ++k) {
      const bool edge = k == 0 || static_cast<int>(k) == half;
      bins_out[k] = edge ? std::complex<double>(scale * bins_out[k].real(), 0.0)
                         : 2.0 * scale * bins_out[k];
    }
  }
}

ComplexSpectrogram stft(const Waveform& signal, const StftConfig& config) {
  signal.validate();
  if (signal.sample_rate != config.sample_rate) {
    throw InputError("stft: waveform sample rate " +
                     std::to_string(signal.sample_rate) +
                     " does not match config " +
                     std::to_string(config.sample_rate));
  }
  const StftOperator op(config, signal.size());
  ComplexSpectrogram out;
  out.config = config;
  out.original_length = signal.size();
  out.data.resize(static_cast<Eigen::Index>(op.frames()),
                  static_cast<Eigen::Index>(op.bins()));
  op.analyze(signal.samples,
             std::span<double>(reinterpret_cast<double*>(out.data.data()),
                               op.spectrum_size()));
  return out;
}

Waveform istft(const ComplexSpectrogram& spectrogram) {
  if (!spectrogram.original_length) {
    throw InputError("istft: spectrogram has no original_length");
  }
  const StftOperator op(spectrogram.config, *spectrogram.original_length);
  if (spectrogram.frames() != op.frames() || spectrogram.bins() != op.bins()) {
    throw InputError("istft: spectrogram shape does not match its config");
  }
  Waveform out;
  out.sample_rate = spectrogram.config.sample_rate;
  out.samples.resize(op.length());
  op.synthesize(
      std::span<const double>(
          reinterpret_cast<const double*>(spectrogram.data.data()),
          op.spectrum_size()),
      out.samples);
  return out;
}

RealMatrix magnitude(const ComplexSpectrogram& spectrogram) {
  return spectrogram.data.abs();
}

RealMatrix phase(const ComplexSpectrogram& spectrogram) {
  return spectrogram.data.unaryExpr(
      [](const std::complex<double>& z) { return std::arg(z); });
}

ComplexSpectrogram from_polar(const RealMatrix& magnitude,
                              const RealMatrix& phase, const StftConfig& config,
                              std::optional<std::size_t> original_length) {
  if (magnitude.rows() != phase.rows() || magnitude.cols() != phase.cols()) {
    throw InputError("from_polar: magnitude and phase shapes differ");
  }
  ComplexSpectrogram out;
  out.config = config;
  out.original_length = original_length;
  out.data.resize(magnitude.rows(), magnitude.cols());
  for (Eigen::Index i = 0; i < magnitude.size(); ++i) {
    out.data(i) = std::polar(magnitude(i), phase(i));
  }
  return out;
}

}  // namespace unfoldsep
