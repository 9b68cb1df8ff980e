// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/phase_recon.hpp"

#include <cmath>
#include <string>

#include "unfoldsep/errors.hpp"

namespace unfoldsep {
namespace {

void check_shape(const RealMatrix& a, const RealMatrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InputError(std::string(who) + ": shape mismatch");
  }
}

void check_expected_shape(const RealMatrix& m, const StftConfig& config,
                          std::size_t length, const char* who) {
  if (static_cast<std::size_t>(m.rows()) != config.num_frames(length) ||
      m.cols() != config.num_bins()) {
    throw InputError(std::string(who) + ": magnitude shape does not match the "
                                        "STFT of the signal length");
  }
}

}  // namespace

MisiState::MisiState(const Waveform& mixture, std::vector<RealMatrix> magnitudes,
                     const RealMatrix& init_phase, const StftConfig& config)
    : mixture_(mixture), magnitudes_(std::move(magnitudes)), config_(config) {
  phases_.assign(magnitudes_.size(), init_phase);
  initialize();
}

MisiState::MisiState(const Waveform& mixture, std::vector<RealMatrix> magnitudes,
                     std::vector<RealMatrix> init_phases, const StftConfig& config)
    : mixture_(mixture),
      magnitudes_(std::move(magnitudes)),
      phases_(std::move(init_phases)),
      config_(config) {
  initialize();
}

void MisiState::initialize() {
  mixture_.validate();
  config_.validate();
  if (magnitudes_.empty()) {
    throw InputError("misi: no source magnitudes");
  }
  if (phases_.size() != magnitudes_.size()) {
    throw InputError("misi: need one initial phase per source");
  }
  for (std::size_t c = 0; c < magnitudes_.size(); ++c) {
    check_expected_shape(magnitudes_[c], config_, mixture_.size(), "misi");
    check_shape(magnitudes_[c], phases_[c], "misi");
    if ((magnitudes_[c] < 0.0).any()) {
      throw InputError("misi: negative magnitude");
    }
  }
  synthesize_all();
}

void MisiState::synthesize_all() {
  signals_.clear();
  for (std::size_t c = 0; c < magnitudes_.size(); ++c) {
    Waveform s = istft(from_polar(magnitudes_[c], phases_[c], config_, mixture_.size()));
    if (s.size() != mixture_.size()) {
      throw InputError("misi: iSTFT length differs from the mixture");
    }
    signals_.push_back(std::move(s));
  }
}

std::vector<double> MisiState::residual() const {
  std::vector<double> delta = mixture_.samples;
  for (const auto& s : signals_) {
    for (std::size_t n = 0; n < delta.size(); ++n) delta[n] -= s.samples[n];
  }
  return delta;
}

double MisiState::residual_norm() const {
  double ss = 0.0;
  for (double v : residual()) ss += v * v;
  return std::sqrt(ss);
}

void MisiState::step() {
  const std::vector<double> delta = residual();
  const double share = 1.0 / static_cast<double>(signals_.size());
  for (std::size_t c = 0; c < signals_.size(); ++c) {
    Waveform corrected = signals_[c];
    for (std::size_t n = 0; n < delta.size(); ++n) corrected.samples[n] += share * delta[n];
    phases_[c] = phase(stft(corrected, config_));
  }
  synthesize_all();
  ++iteration_;
}

MisiResult misi(const Waveform& mixture, std::span<const RealMatrix> magnitudes,
                const RealMatrix& init_phase, const StftConfig& config, int iterations,
                const MisiObserver& observer) {
  if (iterations < 0) {
    throw ConfigError("misi: negative iteration count");
  }
  MisiState state(mixture, std::vector<RealMatrix>(magnitudes.begin(), magnitudes.end()),
                  init_phase, config);
  if (observer) observer(0, state.signals());
  for (int i = 1; i <= iterations; ++i) {
    state.step();
    if (observer) observer(i, state.signals());
  }
  return {state.signals(), state.phases()};
}

GriffinLimResult griffin_lim(const RealMatrix& magnitude, const RealMatrix& init_phase,
                             const StftConfig& config, std::size_t length, int iterations) {
  if (iterations < 0) {
    throw ConfigError("griffin_lim: negative iteration count");
  }
  check_shape(magnitude, init_phase, "griffin_lim");
  check_expected_shape(magnitude, config, length, "griffin_lim");
  if ((magnitude < 0.0).any()) {
    throw InputError("griffin_lim: negative magnitude");
  }
  GriffinLimResult out;
  out.phase = init_phase;
  out.signal = istft(from_polar(magnitude, out.phase, config, length));
  for (int i = 0; i < iterations; ++i) {
    out.phase = phase(stft(out.signal, config));
    out.signal = istft(from_polar(magnitude, out.phase, config, length));
  }
  return out;
}

double inconsistency(const RealMatrix& magnitude, const RealMatrix& phase_in,
                     const StftConfig& config, std::size_t length) {
  check_shape(magnitude, phase_in, "inconsistency");
  check_expected_shape(magnitude, config, length, "inconsistency");
  const double norm = std::sqrt(magnitude.square().sum());
  if (norm == 0.0) {
    return 0.0;
  }
  const ComplexSpectrogram spec = from_polar(magnitude, phase_in, config, length);
  const ComplexSpectrogram projected = stft(istft(spec), config);
  return std::sqrt((spec.data - projected.data).abs2().sum()) / norm;
}

}  // namespace unfoldsep
