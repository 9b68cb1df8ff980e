// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "unfoldsep/dsp.hpp"

namespace unfoldsep {

inline constexpr int kDefaultMisiIterations = 5;

/// Iteration state of multiple-input spectrogram inversion.
///
/// Construction performs the initialization step (iSTFT of each fixed
/// magnitude with its initial phase); every step() distributes the mixture
/// residual equally over the sources, re-estimates each source phase from the
/// STFT of the corrected signal and resynthesizes with the fixed magnitude.
class MisiState {
 public:
  /// All sources start from the same phase (normally the mixture phase).
  MisiState(const Waveform& mixture, std::vector<RealMatrix> magnitudes,
            const RealMatrix& init_phase, const StftConfig& config);
  /// One initial phase per source.
  MisiState(const Waveform& mixture, std::vector<RealMatrix> magnitudes,
            std::vector<RealMatrix> init_phases, const StftConfig& config);

  void step();

  int iteration() const { return iteration_; }
  std::size_t num_sources() const { return magnitudes_.size(); }
  const std::vector<Waveform>& signals() const { return signals_; }
  const std::vector<RealMatrix>& phases() const { return phases_; }
  const std::vector<RealMatrix>& magnitudes() const { return magnitudes_; }
  const Waveform& mixture() const { return mixture_; }
  /// Mixture minus the sum of the current signals.
  std::vector<double> residual() const;
  /// L2 norm of residual().
  double residual_norm() const;

 private:
  void initialize();
  void synthesize_all();

  Waveform mixture_;
  std::vector<RealMatrix> magnitudes_;
  std::vector<RealMatrix> phases_;
  std::vector<Waveform> signals_;
  StftConfig config_;
  int iteration_ = 0;
};

struct MisiResult {
  std::vector<Waveform> signals;
  std::vector<RealMatrix> phases;
};

/// Called with the iteration index (0 = initialization) and the signals.
using MisiObserver = std::function<void(int iteration, const std::vector<Waveform>& signals)>;

/// Runs `iterations` MISI steps and returns the final signals and phases.
MisiResult misi(const Waveform& mixture, std::span<const RealMatrix> magnitudes,
                const RealMatrix& init_phase, const StftConfig& config,
                int iterations = kDefaultMisiIterations,
                const MisiObserver& observer = nullptr);

struct GriffinLimResult {
  Waveform signal;
  RealMatrix phase;
};

/// Single-source iterative phase reconstruction without a mixture
/// constraint: s = iSTFT(A, theta); theta = angle STFT(s).
GriffinLimResult griffin_lim(const RealMatrix& magnitude, const RealMatrix& init_phase,
                             const StftConfig& config, std::size_t length,
                             int iterations);

/// ||A e^{j theta} - STFT(iSTFT(A e^{j theta}))||_F / ||A||_F; 0 for A = 0.
double inconsistency(const RealMatrix& magnitude, const RealMatrix& phase,
                     const StftConfig& config, std::size_t length);

}  // namespace unfoldsep
