// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "unfoldsep/autodiff.hpp"
#include "unfoldsep/dsp.hpp"

namespace unfoldsep {

/// TF x D embeddings with unit-norm rows.
class EmbeddingMatrix {
 public:
  /// Throws InputError unless every row has norm 1 within 1e-9.
  explicit EmbeddingMatrix(Eigen::MatrixXd v);
  /// Normalizes each row; rows of norm zero are rejected.
  static EmbeddingMatrix normalized(Eigen::MatrixXd v);

  const Eigen::MatrixXd& matrix() const { return v_; }
  Eigen::Index dim() const { return v_.cols(); }

 private:
  Eigen::MatrixXd v_;
};

/// TF x C one-hot source assignments.
class LabelMatrix {
 public:
  /// Throws InputError unless every row is one-hot.
  explicit LabelMatrix(Eigen::MatrixXd y);
  /// Dominant-source labels: row t*F + f marks argmax_c |S_c(t, f)|.
  static LabelMatrix from_sources(std::span<const ComplexSpectrogram> sources);

  const Eigen::MatrixXd& matrix() const { return y_; }

 private:
  Eigen::MatrixXd y_;
};

struct LossConfig {
  double alpha = 0.975;  // chimera weight on the deep clustering term
  double gamma = 1.0;    // PSM truncation
  int misi_iterations = 0;
  int sources = 2;

  void validate() const;
};

inline constexpr double kWhiteningRidge = 1e-8;
inline constexpr double kPhaseFloor = 1e-8;

/// ||V V^T - Y Y^T||_F^2 through the D x D / D x C / C x C expansion.
double loss_dc_classic(const EmbeddingMatrix& v, const LabelMatrix& y);
/// D - tr((V^T V + rI)^-1 V^T Y (Y^T Y + rI)^-1 Y^T V).
double loss_dc_whitened(const EmbeddingMatrix& v, const LabelMatrix& y,
                        double ridge = kWhiteningRidge);

/// All permutations of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> permutations(int n);

/// Permutation-free combination of a C x C table of pairwise losses, where
/// pairwise[e * C + r] compares estimate e with reference r: the minimum over
/// permutations p of sum_r pairwise[p[r] * C + r]. Ties go to the earliest
/// permutation in lexicographic order.
ad::Var permutation_min(std::span<const ad::Var> pairwise, int sources);

/// Truncated phase-sensitive spectrum approximation:
/// min_p sum_c || M_p(c) |X| - clamp(|S_c| cos(angle S_c - angle X), 0, gamma |X|) ||_1.
ad::Var loss_tpsa(std::span<const ad::Var> masks, const ComplexSpectrogram& mixture,
                  std::span<const ComplexSpectrogram> sources, double gamma);

/// alpha * whitened DC + (1 - alpha) * tPSA. With alpha == 0 the embedding
/// term is skipped entirely and `embeddings` may be empty.
ad::Var loss_chimera(double alpha, ad::Var embeddings, const LabelMatrix& labels,
                     std::span<const ad::Var> masks, const ComplexSpectrogram& mixture,
                     std::span<const ComplexSpectrogram> sources, double gamma);

/// Signals obtained by iSTFT of the masked magnitudes with the mixture phase,
/// followed by `iterations` unfolded MISI steps. One T x F mask per source.
std::vector<ad::Var> unfolded_misi(std::span<const ad::Var> masks,
                                   const Waveform& mixture_wave,
                                   const ComplexSpectrogram& mixture, int iterations,
                                   double eps = kPhaseFloor);

/// Waveform approximation: min_p sum_c || s_hat_p(c) - s_c ||_1 with s_hat
/// the mixture-phase reconstructions.
ad::Var loss_wa(std::span<const ad::Var> masks, const ComplexSpectrogram& mixture,
                std::span<const Waveform> sources, double eps = kPhaseFloor);

/// Waveform approximation after K unfolded MISI iterations; K = 0 is loss_wa.
ad::Var loss_wa_misi(std::span<const ad::Var> masks, const Waveform& mixture_wave,
                     const ComplexSpectrogram& mixture,
                     std::span<const Waveform> sources, int iterations,
                     double eps = kPhaseFloor);

}  // namespace unfoldsep
