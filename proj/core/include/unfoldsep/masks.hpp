// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unfoldsep/dsp.hpp"

namespace unfoldsep {

/// Floor applied to every division by a mixture magnitude or a sum of
/// source magnitudes.
inline constexpr double kMagnitudeFloor = 1e-12;

enum class MaskKind { kIbm, kMrm, kIam, kPsmTruncated, kEstimated };

struct MaskSet {
  std::vector<RealMatrix> masks;
  MaskKind kind = MaskKind::kEstimated;

  std::size_t size() const { return masks.size(); }
};

/// Output non-linearity of the mask-inference head.
enum class Activation {
  kSigmoid,         // [0, 1]
  kDoubledSigmoid,  // 2 * sigmoid, (0, 2)
  kClippedRelu,     // clamp(z, 0, 2)
  kConvexSoftmax,   // softmax over 3 logits dotted with (0, 1, 2)
};

/// Logits consumed per T-F unit: 3 for the convex softmax, 1 otherwise.
int logit_arity(Activation kind);
/// Upper bound of the activation's range: 1 for sigmoid, 2 for the rest.
double activation_max(Activation kind);
/// PSM truncation paired with the activation (gamma = activation_max).
double default_gamma(Activation kind);

/// Short names used on the command line: sigmoid, dsig, crelu, csoftmax.
std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view name);

double sigmoid(double z);
/// Softmax of three logits, shifted by the max for stability.
std::array<double, 3> softmax3(double a, double b, double c);

/// Applies the activation to a flat logit buffer. For kConvexSoftmax every
/// consecutive triple produces one output; the size must be a multiple of 3.
std::vector<double> activate(std::span<const double> logits, Activation kind);

/// 1 where a source has the largest magnitude (ties go to the lowest index).
MaskSet ideal_binary_mask(std::span<const ComplexSpectrogram> sources);
/// |S_c| / sum_c' |S_c'|, or 1/C where the sum is below the floor.
MaskSet magnitude_ratio_mask(std::span<const ComplexSpectrogram> sources);
/// |S| / max(|X|, floor). Unbounded above.
RealMatrix ideal_amplitude_mask(const ComplexSpectrogram& source,
                                const ComplexSpectrogram& mixture);
/// clamp(|S| cos(angle S - angle X) / max(|X|, floor), 0, gamma).
RealMatrix phase_sensitive_mask(const ComplexSpectrogram& source,
                                const ComplexSpectrogram& mixture, double gamma);

MaskSet ideal_amplitude_masks(std::span<const ComplexSpectrogram> sources,
                              const ComplexSpectrogram& mixture);
MaskSet phase_sensitive_masks(std::span<const ComplexSpectrogram> sources,
                              const ComplexSpectrogram& mixture, double gamma);

/// Estimated magnitude mask * |X|. Rejects negative mask entries.
RealMatrix apply_mask(const RealMatrix& mask, const RealMatrix& mixture_magnitude);

}  // namespace unfoldsep
