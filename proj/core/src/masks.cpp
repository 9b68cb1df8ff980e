// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/masks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unfoldsep/errors.hpp"

namespace unfoldsep {
namespace {

void check_sources(std::span<const ComplexSpectrogram> sources,
                   std::string_view who) {
  if (sources.size() < 2) {
    throw InputError(std::string(who) + ": need at least two sources");
  }
  for (const auto& s : sources) {
    if (s.data.rows() != sources[0].data.rows() ||
        s.data.cols() != sources[0].data.cols()) {
      throw InputError(std::string(who) + ": source shapes differ");
    }
  }
}

void check_same_shape(const ComplexSpectrogram& a, const ComplexSpectrogram& b,
                      std::string_view who) {
  if (a.data.rows() != b.data.rows() || a.data.cols() != b.data.cols()) {
    throw InputError(std::string(who) + ": source and mixture shapes differ");
  }
}

}  // namespace

int logit_arity(Activation kind) {
  return kind == Activation::kConvexSoftmax ? 3 : 1;
}

double activation_max(Activation kind) {
  return kind == Activation::kSigmoid ? 1.0 : 2.0;
}

double default_gamma(Activation kind) { return activation_max(kind); }

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kDoubledSigmoid:
      return "dsig";
    case Activation::kClippedRelu:
      return "crelu";
    case Activation::kConvexSoftmax:
      return "csoftmax";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "dsig") return Activation::kDoubledSigmoid;
  if (name == "crelu") return Activation::kClippedRelu;
  if (name == "csoftmax") return Activation::kConvexSoftmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::array<double, 3> softmax3(double a, double b, double c) {
  const double m = std::max({a, b, c});
  const double ea = std::exp(a - m);
  const double eb = std::exp(b - m);
  const double ec = std::exp(c - m);
  const double total = ea + eb + ec;
  return {ea / total, eb / total, ec / total};
}

std::vector<double> activate(std::span<const double> logits, Activation kind) {
  const auto arity = static_cast<std::size_t>(logit_arity(kind));
  if (logits.size() % arity != 0) {
    throw InputError("activate: logit count is not a multiple of the arity");
  }
  std::vector<double> out(logits.size() / arity);
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case Activation::kSigmoid:
        out[i] = sigmoid(logits[i]);
        break;
      case Activation::kDoubledSigmoid:
        out[i] = 2.0 * sigmoid(logits[i]);
        break;
      case Activation::kClippedRelu:
        out[i] = std::clamp(logits[i], 0.0, 2.0);
        break;
      case Activation::kConvexSoftmax: {
        const auto p = softmax3(logits[3 * i], logits[3 * i + 1], logits[3 * i + 2]);
        out[i] = p[1] + 2.0 * p[2];
        break;
      }
    }
  }
  return out;
}

MaskSet ideal_binary_mask(std::span<const ComplexSpectrogram> sources) {
  check_sources(sources, "ideal_binary_mask");
  const auto rows = sources[0].data.rows();
  const auto cols = sources[0].data.cols();
  MaskSet out;
  out.kind = MaskKind::kIbm;
  out.masks.assign(sources.size(), RealMatrix::Zero(rows, cols));
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    std::size_t best = 0;
    double best_mag = std::abs(sources[0].data(i));
    for (std::size_t c = 1; c < sources.size(); ++c) {
      const double mag = std::abs(sources[c].data(i));
      if (mag > best_mag) {
        best = c;
        best_mag = mag;
      }
    }
    out.masks[best](i) = 1.0;
  }
  return out;
}

MaskSet magnitude_ratio_mask(std::span<const ComplexSpectrogram> sources) {
  check_sources(sources, "magnitude_ratio_mask");
  const auto rows = sources[0].data.rows();
  const auto cols = sources[0].data.cols();
  RealMatrix total = RealMatrix::Zero(rows, cols);
  for (const auto& s : sources) {
    total += s.data.abs();
  }
  const double uniform = 1.0 / static_cast<double>(sources.size());
  MaskSet out;
  out.kind = MaskKind::kMrm;
  for (const auto& s : sources) {
    RealMatrix mask = (total < kMagnitudeFloor)
                          .select(RealMatrix::Constant(rows, cols, uniform),
                                  s.data.abs() / total.max(kMagnitudeFloor));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

RealMatrix ideal_amplitude_mask(const ComplexSpectrogram& source,
                                const ComplexSpectrogram& mixture) {
  check_same_shape(source, mixture, "ideal_amplitude_mask");
  return source.data.abs() / mixture.data.abs().max(kMagnitudeFloor);
}

RealMatrix phase_sensitive_mask(const ComplexSpectrogram& source,
                                const ComplexSpectrogram& mixture, double gamma) {
  if (!(gamma > 0.0)) {
    throw ConfigError("phase_sensitive_mask: gamma must be positive");
  }
  check_same_shape(source, mixture, "phase_sensitive_mask");
  RealMatrix out(source.data.rows(), source.data.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const std::complex<double> s = source.data(i);
    const std::complex<double> x = mixture.data(i);
    const double projected = std::abs(s) * std::cos(std::arg(s) - std::arg(x));
    out(i) = std::clamp(projected / std::max(std::abs(x), kMagnitudeFloor), 0.0,
                        gamma);
  }
  return out;
}

MaskSet ideal_amplitude_masks(std::span<const ComplexSpectrogram> sources,
                              const ComplexSpectrogram& mixture) {
  MaskSet out;
  out.kind = MaskKind::kIam;
  for (const auto& s : sources) {
    out.masks.push_back(ideal_amplitude_mask(s, mixture));
  }
  return out;
}

MaskSet phase_sensitive_masks(std::span<const ComplexSpectrogram> sources,
                              const ComplexSpectrogram& mixture, double gamma) {
  MaskSet out;
  out.kind = MaskKind::kPsmTruncated;
  for (const auto& s : sources) {
    out.masks.push_back(phase_sensitive_mask(s, mixture, gamma));
  }
  return out;
}

RealMatrix apply_mask(const RealMatrix& mask, const RealMatrix& mixture_magnitude) {
  if (mask.rows() != mixture_magnitude.rows() ||
      mask.cols() != mixture_magnitude.cols()) {
    throw InputError("apply_mask: mask and magnitude shapes differ");
  }
  if ((mask < 0.0).any()) {
    throw InputError("apply_mask: mask has negative entries");
  }
  return mask * mixture_magnitude;
}

}  // namespace unfoldsep
