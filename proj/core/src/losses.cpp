// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/losses.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "unfoldsep/errors.hpp"
#include "unfoldsep/masks.hpp"

namespace unfoldsep {
namespace {

constexpr int kMaxSources = 4;

void check_source_count(std::size_t count) {
  if (count == 0) {
    throw InputError("loss: no sources");
  }
  if (count > static_cast<std::size_t>(kMaxSources)) {
    throw InputError("loss: permutation enumeration supports at most 4 sources");
  }
}

std::vector<double> flatten(const RealMatrix& m) {
  return {m.data(), m.data() + m.size()};
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(Eigen::MatrixXd v) : v_(std::move(v)) {
  for (Eigen::Index r = 0; r < v_.rows(); ++r) {
    if (std::abs(v_.row(r).norm() - 1.0) > 1e-9) {
      throw InputError("EmbeddingMatrix: row " + std::to_string(r) + " is not unit-norm");
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::normalized(Eigen::MatrixXd v) {
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double norm = v.row(r).norm();
    if (norm == 0.0) {
      throw InputError("EmbeddingMatrix: zero row cannot be normalized");
    }
    v.row(r) /= norm;
  }
  return EmbeddingMatrix(std::move(v));
}

LabelMatrix::LabelMatrix(Eigen::MatrixXd y) : y_(std::move(y)) {
  for (Eigen::Index r = 0; r < y_.rows(); ++r) {
    int ones = 0;
    for (Eigen::Index c = 0; c < y_.cols(); ++c) {
      const double e = y_(r, c);
      if (e != 0.0 && e != 1.0) {
        throw InputError("LabelMatrix: entries must be 0 or 1");
      }
      ones += e == 1.0 ? 1 : 0;
    }
    if (ones != 1) {
      throw InputError("LabelMatrix: row " + std::to_string(r) + " is not one-hot");
    }
  }
}

LabelMatrix LabelMatrix::from_sources(std::span<const ComplexSpectrogram> sources) {
  const MaskSet ibm = ideal_binary_mask(sources);
  const Eigen::Index units = ibm.masks[0].size();
  Eigen::MatrixXd y(units, static_cast<Eigen::Index>(sources.size()));
  for (std::size_t c = 0; c < sources.size(); ++c) {
    for (Eigen::Index i = 0; i < units; ++i) {
      y(i, static_cast<Eigen::Index>(c)) = ibm.masks[c](i);
    }
  }
  return LabelMatrix(std::move(y));
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("LossConfig: alpha outside [0, 1]");
  if (!(gamma > 0.0)) throw ConfigError("LossConfig: gamma must be positive");
  if (misi_iterations < 0) throw ConfigError("LossConfig: negative MISI iteration count");
  if (sources < 1 || sources > kMaxSources) throw ConfigError("LossConfig: sources must be 1..4");
}

double loss_dc_classic(const EmbeddingMatrix& v, const LabelMatrix& y) {
  if (v.matrix().rows() != y.matrix().rows()) {
    throw InputError("loss_dc_classic: embedding and label row counts differ");
  }
  const Eigen::MatrixXd& vm = v.matrix();
  const Eigen::MatrixXd& ym = y.matrix();
  return (vm.transpose() * vm).squaredNorm() - 2.0 * (vm.transpose() * ym).squaredNorm() +
         (ym.transpose() * ym).squaredNorm();
}

double loss_dc_whitened(const EmbeddingMatrix& v, const LabelMatrix& y, double ridge) {
  if (v.matrix().rows() != y.matrix().rows()) {
    throw InputError("loss_dc_whitened: embedding and label row counts differ");
  }
  const Eigen::MatrixXd& vm = v.matrix();
  const Eigen::MatrixXd& ym = y.matrix();
  const auto d = vm.cols();
  const auto c = ym.cols();
  const Eigen::MatrixXd gram_v = vm.transpose() * vm + ridge * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd gram_y = ym.transpose() * ym + ridge * Eigen::MatrixXd::Identity(c, c);
  const Eigen::MatrixXd vty = vm.transpose() * ym;
  const Eigen::MatrixXd inner = vty * gram_y.ldlt().solve(vty.transpose());
  const double value = static_cast<double>(d) - gram_v.ldlt().solve(inner).trace();
  if (!std::isfinite(value)) {
    throw NumericalError("loss_dc_whitened: non-finite result");
  }
  return value;
}

std::vector<std::vector<int>> permutations(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

ad::Var permutation_min(std::span<const ad::Var> pairwise, int sources) {
  check_source_count(static_cast<std::size_t>(sources));
  if (pairwise.size() != static_cast<std::size_t>(sources * sources)) {
    throw GraphError("permutation_min: expected a C x C table of losses");
  }
  std::vector<ad::Var> totals;
  for (const auto& perm : permutations(sources)) {
    std::vector<ad::Var> terms;
    for (int r = 0; r < sources; ++r) {
      terms.push_back(pairwise[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)] * sources + r)]);
    }
    totals.push_back(ad::add_n(terms));
  }
  return ad::min_of(totals);
}

ad::Var loss_tpsa(std::span<const ad::Var> masks, const ComplexSpectrogram& mixture,
                  std::span<const ComplexSpectrogram> sources, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("loss_tpsa: gamma must be positive");
  check_source_count(sources.size());
  if (masks.size() != sources.size()) {
    throw InputError("loss_tpsa: need one mask per source");
  }
  const RealMatrix mix_mag = magnitude(mixture);
  const std::vector<double> mix_flat = flatten(mix_mag);
  std::vector<std::vector<double>> targets;
  for (const auto& s : sources) {
    if (s.data.rows() != mixture.data.rows() || s.data.cols() != mixture.data.cols()) {
      throw InputError("loss_tpsa: source and mixture shapes differ");
    }
    // clamp(|S| cos(dphi), 0, gamma |X|) = PSM * |X| with PSM clamped to [0, gamma].
    targets.push_back(flatten(apply_mask(phase_sensitive_mask(s, mixture, gamma), mix_mag)));
  }
  const int count = static_cast<int>(sources.size());
  std::vector<ad::Var> estimates;
  for (const auto& m : masks) {
    if (m.shape().numel() != mix_flat.size()) {
      throw InputError("loss_tpsa: mask shape " + m.shape().str() +
                       " does not match the mixture");
    }
    estimates.push_back(ad::mul_const(m, mix_flat));
  }
  std::vector<ad::Var> pairwise;
  for (int e = 0; e < count; ++e) {
    for (int r = 0; r < count; ++r) {
      pairwise.push_back(ad::l1(estimates[static_cast<std::size_t>(e)],
                                targets[static_cast<std::size_t>(r)]));
    }
  }
  return permutation_min(pairwise, count);
}

ad::Var loss_chimera(double alpha, ad::Var embeddings, const LabelMatrix& labels,
                     std::span<const ad::Var> masks, const ComplexSpectrogram& mixture,
                     std::span<const ComplexSpectrogram> sources, double gamma) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("loss_chimera: alpha outside [0, 1]");
  }
  if (alpha == 1.0) {
    return ad::dc_whitened(embeddings, labels.matrix(), kWhiteningRidge);
  }
  ad::Var tpsa = loss_tpsa(masks, mixture, sources, gamma);
  if (alpha == 0.0) {
    return tpsa;
  }
  ad::Var dc = ad::dc_whitened(embeddings, labels.matrix(), kWhiteningRidge);
  return ad::add(ad::scale(dc, alpha), ad::scale(tpsa, 1.0 - alpha));
}

std::vector<ad::Var> unfolded_misi(std::span<const ad::Var> masks,
                                   const Waveform& mixture_wave,
                                   const ComplexSpectrogram& mixture, int iterations,
                                   double eps) {
  if (iterations < 0) throw ConfigError("unfolded_misi: negative iteration count");
  if (masks.empty()) throw InputError("unfolded_misi: no masks");
  if (!mixture.original_length) {
    throw InputError("unfolded_misi: mixture spectrogram has no original_length");
  }
  const std::size_t length = *mixture.original_length;
  if (mixture_wave.size() != length) {
    throw InputError("unfolded_misi: mixture waveform length differs from its STFT");
  }
  ad::Tape& tape = *masks[0].tape();
  const auto op = std::make_shared<const StftOperator>(mixture.config, length);
  const RealMatrix mix_mag = magnitude(mixture);
  const std::vector<double> mix_flat = flatten(mix_mag);
  const std::size_t units = mix_flat.size();

  std::vector<double> spectrum(op->spectrum_size());
  std::copy_n(reinterpret_cast<const double*>(mixture.data.data()), spectrum.size(),
              spectrum.begin());
  const ad::Var mixture_spec =
      tape.constant(ad::Shape::tensor(op->frames(), op->bins(), 2), std::move(spectrum));

  std::vector<ad::Var> magnitudes;
  std::vector<ad::Var> signals;
  for (const auto& m : masks) {
    if (m.shape().numel() != units) {
      throw InputError("unfolded_misi: mask shape " + m.shape().str() +
                       " does not match the mixture");
    }
    ad::Var mag = ad::reshape(ad::mul_const(m, mix_flat),
                              ad::Shape::matrix(op->frames(), op->bins()));
    magnitudes.push_back(mag);
    signals.push_back(ad::istft(ad::polar_reassign(mixture_spec, mag, eps), op));
  }
  if (iterations == 0) {
    return signals;
  }
  const ad::Var x = tape.constant(ad::Shape::vector(length), mixture_wave.samples);
  const double share = 1.0 / static_cast<double>(masks.size());
  for (int i = 0; i < iterations; ++i) {
    const ad::Var residual = ad::sub(x, ad::add_n(signals));
    const ad::Var spread = ad::scale(residual, share);
    for (std::size_t c = 0; c < signals.size(); ++c) {
      const ad::Var spec = ad::stft(ad::add(signals[c], spread), op);
      signals[c] = ad::istft(ad::polar_reassign(spec, magnitudes[c], eps), op);
    }
  }
  return signals;
}

ad::Var loss_wa(std::span<const ad::Var> masks, const ComplexSpectrogram& mixture,
                std::span<const Waveform> sources, double eps) {
  check_source_count(sources.size());
  if (masks.size() != sources.size()) {
    throw InputError("loss_wa: need one mask per source");
  }
  if (!mixture.original_length) {
    throw InputError("loss_wa: mixture spectrogram has no original_length");
  }
  // No MISI iterations: the mixture waveform is never read.
  Waveform placeholder;
  placeholder.samples.assign(*mixture.original_length, 0.0);
  placeholder.sample_rate = mixture.config.sample_rate;
  return loss_wa_misi(masks, placeholder, mixture, sources, 0, eps);
}

ad::Var loss_wa_misi(std::span<const ad::Var> masks, const Waveform& mixture_wave,
                     const ComplexSpectrogram& mixture, std::span<const Waveform> sources,
                     int iterations, double eps) {
  if (iterations < 0) throw ConfigError("loss_wa_misi: negative iteration count");
  check_source_count(sources.size());
  if (masks.size() != sources.size()) {
    throw InputError("loss_wa_misi: need one mask per source");
  }
  for (const auto& s : sources) {
    if (!mixture.original_length || s.size() != *mixture.original_length) {
      throw InputError("loss_wa_misi: reference length differs from the mixture");
    }
  }
  const auto estimates = unfolded_misi(masks, mixture_wave, mixture, iterations, eps);
  const int count = static_cast<int>(sources.size());
  std::vector<ad::Var> pairwise;
  for (int e = 0; e < count; ++e) {
    for (int r = 0; r < count; ++r) {
      pairwise.push_back(ad::l1(estimates[static_cast<std::size_t>(e)],
                                sources[static_cast<std::size_t>(r)].samples));
    }
  }
  return permutation_min(pairwise, count);
}

}  // namespace unfoldsep
