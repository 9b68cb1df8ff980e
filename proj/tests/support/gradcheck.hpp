// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// End-to-end gradient checks of the training objectives with respect to
// every network parameter, shared by the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "unfoldsep/losses.hpp"
#include "unfoldsep/separator.hpp"

namespace oracle {

inline unfoldsep::NetConfig miniature_net(unfoldsep::Activation activation) {
  unfoldsep::NetConfig c;
  c.stft = unfoldsep::StftConfig::miniature();
  c.hidden = 5;
  c.context = 1;
  c.embedding_dim = 3;
  c.sources = 2;
  c.activation = activation;
  return c;
}

inline unfoldsep::SeparationBatch random_segment(std::mt19937_64& rng, std::size_t len) {
  unfoldsep::SeparationBatch b;
  b.id = "grad";
  b.mixture.samples.assign(len, 0.0);
  for (int c = 0; c < 2; ++c) {
    unfoldsep::Waveform s{random_signal(rng, len, 0.5), 8000};
    for (std::size_t i = 0; i < len; ++i) b.mixture.samples[i] += s.samples[i];
    b.sources.push_back(std::move(s));
  }
  return b;
}

// Smallest distance of any L1 residual from its kink at this point; a check
// is meaningful only when this exceeds the FD step by a wide margin. Only
// smooth activations are supported (the clipped ReLU has its own kinks).
inline double kink_margin(const unfoldsep::MaskerNet& net, const unfoldsep::Stage& stage,
                          const unfoldsep::SeparationBatch& seg, double gamma) {
  using namespace unfoldsep;
  const StftConfig& cfg = net.config().stft;
  const ComplexSpectrogram mix = stft(seg.mixture, cfg);
  ad::Tape tape;
  const NetOutputs out = net.forward(tape, mix, false);
  double margin = 1e300;
  if (stage.objective == Objective::kTpsa || stage.objective == Objective::kChimera) {
    const RealMatrix mag = magnitude(mix);
    for (const auto& s : seg.sources) {
      const RealMatrix target = apply_mask(phase_sensitive_mask(stft(s, cfg), mix, gamma), mag);
      for (const auto& m : out.masks) {
        const auto v = m.value();
        for (Eigen::Index i = 0; i < target.size(); ++i) {
          margin = std::min(margin, std::abs(v[static_cast<std::size_t>(i)] * mag(i) - target(i)));
        }
      }
    }
  } else {
    const int k = stage.objective == Objective::kWaMisi ? stage.misi_iterations : 0;
    const auto signals = unfolded_misi(out.masks, seg.mixture, mix, k);
    for (const auto& sig : signals) {
      const auto v = sig.value();
      for (const auto& s : seg.sources) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          margin = std::min(margin, std::abs(v[i] - s.samples[i]));
        }
      }
    }
  }
  return margin;
}

// Relative error between the tape gradient of stage_objective and central
// differences, over the concatenation of all network parameters.
inline double network_gradient_error(const unfoldsep::MaskerNet& net,
                                     const unfoldsep::Stage& stage,
                                     const unfoldsep::SeparationBatch& seg,
                                     const unfoldsep::TrainConfig& config,
                                     double step = 1e-5) {
  using namespace unfoldsep;
  ad::Tape tape;
  NetOutputs out;
  const ad::Var loss = stage_objective(tape, net, stage, seg, config, &out);
  tape.backward(loss);
  std::vector<double> analytic, x0;
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    const auto g = out.parameters[p].grad();
    const auto& values = net.parameters()[p].values;
    if (g.empty()) {
      analytic.insert(analytic.end(), values.size(), 0.0);
    } else {
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
    x0.insert(x0.end(), values.begin(), values.end());
  }
  MaskerNet probe = net;
  const auto numeric = numeric_gradient(
      [&](const std::vector<double>& x) {
        std::size_t offset = 0;
        for (auto& p : probe.parameters()) {
          std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(offset), p.values.size(),
                      p.values.begin());
          offset += p.values.size();
        }
        ad::Tape t;
        return stage_objective(t, probe, stage, seg, config).item();
      },
      x0, step);
  return relative_error(analytic, numeric);
}

// Draws random (network, segment) points until one is at least `margin` away
// from every kink, then returns its gradient error.
inline double random_point_gradient_error(std::mt19937_64& rng, unfoldsep::Activation activation,
                                          const unfoldsep::Stage& stage, double margin = 1e-3) {
  using namespace unfoldsep;
  TrainConfig config;
  config.alpha = 0.0;  // chimera falls back to tPSA; unused for WA stages
  for (int attempt = 0; attempt < 1000; ++attempt) {
    MaskerNet net = MaskerNet::initialize(miniature_net(activation), rng());
    // Non-zero biases so every parameter block is exercised off the origin.
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& p : net.parameters()) {
      if (p.shape.rank == 1) {
        for (double& v : p.values) v = nd(rng);
      }
    }
    const SeparationBatch seg = random_segment(rng, 48);
    std::vector<ComplexSpectrogram> specs{stft(seg.mixture, net.config().stft)};
    net.fit_normalizer(specs);
    if (kink_margin(net, stage, seg, config.gamma_for(activation)) > margin) {
      return network_gradient_error(net, stage, seg, config);
    }
  }
  return 1.0;
}

}  // namespace oracle
