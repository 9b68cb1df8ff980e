// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/separator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "unfoldsep/errors.hpp"
#include "unfoldsep/eval.hpp"
#include "unfoldsep/losses.hpp"
#include "unfoldsep/phase_recon.hpp"

namespace unfoldsep {
namespace {

enum ParamIndex : std::size_t {
  kBody1W,
  kBody1B,
  kBody2W,
  kBody2B,
  kMaskW,
  kMaskB,
  kEmbedW,
  kEmbedB,
  kParamCount
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char ch : salt) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> flatten(const RealMatrix& m) {
  return {m.data(), m.data() + m.size()};
}

}  // namespace

void NetConfig::validate() const {
  stft.validate();
  if (hidden <= 0 || context < 0 || embedding_dim <= 0 || sources < 1 || sources > 4) {
    throw ConfigError("NetConfig: hidden, embedding_dim > 0, context >= 0, 1 <= sources <= 4");
  }
}

MaskerNet::MaskerNet(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto in = static_cast<std::size_t>(config_.input_dim());
  const auto h = static_cast<std::size_t>(config_.hidden);
  const auto mo = static_cast<std::size_t>(config_.mask_outputs());
  const auto eo = static_cast<std::size_t>(config_.embedding_outputs());
  const std::vector<std::pair<std::string, ad::Shape>> layout = {
      {"body1.weight", ad::Shape::matrix(in, h)}, {"body1.bias", ad::Shape::vector(h)},
      {"body2.weight", ad::Shape::matrix(h, h)},  {"body2.bias", ad::Shape::vector(h)},
      {"mask.weight", ad::Shape::matrix(h, mo)},  {"mask.bias", ad::Shape::vector(mo)},
      {"embed.weight", ad::Shape::matrix(h, eo)}, {"embed.bias", ad::Shape::vector(eo)},
  };
  for (const auto& [name, shape] : layout) {
    params_.push_back({name, shape, std::vector<double>(shape.numel(), 0.0)});
  }
}

MaskerNet MaskerNet::initialize(NetConfig config, std::uint64_t seed) {
  MaskerNet net(std::move(config));
  std::mt19937_64 rng(seed);
  for (Parameter& p : net.params_) {
    if (p.shape.rank != 2) continue;  // biases stay zero
    const double limit = std::sqrt(6.0 / static_cast<double>(p.shape.rows() + p.shape.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : p.values) w = dist(rng);
  }
  return net;
}

std::size_t MaskerNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.values.size();
  return n;
}

void MaskerNet::fit_normalizer(std::span<const ComplexSpectrogram> mixtures) {
  const auto bins = static_cast<std::size_t>(config_.bins());
  std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0);
  double frames = 0.0;
  for (const auto& spec : mixtures) {
    if (spec.bins() != bins) {
      throw InputError("fit_normalizer: spectrogram bin count does not match the network");
    }
    for (Eigen::Index t = 0; t < spec.data.rows(); ++t) {
      for (std::size_t f = 0; f < bins; ++f) {
        const double v = std::log(std::abs(spec.data(t, static_cast<Eigen::Index>(f))) +
                                  kLogMagnitudeOffset);
        sum[f] += v;
        sum_sq[f] += v * v;
      }
    }
    frames += static_cast<double>(spec.data.rows());
  }
  if (frames == 0.0) {
    throw InputError("fit_normalizer: no frames");
  }
  std::vector<double> mean(bins), scale(bins);
  for (std::size_t f = 0; f < bins; ++f) {
    mean[f] = sum[f] / frames;
    scale[f] = std::sqrt(std::max(sum_sq[f] / frames - mean[f] * mean[f], 0.0)) + 1e-3;
  }
  set_normalizer(std::move(mean), std::move(scale));
}

void MaskerNet::set_normalizer(std::vector<double> mean, std::vector<double> scale) {
  const auto bins = static_cast<std::size_t>(config_.bins());
  if (!mean.empty() && (mean.size() != bins || scale.size() != bins)) {
    throw InputError("set_normalizer: expected one mean and scale per bin");
  }
  if (mean.size() != scale.size()) {
    throw InputError("set_normalizer: mean and scale sizes differ");
  }
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

RealMatrix MaskerNet::features(const ComplexSpectrogram& mixture) const {
  const auto bins = config_.bins();
  if (mixture.data.cols() != bins) {
    throw InputError("MaskerNet: mixture has " + std::to_string(mixture.data.cols()) +
                     " bins, network expects " + std::to_string(bins));
  }
  const auto frames = mixture.data.rows();
  RealMatrix logmag = (mixture.data.abs() + kLogMagnitudeOffset).log();
  if (!mean_.empty()) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      logmag.col(f) = (logmag.col(f) - mean_[static_cast<std::size_t>(f)]) /
                      scale_[static_cast<std::size_t>(f)];
    }
  }
  const int width = 2 * config_.context + 1;
  RealMatrix out(frames, width * bins);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int o = 0; o < width; ++o) {
      const Eigen::Index src =
          std::clamp<Eigen::Index>(t + o - config_.context, 0, frames - 1);
      out.row(t).segment(o * bins, bins) = logmag.row(src);
    }
  }
  return out;
}

NetOutputs MaskerNet::forward(ad::Tape& tape, const ComplexSpectrogram& mixture,
                              bool with_embeddings) const {
  const RealMatrix feats = features(mixture);
  const auto frames = static_cast<std::size_t>(feats.rows());
  const auto bins = static_cast<std::size_t>(config_.bins());
  NetOutputs out;
  for (const Parameter& p : params_) {
    out.parameters.push_back(tape.parameter(p.shape, p.values));
  }
  const auto& w = out.parameters;
  const ad::Var x =
      tape.constant(ad::Shape::matrix(frames, static_cast<std::size_t>(feats.cols())),
                    flatten(feats));
  const ad::Var h1 = ad::tanh(ad::add_row_bias(ad::matmul(x, w[kBody1W]), w[kBody1B]));
  const ad::Var h2 = ad::tanh(ad::add_row_bias(ad::matmul(h1, w[kBody2W]), w[kBody2B]));
  const ad::Var logits = ad::add_row_bias(ad::matmul(h2, w[kMaskW]), w[kMaskB]);

  const auto arity = static_cast<std::size_t>(logit_arity(config_.activation));
  const std::size_t block = bins * arity;
  for (int c = 0; c < config_.sources; ++c) {
    const auto begin = static_cast<std::size_t>(c) * block;
    const ad::Var z = ad::slice_cols(logits, begin, begin + block);
    switch (config_.activation) {
      case Activation::kSigmoid:
        out.masks.push_back(ad::sigmoid(z));
        break;
      case Activation::kDoubledSigmoid:
        out.masks.push_back(ad::scale(ad::sigmoid(z), 2.0));
        break;
      case Activation::kClippedRelu:
        out.masks.push_back(ad::clip(z, 0.0, 2.0));
        break;
      case Activation::kConvexSoftmax:
        out.masks.push_back(ad::convex_combine3(ad::softmax3(z)));
        break;
    }
  }
  if (with_embeddings) {
    const ad::Var e = ad::sigmoid(ad::add_row_bias(ad::matmul(h2, w[kEmbedW]), w[kEmbedB]));
    out.embeddings = ad::normalize_rows(ad::reshape(
        e, ad::Shape::matrix(frames * bins, static_cast<std::size_t>(config_.embedding_dim))));
  }
  return out;
}

std::vector<RealMatrix> MaskerNet::infer_masks(const ComplexSpectrogram& mixture) const {
  ad::Tape tape;
  const NetOutputs out = forward(tape, mixture, false);
  std::vector<RealMatrix> masks;
  for (const ad::Var& m : out.masks) {
    const auto v = m.value();
    RealMatrix mask(mixture.data.rows(), mixture.data.cols());
    std::copy(v.begin(), v.end(), mask.data());
    masks.push_back(std::move(mask));
  }
  return masks;
}

Eigen::MatrixXd MaskerNet::infer_embeddings(const ComplexSpectrogram& mixture) const {
  ad::Tape tape;
  const NetOutputs out = forward(tape, mixture, true);
  const auto rows = static_cast<Eigen::Index>(out.embeddings.shape().rows());
  const auto cols = static_cast<Eigen::Index>(out.embeddings.shape().cols());
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out.embeddings.value().data(), rows, cols);
}

std::string Stage::name() const {
  switch (objective) {
    case Objective::kChimera:
      return "chimera";
    case Objective::kTpsa:
      return "tpsa";
    case Objective::kWa:
      return "wa";
    case Objective::kWaMisi:
      return "wa-misi-" + std::to_string(misi_iterations);
  }
  return "unknown";
}

Stage Stage::parse(std::string_view name) {
  if (name == "chimera") return {Objective::kChimera, 0};
  if (name == "tpsa") return {Objective::kTpsa, 0};
  if (name == "wa") return {Objective::kWa, 0};
  constexpr std::string_view prefix = "wa-misi-";
  if (name.substr(0, prefix.size()) == prefix) {
    const std::string digits(name.substr(prefix.size()));
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(),
                                       [](char ch) { return ch >= '0' && ch <= '9'; })) {
      const int k = std::stoi(digits);
      if (k >= 1) return {Objective::kWaMisi, k};
    }
  }
  throw ConfigError("unknown stage '" + std::string(name) +
                    "' (expected chimera, tpsa, wa or wa-misi-K with K >= 1)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
      !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw ConfigError("TrainConfig: invalid Adam hyper-parameters");
  }
  if (segment_frames <= 0 || batch_size <= 0) {
    throw ConfigError("TrainConfig: segment_frames and batch_size must be positive");
  }
  if (chimera_epochs < 0 || tpsa_epochs < 0 || wa_epochs < 0 || misi_epochs < 0 || max_misi < 0) {
    throw ConfigError("TrainConfig: epoch counts must be non-negative");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("TrainConfig: alpha outside [0, 1]");
  }
  if (gamma < 0.0) {
    throw ConfigError("TrainConfig: gamma must be positive (or 0 for the default)");
  }
}

int TrainConfig::epochs_for(const Stage& stage) const {
  switch (stage.objective) {
    case Objective::kChimera:
      return chimera_epochs;
    case Objective::kTpsa:
      return tpsa_epochs;
    case Objective::kWa:
      return wa_epochs;
    case Objective::kWaMisi:
      return misi_epochs;
  }
  return 0;
}

double TrainConfig::gamma_for(Activation activation) const {
  return gamma > 0.0 ? gamma : default_gamma(activation);
}

ad::Var stage_objective(ad::Tape& tape, const MaskerNet& net, const Stage& stage,
                        const SeparationBatch& segment, const TrainConfig& config,
                        NetOutputs* outputs) {
  const NetConfig& nc = net.config();
  if (segment.sources.size() != static_cast<std::size_t>(nc.sources)) {
    throw InputError("stage_objective: segment has " + std::to_string(segment.sources.size()) +
                     " sources, network expects " + std::to_string(nc.sources));
  }
  const ComplexSpectrogram mixture = stft(segment.mixture, nc.stft);
  const bool chimera = stage.objective == Objective::kChimera;
  NetOutputs out = net.forward(tape, mixture, chimera && config.alpha > 0.0);
  const double count = static_cast<double>(nc.sources);
  const double gamma = config.gamma_for(nc.activation);

  ad::Var loss;
  double elements = 0.0;
  if (chimera || stage.objective == Objective::kTpsa) {
    std::vector<ComplexSpectrogram> sources;
    for (const auto& s : segment.sources) sources.push_back(stft(s, nc.stft));
    elements = count * static_cast<double>(mixture.data.size());
    if (chimera) {
      const LabelMatrix labels = LabelMatrix::from_sources(sources);
      loss = loss_chimera(config.alpha, out.embeddings, labels, out.masks, mixture, sources,
                          gamma);
    } else {
      loss = loss_tpsa(out.masks, mixture, sources, gamma);
    }
  } else {
    elements = count * static_cast<double>(segment.mixture.size());
    const int k = stage.objective == Objective::kWaMisi ? stage.misi_iterations : 0;
    loss = loss_wa_misi(out.masks, segment.mixture, mixture, segment.sources, k);
  }
  if (outputs != nullptr) {
    *outputs = std::move(out);
  }
  return ad::scale(loss, 1.0 / elements);
}

std::vector<SeparationBatch> make_segments(std::span<const SeparationBatch> data,
                                           const StftConfig& stft, int segment_frames) {
  const std::size_t length = stft.length_for_frames(static_cast<std::size_t>(segment_frames));
  std::vector<SeparationBatch> out;
  for (const auto& batch : data) {
    const std::size_t n = batch.mixture.size();
    if (n < length) {
      out.push_back(batch);
      out.back().id = batch.id + ":0";
      continue;
    }
    for (std::size_t k = 0; (k + 1) * length <= n; ++k) {
      SeparationBatch seg;
      seg.id = batch.id + ":" + std::to_string(k);
      seg.seed = batch.seed;
      seg.gains_db = batch.gains_db;
      seg.snr_offset_db = batch.snr_offset_db;
      const auto cut = [&](const Waveform& w) {
        Waveform piece;
        piece.sample_rate = w.sample_rate;
        piece.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(k * length),
                             w.samples.begin() + static_cast<std::ptrdiff_t>((k + 1) * length));
        return piece;
      };
      seg.mixture = cut(batch.mixture);
      for (const auto& s : batch.sources) seg.sources.push_back(cut(s));
      out.push_back(std::move(seg));
    }
  }
  return out;
}

StageResult train_stage(MaskerNet& net, std::span<const SeparationBatch> train,
                        std::span<const SeparationBatch> validation, const Stage& stage,
                        const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  const std::vector<SeparationBatch> segments =
      make_segments(train, net.config().stft, config.segment_frames);
  if (segments.empty()) {
    throw InputError("train_stage: empty training set");
  }
  if (net.feature_mean().empty()) {
    std::vector<ComplexSpectrogram> specs;
    for (const auto& seg : segments) specs.push_back(stft(seg.mixture, net.config().stft));
    net.fit_normalizer(specs);
  }

  auto& params = net.parameters();
  std::vector<std::vector<double>> first(params.size()), second(params.size()),
      grads(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    first[p].assign(params[p].values.size(), 0.0);
    second[p].assign(params[p].values.size(), 0.0);
    grads[p].assign(params[p].values.size(), 0.0);
  }

  std::mt19937_64 rng(mix_seed(config.seed, stage.name()));
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  long step = 0;

  StageResult result{stage, {}};
  const int epochs = config.epochs_for(stage);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(start + batch, order.size());
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        ad::Tape tape;
        NetOutputs out;
        const ad::Var loss = stage_objective(tape, net, stage, segments[order[i]], config, &out);
        if (!std::isfinite(loss.item())) {
          throw TrainingError("stage " + stage.name() + ", epoch " + std::to_string(epoch) +
                              ", segment " + segments[order[i]].id + ": non-finite loss");
        }
        total += loss.item();
        tape.backward(loss);
        for (std::size_t p = 0; p < params.size(); ++p) {
          const auto g = out.parameters[p].grad();
          for (std::size_t j = 0; j < g.size(); ++j) grads[p][j] += g[j];
        }
      }
      ++step;
      const double inv = 1.0 / static_cast<double>(end - start);
      const double correct1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double correct2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& values = params[p].values;
        for (std::size_t j = 0; j < values.size(); ++j) {
          const double g = grads[p][j] * inv;
          first[p][j] = config.beta1 * first[p][j] + (1.0 - config.beta1) * g;
          second[p][j] = config.beta2 * second[p][j] + (1.0 - config.beta2) * g * g;
          const double m_hat = first[p][j] / correct1;
          const double v_hat = second[p][j] / correct2;
          values[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.stage = stage.name();
    record.train_loss = total / static_cast<double>(segments.size());
    record.val_sisdr = validation.empty()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : mean_sisdr(net, validation, stage.eval_iterations());
    result.curve.push_back(record);
    if (progress) progress(record);
  }
  return result;
}

std::vector<Stage> curriculum_stages(int max_misi) {
  std::vector<Stage> stages{{Objective::kChimera, 0}, {Objective::kWa, 0}};
  for (int k = 1; k <= max_misi; ++k) stages.push_back({Objective::kWaMisi, k});
  return stages;
}

std::vector<Checkpoint> curriculum(MaskerNet net, std::span<const SeparationBatch> train,
                                   std::span<const SeparationBatch> validation,
                                   const TrainConfig& config,
                                   const std::filesystem::path& out_dir,
                                   const ProgressFn& progress) {
  std::vector<Checkpoint> checkpoints;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (const Stage& stage : curriculum_stages(config.max_misi)) {
    StageResult result = train_stage(net, train, validation, stage, config, progress);
    if (!out_dir.empty()) {
      save_checkpoint(out_dir / (stage.name() + ".ckpt"), net, stage.name());
      write_loss_curve_csv(out_dir / (stage.name() + "_loss.csv"), result.curve);
    }
    checkpoints.push_back({stage.name(), net, std::move(result.curve)});
  }
  return checkpoints;
}

std::vector<Waveform> separate(const MaskerNet& net, const Waveform& mixture,
                               int eval_iterations) {
  const StftConfig& config = net.config().stft;
  const ComplexSpectrogram spec = stft(mixture, config);
  const RealMatrix mix_mag = magnitude(spec);
  std::vector<RealMatrix> magnitudes;
  for (const RealMatrix& mask : net.infer_masks(spec)) {
    magnitudes.push_back(apply_mask(mask, mix_mag));
  }
  return misi(mixture, magnitudes, phase(spec), config, eval_iterations).signals;
}

double mean_sisdr(const MaskerNet& net, std::span<const SeparationBatch> data,
                  int eval_iterations) {
  if (data.empty()) {
    throw InputError("mean_sisdr: empty dataset");
  }
  double total = 0.0;
  for (const auto& batch : data) {
    total += eval_pair(separate(net, batch.mixture, eval_iterations), batch.sources).mean_db;
  }
  return total / static_cast<double>(data.size());
}

void write_loss_curve_csv(const std::filesystem::path& path,
                          std::span<const EpochRecord> curve) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write " + path.string());
  }
  out << "epoch,stage,train_loss,val_sisdr\n";
  out << std::setprecision(17);
  for (const auto& r : curve) {
    out << r.epoch << ',' << r.stage << ',' << r.train_loss << ',' << r.val_sisdr << '\n';
  }
}

}  // namespace unfoldsep
