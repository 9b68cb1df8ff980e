// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// A small two-headed mask-inference network and its staged trainer.
//
// The body is a context-window MLP over standardized log-magnitude frames:
// each frame sees +-context neighbours, followed by two tanh layers. The
// mask-inference head emits per-unit logits for every source; the deep
// clustering head emits a unit-norm embedding per T-F unit and is only used
// as a regularizer in the chimera stage.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unfoldsep/autodiff.hpp"
#include "unfoldsep/dataset.hpp"
#include "unfoldsep/dsp.hpp"
#include "unfoldsep/masks.hpp"

namespace unfoldsep {

inline constexpr double kLogMagnitudeOffset = 1e-7;

struct NetConfig {
  StftConfig stft;
  int hidden = 128;
  int context = 2;
  int embedding_dim = 8;
  int sources = 2;
  Activation activation = Activation::kSigmoid;

  void validate() const;

  int bins() const { return stft.num_bins(); }
  int input_dim() const { return (2 * context + 1) * bins(); }
  int mask_outputs() const { return sources * bins() * logit_arity(activation); }
  int embedding_outputs() const { return bins() * embedding_dim; }

  bool operator==(const NetConfig&) const = default;
};

struct Parameter {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct NetOutputs {
  /// Leaves holding the parameters, in MaskerNet::parameters() order.
  std::vector<ad::Var> parameters;
  /// One T x F mask per source.
  std::vector<ad::Var> masks;
  /// (T*F) x D unit-norm rows, row t*F + f; empty unless requested.
  ad::Var embeddings;
};

class MaskerNet {
 public:
  MaskerNet() : MaskerNet(NetConfig{}) {}
  /// All weights zero; feature normalizer is the identity.
  explicit MaskerNet(NetConfig config);

  /// Glorot-uniform weights, zero biases.
  static MaskerNet initialize(NetConfig config, std::uint64_t seed);

  const NetConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Per-bin mean and standard deviation of log(|X| + 1e-7) over `mixtures`.
  void fit_normalizer(std::span<const ComplexSpectrogram> mixtures);
  void set_normalizer(std::vector<double> mean, std::vector<double> scale);
  const std::vector<double>& feature_mean() const { return mean_; }
  const std::vector<double>& feature_scale() const { return scale_; }

  /// T x input_dim standardized, context-stacked features (edge frames repeat).
  RealMatrix features(const ComplexSpectrogram& mixture) const;

  NetOutputs forward(ad::Tape& tape, const ComplexSpectrogram& mixture,
                     bool with_embeddings) const;
  /// Forward pass without gradients; one T x F mask per source.
  std::vector<RealMatrix> infer_masks(const ComplexSpectrogram& mixture) const;
  /// Embeddings of the deep clustering head, (T*F) x D.
  Eigen::MatrixXd infer_embeddings(const ComplexSpectrogram& mixture) const;

 private:
  NetConfig config_;
  std::vector<Parameter> params_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

enum class Objective { kChimera, kTpsa, kWa, kWaMisi };

struct Stage {
  Objective objective = Objective::kChimera;
  int misi_iterations = 0;  // kWaMisi only

  /// chimera, tpsa, wa, wa-misi-K
  std::string name() const;
  static Stage parse(std::string_view name);
  /// MISI iterations used when validating this stage.
  int eval_iterations() const { return objective == Objective::kWaMisi ? misi_iterations : 0; }

  bool operator==(const Stage&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int segment_frames = 100;
  int batch_size = 4;
  int chimera_epochs = 20;
  int tpsa_epochs = 20;
  int wa_epochs = 10;
  int misi_epochs = 5;  // per WA-MISI-k stage
  int max_misi = 5;
  double alpha = 0.975;
  double gamma = 0.0;  // 0: pick from the activation (1 sigmoid, 2 otherwise)
  std::uint64_t seed = 0;

  void validate() const;
  int epochs_for(const Stage& stage) const;
  double gamma_for(Activation activation) const;
};

struct EpochRecord {
  int epoch = 0;
  std::string stage;
  double train_loss = 0.0;
  double val_sisdr = 0.0;
};

struct StageResult {
  Stage stage;
  std::vector<EpochRecord> curve;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

/// Per-element training objective of one stage on one segment: the loss
/// divided by the number of compared entries (C*T*F for spectral losses,
/// C*samples for waveform losses).
ad::Var stage_objective(ad::Tape& tape, const MaskerNet& net, const Stage& stage,
                        const SeparationBatch& segment, const TrainConfig& config,
                        NetOutputs* outputs = nullptr);

/// Cuts every mixture into non-overlapping segments of exactly
/// `segment_frames` STFT frames (mixtures that are too short are kept whole).
std::vector<SeparationBatch> make_segments(std::span<const SeparationBatch> data,
                                           const StftConfig& stft, int segment_frames);

/// Adam over shuffled minibatches for epochs_for(stage) epochs. Records mean
/// training loss and validation SI-SDR (eval K = stage.eval_iterations())
/// after every epoch. Throws TrainingError on a non-finite loss.
StageResult train_stage(MaskerNet& net, std::span<const SeparationBatch> train,
                        std::span<const SeparationBatch> validation, const Stage& stage,
                        const TrainConfig& config, const ProgressFn& progress = nullptr);

/// chimera, wa, wa-misi-1 .. wa-misi-max_misi.
std::vector<Stage> curriculum_stages(int max_misi);

struct Checkpoint {
  std::string stage;
  MaskerNet net;
  std::vector<EpochRecord> curve;
};

/// Runs the curriculum; each stage starts from the previous stage's weights.
/// When `out_dir` is non-empty every stage is saved there as <stage>.ckpt
/// with its loss curve in <stage>_loss.csv.
std::vector<Checkpoint> curriculum(MaskerNet net, std::span<const SeparationBatch> train,
                                   std::span<const SeparationBatch> validation,
                                   const TrainConfig& config,
                                   const std::filesystem::path& out_dir = {},
                                   const ProgressFn& progress = nullptr);

/// Masks from the network, masked mixture magnitudes, then MISI from the
/// mixture phase with `eval_iterations` iterations.
std::vector<Waveform> separate(const MaskerNet& net, const Waveform& mixture,
                               int eval_iterations);

/// Mean best-permutation SI-SDR of `separate` over a dataset.
double mean_sisdr(const MaskerNet& net, std::span<const SeparationBatch> data,
                  int eval_iterations);

/// CSV with columns epoch,stage,train_loss,val_sisdr.
void write_loss_curve_csv(const std::filesystem::path& path,
                          std::span<const EpochRecord> curve);

/// Versioned binary container: magic, version, JSON header echoing the
/// configuration, then the raw little-endian parameters.
void save_checkpoint(const std::filesystem::path& path, const MaskerNet& net,
                     std::string_view stage);

struct LoadedCheckpoint {
  MaskerNet net;
  std::string stage;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unfoldsep
