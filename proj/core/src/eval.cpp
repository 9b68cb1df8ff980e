// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "unfoldsep/errors.hpp"
#include "unfoldsep/losses.hpp"
#include "unfoldsep/phase_recon.hpp"
#include "unfoldsep/separator.hpp"

namespace unfoldsep {
namespace {

std::vector<RealMatrix> masked_magnitudes(std::span<const RealMatrix> masks,
                                          const RealMatrix& mixture_magnitude) {
  std::vector<RealMatrix> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(apply_mask(m, mixture_magnitude));
  return out;
}

// Best-permutation SI-SDR after every MISI iteration 0..max_k; entry k of
// the result belongs to iteration k.
std::vector<double> misi_trace(const Waveform& mixture, std::vector<RealMatrix> magnitudes,
                               const RealMatrix& mixture_phase, const StftConfig& config,
                               std::span<const Waveform> references, int max_k) {
  MisiState state(mixture, std::move(magnitudes), mixture_phase, config);
  std::vector<double> scores;
  scores.push_back(eval_pair(state.signals(), references).mean_db);
  for (int k = 1; k <= max_k; ++k) {
    state.step();
    scores.push_back(eval_pair(state.signals(), references).mean_db);
  }
  return scores;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    throw InputError("si_sdr: estimate has " + std::to_string(estimate.size()) +
                     " samples, reference " + std::to_string(reference.size()));
  }
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_energy += reference[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) {
    throw InputError("si_sdr: reference is all zero");
  }
  const double alpha = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = t - estimate[i];
    target += t * t;
    residual += e * e;
  }
  if (residual < 1e-12 * target) return kSiSdrCapDb;
  if (!(target > 0.0)) return -kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kSiSdrCapDb, kSiSdrCapDb);
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  return si_sdr(std::span<const double>(estimate.samples),
                std::span<const double>(reference.samples));
}

PairScore eval_pair(std::span<const Waveform> estimates, std::span<const Waveform> references) {
  const std::size_t c = references.size();
  if (estimates.size() != c) {
    throw InputError("eval_pair: " + std::to_string(estimates.size()) + " estimates for " +
                     std::to_string(c) + " references");
  }
  if (c == 0 || c > 4) {
    throw InputError("eval_pair: between 1 and 4 sources supported");
  }
  std::vector<double> table(c * c);
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t e = 0; e < c; ++e) table[r * c + e] = si_sdr(estimates[e], references[r]);
  }
  PairScore best;
  best.mean_db = -std::numeric_limits<double>::infinity();
  for (const auto& perm : permutations(static_cast<int>(c))) {
    double sum = 0.0;
    for (std::size_t r = 0; r < c; ++r) sum += table[r * c + static_cast<std::size_t>(perm[r])];
    const double mean = sum / static_cast<double>(c);
    if (mean > best.mean_db) {
      best.mean_db = mean;
      best.permutation = perm;
    }
  }
  for (std::size_t r = 0; r < c; ++r) {
    best.per_source_db.push_back(table[r * c + static_cast<std::size_t>(best.permutation[r])]);
  }
  return best;
}

const ReportRow* ExperimentReport::find(std::string_view name, int eval_k) const {
  for (const auto& row : rows) {
    if (row.name == name && row.eval_k == eval_k) return &row;
  }
  return nullptr;
}

ReportRow summarize(std::string name, int eval_k, std::span<const double> scores_db) {
  ReportRow row{std::move(name), eval_k, 0.0, 0.0, scores_db.size()};
  if (scores_db.empty()) return row;
  for (double s : scores_db) row.mean_db += s;
  row.mean_db /= static_cast<double>(scores_db.size());
  double var = 0.0;
  for (double s : scores_db) var += (s - row.mean_db) * (s - row.mean_db);
  row.std_db = std::sqrt(var / static_cast<double>(scores_db.size()));
  return row;
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "name,eval_k,mean_sisdr_db,std_db,n\n";
  for (const auto& row : report.rows) {
    out << row.name << ',' << row.eval_k << ',' << format_fixed(row.mean_db) << ','
        << format_fixed(row.std_db) << ',' << row.n << '\n';
  }
}

void write_report_csv(const std::filesystem::path& path, const ExperimentReport& report) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write " + path.string());
  }
  write_report_csv(out, report);
}

void write_report_metadata(const std::filesystem::path& path, const ExperimentReport& report) {
  nlohmann::ordered_json meta;
  meta["seed"] = report.seed;
  meta["dataset_size"] = report.dataset_size;
  meta["config_hash"] = report.config_hash;
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write " + path.string());
  }
  out << meta.dump(2) << '\n';
}

std::string config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string_view to_string(OracleMask kind) {
  switch (kind) {
    case OracleMask::kIbm:
      return "ibm";
    case OracleMask::kMrm:
      return "mrm";
    case OracleMask::kIam:
      return "iam";
    case OracleMask::kPsm:
      return "psm";
  }
  return "unknown";
}

OracleMask parse_oracle_mask(std::string_view name) {
  for (OracleMask k : {OracleMask::kIbm, OracleMask::kMrm, OracleMask::kIam, OracleMask::kPsm}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown oracle mask '" + std::string(name) +
                    "' (expected ibm, mrm, iam or psm)");
}

MaskSet compute_oracle_masks(OracleMask kind, const ComplexSpectrogram& mixture,
                             std::span<const ComplexSpectrogram> sources, double psm_gamma) {
  switch (kind) {
    case OracleMask::kIbm:
      return ideal_binary_mask(sources);
    case OracleMask::kMrm:
      return magnitude_ratio_mask(sources);
    case OracleMask::kIam:
      return ideal_amplitude_masks(sources, mixture);
    case OracleMask::kPsm:
      return phase_sensitive_masks(sources, mixture, psm_gamma);
  }
  throw ConfigError("unknown oracle mask");
}

ExperimentReport oracle_experiment(std::span<const SeparationBatch> dataset,
                                   std::span<const OracleMask> kinds,
                                   std::span<const int> k_list, const StftConfig& config,
                                   double psm_gamma) {
  if (dataset.empty()) {
    throw InputError("oracle_experiment: empty dataset");
  }
  if (k_list.empty()) {
    throw ConfigError("oracle_experiment: empty K list");
  }
  for (int k : k_list) {
    if (k < 0) throw ConfigError("oracle_experiment: K must be non-negative");
  }
  const int max_k = *std::max_element(k_list.begin(), k_list.end());

  // scores[kind][k] over mixtures, in dataset order.
  std::vector<std::vector<std::vector<double>>> scores(
      kinds.size(), std::vector<std::vector<double>>(static_cast<std::size_t>(max_k) + 1));
  for (const auto& batch : dataset) {
    const ComplexSpectrogram mix = stft(batch.mixture, config);
    std::vector<ComplexSpectrogram> refs;
    for (const auto& s : batch.sources) refs.push_back(stft(s, config));
    const RealMatrix mix_mag = magnitude(mix);
    const RealMatrix mix_phase = phase(mix);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      const MaskSet masks = compute_oracle_masks(kinds[i], mix, refs, psm_gamma);
      const auto trace = misi_trace(batch.mixture, masked_magnitudes(masks.masks, mix_mag),
                                    mix_phase, config, batch.sources, max_k);
      for (int k = 0; k <= max_k; ++k) {
        scores[i][static_cast<std::size_t>(k)].push_back(trace[static_cast<std::size_t>(k)]);
      }
    }
  }

  ExperimentReport report;
  report.dataset_size = dataset.size();
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    for (int k : k_list) {
      report.rows.push_back(summarize(std::string(to_string(kinds[i])), k,
                                      scores[i][static_cast<std::size_t>(k)]));
    }
  }
  return report;
}

ExperimentReport misi_sweep(std::span<const NamedModel> models,
                            std::span<const SeparationBatch> dataset, int max_k) {
  if (dataset.empty()) {
    throw InputError("misi_sweep: empty dataset");
  }
  if (max_k < 0) {
    throw ConfigError("misi_sweep: max_k must be non-negative");
  }
  ExperimentReport report;
  report.dataset_size = dataset.size();
  for (const auto& model : models) {
    if (model.net == nullptr) {
      throw InputError("misi_sweep: model '" + model.name + "' has no network");
    }
    const StftConfig& config = model.net->config().stft;
    std::vector<std::vector<double>> scores(static_cast<std::size_t>(max_k) + 1);
    for (const auto& batch : dataset) {
      const ComplexSpectrogram mix = stft(batch.mixture, config);
      const auto trace =
          misi_trace(batch.mixture, masked_magnitudes(model.net->infer_masks(mix), magnitude(mix)),
                     phase(mix), config, batch.sources, max_k);
      for (int k = 0; k <= max_k; ++k) {
        scores[static_cast<std::size_t>(k)].push_back(trace[static_cast<std::size_t>(k)]);
      }
    }
    for (int k = 0; k <= max_k; ++k) {
      report.rows.push_back(summarize(model.name, k, scores[static_cast<std::size_t>(k)]));
    }
  }
  return report;
}

}  // namespace unfoldsep
