// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unfoldsep/dataset.hpp"
#include "unfoldsep/dsp.hpp"
#include "unfoldsep/masks.hpp"

namespace unfoldsep {

class MaskerNet;

/// SI-SDR values are clamped to [-cap, +cap]; a perfect estimate scores +cap.
inline constexpr double kSiSdrCapDb = 60.0;

/// Scale-invariant SDR in dB. Throws InputError on length mismatch or an
/// all-zero reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
double si_sdr(const Waveform& estimate, const Waveform& reference);

struct PairScore {
  double mean_db = 0.0;
  /// permutation[r] is the estimate assigned to reference r.
  std::vector<int> permutation;
  std::vector<double> per_source_db;
};

/// Best mean SI-SDR over all assignments of estimates to references (C <= 4).
PairScore eval_pair(std::span<const Waveform> estimates,
                    std::span<const Waveform> references);

struct ReportRow {
  std::string name;
  int eval_k = 0;
  double mean_db = 0.0;
  double std_db = 0.0;
  std::size_t n = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;
  std::size_t dataset_size = 0;
  std::string config_hash;

  /// Row with the given name and eval_k, or nullptr.
  const ReportRow* find(std::string_view name, int eval_k) const;
};

/// Mean and population standard deviation of `scores_db`.
ReportRow summarize(std::string name, int eval_k, std::span<const double> scores_db);

/// Header: name,eval_k,mean_sisdr_db,std_db,n. Values use fixed 6 decimals.
void write_report_csv(std::ostream& out, const ExperimentReport& report);
void write_report_csv(const std::filesystem::path& path, const ExperimentReport& report);
/// Writes seed, dataset size and config hash as JSON next to a report.
void write_report_metadata(const std::filesystem::path& path, const ExperimentReport& report);

/// 64-bit FNV-1a of `text`, as 16 hex digits.
std::string config_hash(std::string_view text);

enum class OracleMask { kIbm, kMrm, kIam, kPsm };
std::string_view to_string(OracleMask kind);
OracleMask parse_oracle_mask(std::string_view name);

/// Oracle masks for a mixture; `psm_gamma` is used by kPsm only.
MaskSet compute_oracle_masks(OracleMask kind, const ComplexSpectrogram& mixture,
                             std::span<const ComplexSpectrogram> sources,
                             double psm_gamma = 2.0);

/// For every mask kind and every K in `k_list`: masked mixture magnitudes,
/// MISI with K iterations from the mixture phase, best-permutation SI-SDR.
/// Rows are named after the mask kind.
ExperimentReport oracle_experiment(std::span<const SeparationBatch> dataset,
                                   std::span<const OracleMask> kinds,
                                   std::span<const int> k_list,
                                   const StftConfig& config = {}, double psm_gamma = 2.0);

struct NamedModel {
  std::string name;
  const MaskerNet* net = nullptr;
};

/// Mean SI-SDR of each model for eval K = 0..max_k: |models| x (max_k + 1)
/// rows.
ExperimentReport misi_sweep(std::span<const NamedModel> models,
                            std::span<const SeparationBatch> dataset, int max_k = 5);

}  // namespace unfoldsep
