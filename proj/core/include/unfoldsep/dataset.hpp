// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "unfoldsep/dsp.hpp"

namespace unfoldsep {

/// A mixture and its reference sources; the mixture is the exact sum of the
/// sources.
struct SeparationBatch {
  std::string id;
  Waveform mixture;
  std::vector<Waveform> sources;
  std::vector<double> gains_db;  // per source, relative to source 0
  double snr_offset_db = 0.0;    // gain of source 1 relative to source 0
  std::uint64_t seed = 0;        // per-mixture generator seed
};

/// Synthetic two-talker stand-in: each "speaker" is a harmonic complex with
/// a random-walk fundamental, a syllable-rate amplitude envelope and a little
/// broadband noise.
struct DatasetConfig {
  int sample_rate = 8000;
  int sources = 2;
  double min_seconds = 2.0;
  double max_seconds = 4.0;
  double min_f0 = 80.0;
  double max_f0 = 300.0;
  double gain_range_db = 2.5;  // relative gain drawn from [-range, +range]
  double noise_level = 0.01;   // noise RMS relative to the harmonic part
  double peak = 0.8;           // mixture peak after scaling
  bool quantize = true;        // snap sources to the 16-bit PCM grid

  void validate() const;
};

/// Generates one mixture from its own seed.
SeparationBatch gen_mixture(std::string id, std::uint64_t seed,
                            const DatasetConfig& config = {});

/// Generates n mixtures with ids mix00000, mix00001, ...; mixture i uses a
/// seed derived from (seed, i), so any prefix of the set is stable.
std::vector<SeparationBatch> gen_dataset(std::size_t n, std::uint64_t seed,
                                         const DatasetConfig& config = {});

/// Writes <id>_mix.wav, <id>_s1.wav, ... and manifest.jsonl (one JSON record
/// per mixture) into `dir`.
void write_dataset(const std::filesystem::path& dir,
                   std::span<const SeparationBatch> batches, std::uint64_t dataset_seed);

/// Reads a directory written by write_dataset.
std::vector<SeparationBatch> read_dataset(const std::filesystem::path& dir);

/// Name of the manifest file inside a dataset directory.
inline constexpr const char* kManifestName = "manifest.jsonl";

}  // namespace unfoldsep
