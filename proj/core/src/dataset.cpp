// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "unfoldsep/errors.hpp"
#include "unfoldsep/wav.hpp"

namespace unfoldsep {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// One synthetic talker whose fundamental stays inside [lo, hi].
std::vector<double> talker(std::mt19937_64& rng, std::size_t n, int fs, double lo, double hi,
                           double noise_level) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> step(0.0, 0.03);
  const double log_lo = std::log(lo);
  const double log_hi = std::log(hi);

  // Fundamental: random walk in log frequency at a 10 ms control rate.
  const std::size_t hop = static_cast<std::size_t>(fs / 100);
  const std::size_t controls = n / hop + 2;
  std::vector<double> log_f0(controls);
  log_f0[0] = log_lo + (log_hi - log_lo) * unit(rng);
  for (std::size_t i = 1; i < controls; ++i) {
    double v = log_f0[i - 1] + step(rng);
    if (v < log_lo) v = 2 * log_lo - v;
    if (v > log_hi) v = 2 * log_hi - v;
    log_f0[i] = std::clamp(v, log_lo, log_hi);
  }

  const int harmonics = 3 + static_cast<int>(unit(rng) * 6.0);  // 3..8
  const double decay = 0.5 + 0.35 * unit(rng);
  std::vector<double> amps(static_cast<std::size_t>(harmonics));
  for (int h = 0; h < harmonics; ++h) {
    amps[static_cast<std::size_t>(h)] = std::pow(decay, h) * (0.5 + 0.5 * unit(rng));
  }
  const double am_rate = 2.0 + 4.0 * unit(rng);
  const double am_phase = 2.0 * std::numbers::pi * unit(rng);

  std::vector<double> out(n, 0.0);
  double phi = 2.0 * std::numbers::pi * unit(rng);
  const double nyquist = 0.5 * fs;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t k = t / hop;
    const double frac = static_cast<double>(t % hop) / static_cast<double>(hop);
    const double f0 = std::exp(log_f0[k] + frac * (log_f0[k + 1] - log_f0[k]));
    phi += 2.0 * std::numbers::pi * f0 / fs;
    if (phi > 2.0 * std::numbers::pi) phi -= 2.0 * std::numbers::pi;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      if ((h + 1) * f0 >= nyquist) break;
      v += amps[static_cast<std::size_t>(h)] * std::sin((h + 1) * phi);
    }
    const double time = static_cast<double>(t) / fs;
    const double env =
        0.05 + 0.95 * std::pow(0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * am_rate * time +
                                                    am_phase),
                               1.5);
    out[t] = env * v;
  }

  const double level = noise_level * rms(out);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : out) v += level * noise(rng);
  return out;
}

std::string wav_name(const std::string& id, const std::string& suffix) {
  return id + "_" + suffix + ".wav";
}

}  // namespace

void DatasetConfig::validate() const {
  if (sample_rate <= 0 || sources < 1 || sources > 4) {
    throw ConfigError("DatasetConfig: sample_rate > 0 and 1 <= sources <= 4 required");
  }
  if (!(min_seconds > 0.0 && max_seconds >= min_seconds)) {
    throw ConfigError("DatasetConfig: need 0 < min_seconds <= max_seconds");
  }
  if (!(min_f0 > 0.0 && max_f0 > min_f0 && max_f0 * 3 < 0.5 * sample_rate)) {
    throw ConfigError("DatasetConfig: invalid fundamental range");
  }
  if (gain_range_db < 0.0 || noise_level < 0.0 || !(peak > 0.0 && peak < 1.0)) {
    throw ConfigError("DatasetConfig: invalid gain, noise or peak");
  }
}

SeparationBatch gen_mixture(std::string id, std::uint64_t seed, const DatasetConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double seconds =
      config.min_seconds + (config.max_seconds - config.min_seconds) * unit(rng);
  const auto n = static_cast<std::size_t>(std::lround(seconds * config.sample_rate));

  SeparationBatch batch;
  batch.id = std::move(id);
  batch.seed = seed;
  // Talkers get disjoint, log-spaced fundamental bands.
  const double ratio = std::pow(config.max_f0 / config.min_f0, 1.0 / config.sources);
  std::vector<std::vector<double>> raw;
  for (int c = 0; c < config.sources; ++c) {
    const double lo = config.min_f0 * std::pow(ratio, c);
    raw.push_back(talker(rng, n, config.sample_rate, lo, lo * ratio, config.noise_level));
  }
  for (int c = 0; c < config.sources; ++c) {
    const double gain_db =
        c == 0 ? 0.0 : config.gain_range_db * (2.0 * unit(rng) - 1.0);
    batch.gains_db.push_back(gain_db);
    const double g = std::pow(10.0, gain_db / 20.0) / rms(raw[static_cast<std::size_t>(c)]);
    for (double& v : raw[static_cast<std::size_t>(c)]) v *= g;
  }
  batch.snr_offset_db = config.sources > 1 ? batch.gains_db[1] : 0.0;

  double peak = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    for (const auto& s : raw) sum += s[t];
    peak = std::max(peak, std::abs(sum));
  }
  const double scale = peak > 0.0 ? config.peak / peak : 1.0;

  batch.mixture.sample_rate = config.sample_rate;
  batch.mixture.samples.assign(n, 0.0);
  for (auto& s : raw) {
    for (double& v : s) v *= scale;
    if (config.quantize) quantize_pcm16(s);
    for (std::size_t t = 0; t < n; ++t) batch.mixture.samples[t] += s[t];
    batch.sources.push_back(Waveform{std::move(s), config.sample_rate});
  }
  return batch;
}

std::vector<SeparationBatch> gen_dataset(std::size_t n, std::uint64_t seed,
                                         const DatasetConfig& config) {
  if (n == 0) {
    throw InputError("gen_dataset: n must be positive");
  }
  std::vector<SeparationBatch> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "mix%05zu", i);
    out.push_back(gen_mixture(id, splitmix64(seed ^ splitmix64(i)), config));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, std::span<const SeparationBatch> batches,
                   std::uint64_t dataset_seed) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kManifestName);
  if (!manifest) {
    throw InputError("cannot write " + (dir / kManifestName).string());
  }
  for (const auto& b : batches) {
    nlohmann::ordered_json record;
    record["id"] = b.id;
    record["mixture"] = wav_name(b.id, "mix");
    write_wav(dir / wav_name(b.id, "mix"), b.mixture);
    auto& sources = record["sources"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < b.sources.size(); ++c) {
      const std::string name = wav_name(b.id, "s" + std::to_string(c + 1));
      write_wav(dir / name, b.sources[c]);
      sources.push_back(name);
    }
    record["gains_db"] = b.gains_db;
    record["snr_offset_db"] = b.snr_offset_db;
    record["seed"] = b.seed;
    record["dataset_seed"] = dataset_seed;
    record["samples"] = b.mixture.size();
    record["sample_rate"] = b.mixture.sample_rate;
    manifest << record.dump() << '\n';
  }
}

std::vector<SeparationBatch> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / kManifestName);
  if (!manifest) {
    throw InputError("no " + std::string(kManifestName) + " in " + dir.string());
  }
  std::vector<SeparationBatch> out;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      SeparationBatch b;
      b.id = record.at("id").get<std::string>();
      b.mixture = read_wav(dir / record.at("mixture").get<std::string>());
      for (const auto& name : record.at("sources")) {
        b.sources.push_back(read_wav(dir / name.get<std::string>()));
      }
      b.gains_db = record.at("gains_db").get<std::vector<double>>();
      b.snr_offset_db = record.at("snr_offset_db").get<double>();
      b.seed = record.at("seed").get<std::uint64_t>();
      out.push_back(std::move(b));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(dir.string() + "/" + kManifestName + ":" + std::to_string(line_no) +
                       ": " + e.what());
    }
  }
  if (out.empty()) {
    throw InputError("empty dataset in " + dir.string());
  }
  return out;
}

}  // namespace unfoldsep
