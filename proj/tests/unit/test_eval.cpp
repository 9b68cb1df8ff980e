// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "unfoldsep/dataset.hpp"
#include "unfoldsep/errors.hpp"
#include "unfoldsep/eval.hpp"
#include "unfoldsep/losses.hpp"
#include "unfoldsep/separator.hpp"

namespace unfoldsep {
namespace {

Waveform wave(std::vector<double> v) { return Waveform{std::move(v), 8000}; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(SiSdr, CapAndScaleInvariance) {
  std::mt19937_64 rng(1);
  const auto ref = oracle::random_signal(rng, 1000);
  EXPECT_EQ(si_sdr(ref, ref), kSiSdrCapDb);
  std::vector<double> twice = ref;
  for (double& v : twice) v *= 2.0;
  EXPECT_EQ(si_sdr(twice, ref), kSiSdrCapDb);

  auto est = ref;
  const auto noise = oracle::random_signal(rng, 1000, 0.3);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += noise[i];
  const double base = si_sdr(est, ref);
  for (double a : {1e-3, 0.5, 3.0, 1e4}) {
    std::vector<double> scaled = est;
    for (double& v : scaled) v *= a;
    EXPECT_NEAR(si_sdr(scaled, ref), base, 1e-9);
  }
}

TEST(SiSdr, OrthogonalNoiseAtTenDecibels) {
  std::mt19937_64 rng(2);
  const auto ref = oracle::random_signal(rng, 4000);
  auto n = oracle::random_signal(rng, 4000);
  double rr = 0.0, rn = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rr += ref[i] * ref[i];
    rn += ref[i] * n[i];
  }
  for (std::size_t i = 0; i < n.size(); ++i) n[i] -= rn / rr * ref[i];  // Gram-Schmidt
  for (double v : n) nn += v * v;
  const double g = std::sqrt(rr / 10.0 / nn);
  std::vector<double> est = ref;
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += g * n[i];
  EXPECT_NEAR(si_sdr(est, ref), 10.0, 1e-9);
}

TEST(SiSdr, ErrorsAndFloor) {
  EXPECT_THROW(si_sdr(std::vector<double>{1, 2}, std::vector<double>{0, 0}), InputError);
  EXPECT_THROW(si_sdr(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), InputError);
  EXPECT_EQ(si_sdr(std::vector<double>{0, 0}, std::vector<double>{1, 2}), -kSiSdrCapDb);
}

TEST(EvalPair, SwapAndSingleSource) {
  std::mt19937_64 rng(3);
  const std::vector<Waveform> refs{wave(oracle::random_signal(rng, 500)),
                                   wave(oracle::random_signal(rng, 500))};
  std::vector<Waveform> est = refs;
  for (auto& e : est) {
    const auto n = oracle::random_signal(rng, 500, 0.2);
    for (std::size_t i = 0; i < 500; ++i) e.samples[i] += n[i];
  }
  const PairScore straight = eval_pair(est, refs);
  const std::vector<Waveform> swapped{est[1], est[0]};
  const PairScore crossed = eval_pair(swapped, refs);
  EXPECT_EQ(crossed.mean_db, straight.mean_db);
  EXPECT_EQ(straight.permutation, (std::vector<int>{0, 1}));
  EXPECT_EQ(crossed.permutation, (std::vector<int>{1, 0}));

  const std::vector<Waveform> one_est{est[0]}, one_ref{refs[0]};
  EXPECT_EQ(eval_pair(one_est, one_ref).mean_db, si_sdr(est[0], refs[0]));
  EXPECT_THROW(eval_pair(one_est, refs), InputError);
}

TEST(EvalPair, MaxPropertyAndJointPermutationInvariance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Waveform> refs, est;
    for (int c = 0; c < 3; ++c) {
      refs.push_back(wave(oracle::random_signal(rng, 300)));
      est.push_back(wave(oracle::random_signal(rng, 300)));
    }
    const PairScore best = eval_pair(est, refs);
    for (const auto& perm : permutations(3)) {
      double mean = 0.0;
      for (int r = 0; r < 3; ++r) mean += si_sdr(est[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])], refs[static_cast<std::size_t>(r)]) / 3.0;
      EXPECT_GE(best.mean_db, mean - 1e-12);
    }
    const std::vector<Waveform> est_rot{est[2], est[0], est[1]};
    const std::vector<Waveform> ref_rot{refs[2], refs[0], refs[1]};
    EXPECT_NEAR(eval_pair(est_rot, ref_rot).mean_db, best.mean_db, 1e-12);
  }
}

TEST(Report, SummaryCsvAndHash) {
  const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
  const ReportRow row = summarize("iam", 5, s);
  EXPECT_DOUBLE_EQ(row.mean_db, 2.5);
  EXPECT_DOUBLE_EQ(row.std_db, std::sqrt(1.25));
  EXPECT_EQ(row.n, 4u);
  ExperimentReport report;
  report.rows = {row};
  std::ostringstream out;
  write_report_csv(out, report);
  EXPECT_EQ(out.str(), "name,eval_k,mean_sisdr_db,std_db,n\niam,5,2.500000,1.118034,4\n");
  EXPECT_EQ(report.find("iam", 5), &report.rows[0]);
  EXPECT_EQ(report.find("iam", 4), nullptr);
  // FNV-1a reference values.
  EXPECT_EQ(config_hash(""), "cbf29ce484222325");
  EXPECT_EQ(config_hash("a"), "af63dc4c8601ec8c");
}

TEST(OracleMaskNames, RoundTrip) {
  for (OracleMask k : {OracleMask::kIbm, OracleMask::kMrm, OracleMask::kIam, OracleMask::kPsm}) {
    EXPECT_EQ(parse_oracle_mask(to_string(k)), k);
  }
  EXPECT_THROW(parse_oracle_mask("irm"), ConfigError);
}

TEST(Dataset, ExactSumsAndConfiguredRanges) {
  const auto data = gen_dataset(12, 5);
  ASSERT_EQ(data.size(), 12u);
  EXPECT_EQ(data[0].id, "mix00000");
  EXPECT_EQ(data[11].id, "mix00011");
  for (const auto& b : data) {
    ASSERT_EQ(b.sources.size(), 2u);
    const double seconds = static_cast<double>(b.mixture.size()) / 8000.0;
    EXPECT_GE(seconds, 2.0);
    EXPECT_LE(seconds, 4.0);
    EXPECT_EQ(b.gains_db[0], 0.0);
    EXPECT_LE(std::abs(b.gains_db[1]), 2.5);
    EXPECT_EQ(b.snr_offset_db, b.gains_db[1]);
    for (std::size_t i = 0; i < b.mixture.size(); ++i) {
      ASSERT_EQ(b.sources[0].samples[i] + b.sources[1].samples[i], b.mixture.samples[i]);
      ASSERT_LT(std::abs(b.mixture.samples[i]), 1.0);
    }
  }
}

TEST(Dataset, SeedDeterminismAndPrefixStability) {
  const auto a = gen_dataset(4, 9);
  const auto b = gen_dataset(4, 9);
  const auto longer = gen_dataset(6, 9);
  const auto other = gen_dataset(4, 10);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].mixture.samples, b[i].mixture.samples);
    EXPECT_EQ(a[i].mixture.samples, longer[i].mixture.samples);
    EXPECT_NE(a[i].mixture.samples, other[i].mixture.samples);
  }
  EXPECT_THROW(gen_dataset(0, 1), InputError);
}

TEST(Dataset, MixtureIsNearZeroDecibelsForEachSource) {
  const auto data = gen_dataset(40, 11);
  double mean = 0.0;
  for (const auto& b : data) mean += si_sdr(b.mixture, b.sources[0]) / 40.0;
  EXPECT_LT(std::abs(mean), 1.5);
}

TEST(Dataset, WriteReadRoundTripIsExactAndStable) {
  const auto dir = std::filesystem::temp_directory_path() / "unfoldsep_dataset_test";
  std::filesystem::remove_all(dir);
  const auto data = gen_dataset(3, 77);
  write_dataset(dir / "a", data, 77);
  write_dataset(dir / "b", data, 77);
  EXPECT_EQ(slurp(dir / "a" / kManifestName), slurp(dir / "b" / kManifestName));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "mix00002_s2.wav"));
  const auto back = read_dataset(dir / "a");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, data[i].id);
    EXPECT_EQ(back[i].seed, data[i].seed);
    EXPECT_EQ(back[i].gains_db, data[i].gains_db);
    EXPECT_EQ(back[i].mixture.samples, data[i].mixture.samples);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(back[i].sources[c].samples, data[i].sources[c].samples);
    }
  }
  EXPECT_THROW(read_dataset(dir / "missing"), InputError);
}

TEST(Experiments, ReportShapes) {
  const auto data = gen_dataset(2, 3);
  const std::vector<OracleMask> kinds{OracleMask::kIbm, OracleMask::kPsm};
  const std::vector<int> ks{0, 2};
  const auto report = oracle_experiment(data, kinds, ks);
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[0].name, "ibm");
  EXPECT_EQ(report.rows[1].eval_k, 2);
  EXPECT_EQ(report.rows[3].name, "psm");
  EXPECT_EQ(report.rows[3].n, 2u);

  NetConfig nc;
  nc.hidden = 8;
  const MaskerNet a = MaskerNet::initialize(nc, 1);
  const MaskerNet b = MaskerNet::initialize(nc, 2);
  const std::vector<NamedModel> models{{"a", &a}, {"b", &b}};
  const auto sweep = misi_sweep(models, data, 5);
  EXPECT_EQ(sweep.rows.size(), 12u);
  EXPECT_EQ(sweep.rows[6].name, "b");
  EXPECT_EQ(sweep.rows[6].eval_k, 0);
  // Eval K = 0 in the sweep is exactly separate(net, x, 0).
  double k0 = 0.0;
  for (const auto& batch : data) k0 += eval_pair(separate(a, batch.mixture, 0), batch.sources).mean_db / 2.0;
  EXPECT_NEAR(sweep.rows[0].mean_db, k0, 1e-12);
}

}  // namespace
}  // namespace unfoldsep
