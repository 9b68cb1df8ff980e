// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 7 and 8 train three small networks and dominate
// the runtime (about ten minutes on one core).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "unfoldsep/dataset.hpp"
#include "unfoldsep/dsp.hpp"
#include "unfoldsep/eval.hpp"
#include "unfoldsep/losses.hpp"
#include "unfoldsep/masks.hpp"
#include "unfoldsep/phase_recon.hpp"
#include "unfoldsep/separator.hpp"

namespace fs = std::filesystem;
using namespace unfoldsep;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. istft(stft(x)) == x.
Outcome perfect_reconstruction() {
  const Stopwatch sw;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> seconds(0.5, 4.0);
  const StftConfig config;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto n = static_cast<std::size_t>(seconds(rng) * config.sample_rate);
    const Waveform x{oracle::random_signal(rng, n), config.sample_rate};
    const Waveform y = istft(stft(x, config));
    double err = 0.0, peak = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      err = std::max(err, std::abs(y.samples[t] - x.samples[t]));
      peak = std::max(peak, std::abs(x.samples[t]));
    }
    worst = std::max(worst, err / peak);
  }
  const double t = sw.seconds();
  return {worst < 1e-9 && t < 10.0,
          "max rel Linf " + fmt("%.2e", worst) + " (< 1e-9), " + fmt("%.1f", t) + " s (< 10 s)"};
}

// 2. End-to-end network gradients against central differences.
Outcome gradient_fidelity() {
  const Stopwatch sw;
  std::mt19937_64 rng(2);
  const Activation acts[] = {Activation::kSigmoid, Activation::kConvexSoftmax,
                             Activation::kDoubledSigmoid, Activation::kSigmoid,
                             Activation::kConvexSoftmax};
  double worst = 0.0;
  std::string worst_at;
  for (const char* name : {"tpsa", "wa", "wa-misi-1", "wa-misi-2"}) {
    for (Activation a : acts) {
      const double e = oracle::random_point_gradient_error(rng, a, Stage::parse(name));
      if (e >= worst) {
        worst = e;
        worst_at = name;
      }
    }
  }
  const double t = sw.seconds();
  return {worst < 1e-4 && t < 120.0, "20 points, worst rel err " + fmt("%.2e", worst) + " (" +
                                         worst_at + ", < 1e-4), " + fmt("%.1f", t) +
                                         " s (< 120 s)"};
}

// 3. True magnitudes and phases are a fixed point of MISI.
Outcome misi_fixed_point() {
  const auto data = gen_dataset(5, 33);
  const StftConfig config;
  double change = 0.0, delta = 0.0;
  for (const auto& b : data) {
    std::vector<RealMatrix> mags, phases;
    for (const auto& s : b.sources) {
      const auto spec = stft(s, config);
      mags.push_back(magnitude(spec));
      phases.push_back(phase(spec));
    }
    MisiState state(b.mixture, mags, phases, config);
    delta = std::max(delta, state.residual_norm());
    for (int k = 0; k < 5; ++k) {
      const auto before = state.signals();
      state.step();
      for (std::size_t c = 0; c < before.size(); ++c) {
        double sq = 0.0;
        for (std::size_t i = 0; i < before[c].size(); ++i) {
          const double d = state.signals()[c].samples[i] - before[c].samples[i];
          sq += d * d;
        }
        change = std::max(change, std::sqrt(sq));
      }
      delta = std::max(delta, state.residual_norm());
    }
  }
  return {change < 1e-9 && delta < 1e-9, "5 mixtures x 5 iterations, max change " +
                                             fmt("%.2e", change) + ", max delta " +
                                             fmt("%.2e", delta) + " (< 1e-9)"};
}

// 4. Oracle masks followed by MISI-5.
Outcome oracle_gains() {
  const Stopwatch sw;
  const auto data = gen_dataset(50, 44);
  const OracleMask kinds[] = {OracleMask::kIam, OracleMask::kPsm};
  const int ks[] = {0, 5};
  const ExperimentReport r = oracle_experiment(data, kinds, ks, {}, 2.0);
  const double iam = r.find("iam", 5)->mean_db - r.find("iam", 0)->mean_db;
  const double psm = r.find("psm", 5)->mean_db - r.find("psm", 0)->mean_db;
  const double t = sw.seconds();
  return {iam >= 5.0 && psm >= 1.0 && t < 120.0,
          "IAM " + fmt("%+.2f", iam) + " dB (>= +5), PSM " + fmt("%+.2f", psm) +
              " dB (>= +1), " + fmt("%.1f", t) + " s (< 120 s)"};
}

std::vector<ad::Var> mask_vars(ad::Tape& tape, const std::vector<RealMatrix>& masks) {
  std::vector<ad::Var> out;
  for (const auto& m : masks) {
    out.push_back(tape.constant(ad::Shape::matrix(static_cast<std::size_t>(m.rows()),
                                                  static_cast<std::size_t>(m.cols())),
                                std::vector<double>(m.data(), m.data() + m.size())));
  }
  return out;
}

std::vector<RealMatrix> random_masks(std::mt19937_64& rng, const ComplexSpectrogram& x, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.2);
  std::vector<RealMatrix> out;
  for (int i = 0; i < c; ++i) {
    RealMatrix m(x.frames(), x.bins());
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = u(rng);
    out.push_back(m);
  }
  return out;
}

// Explicit per-assignment tPSA sum for C = 2, estimate perm[r] vs reference r.
double tpsa_assignment(const std::vector<RealMatrix>& masks, const ComplexSpectrogram& x,
                       const std::vector<ComplexSpectrogram>& s, const int perm[2], double gamma) {
  double total = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (Eigen::Index t = 0; t < x.data.rows(); ++t) {
      for (Eigen::Index f = 0; f < x.data.cols(); ++f) {
        const std::complex<double> xv = x.data(t, f), sv = s[static_cast<std::size_t>(r)].data(t, f);
        const double ax = std::abs(xv);
        const double dphi = std::arg(sv) - std::arg(xv);
        const double target = std::clamp(std::abs(sv) * std::cos(dphi), 0.0, gamma * ax);
        total += std::abs(masks[static_cast<std::size_t>(perm[r])](t, f) * ax - target);
      }
    }
  }
  return total;
}

// 5. Loss identities.
Outcome loss_identities() {
  std::mt19937_64 rng(5);
  const StftConfig mini = StftConfig::miniature();

  double wa_gap = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto seg = oracle::random_segment(rng, 40 + 7 * static_cast<std::size_t>(trial));
    const auto x = stft(seg.mixture, mini);
    const auto masks = random_masks(rng, x, 2);
    ad::Tape tape;
    const auto vars = mask_vars(tape, masks);
    const double a = loss_wa_misi(vars, seg.mixture, x, seg.sources, 0).item();
    const double b = loss_wa(vars, x, seg.sources).item();
    wa_gap = std::max(wa_gap, std::abs(a - b));
  }

  double trace_gap = 0.0;
  std::uniform_int_distribution<int> tf_dist(2, 50), c_dist(2, 3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    // The trace form needs V of full column rank, so D <= TF / 2.
    const int c = c_dist(rng), tf = std::max(tf_dist(rng), c);
    const int d = std::uniform_int_distribution<int>(1, std::min(6, tf / 2))(rng);
    Eigen::MatrixXd v(tf, d), y = Eigen::MatrixXd::Zero(tf, c);
    for (int i = 0; i < tf; ++i) {
      for (int j = 0; j < d; ++j) v(i, j) = nd(rng);
      v.row(i).normalize();
      // Every class owns at least one unit so that Y^T Y is invertible.
      y(i, i < c ? i : static_cast<int>(rng() % static_cast<unsigned>(c))) = 1.0;
    }
    // Both forms without the ridge, where they agree exactly.
    const double trace_form = loss_dc_whitened(EmbeddingMatrix(v), LabelMatrix(y), 0.0);
    trace_gap = std::max(trace_gap, std::abs(trace_form - oracle::dc_whitened_explicit(v, y, 0.0)));
  }

  int violations = 0;
  double min_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto seg = oracle::random_segment(rng, 48);
    const auto x = stft(seg.mixture, mini);
    const std::vector<ComplexSpectrogram> s{stft(seg.sources[0], mini), stft(seg.sources[1], mini)};
    const auto masks = random_masks(rng, x, 2);
    ad::Tape tape;
    const double loss = loss_tpsa(mask_vars(tape, masks), x, s, 1.0).item();
    const int id[2] = {0, 1}, sw[2] = {1, 0};
    const double a = tpsa_assignment(masks, x, s, id, 1.0);
    const double b = tpsa_assignment(masks, x, s, sw, 1.0);
    if (loss > a + 1e-12 * a || loss > b + 1e-12 * b) ++violations;
    min_gap = std::max(min_gap, std::abs(loss - std::min(a, b)) / std::min(a, b));
  }

  const bool ok = wa_gap <= 1e-12 && trace_gap <= 1e-8 && violations == 0 && min_gap < 1e-9;
  return {ok, "WA-MISI(0) vs WA " + fmt("%.1e", wa_gap) + " (<= 1e-12), trace vs explicit " +
                  fmt("%.1e", trace_gap) + " (<= 1e-8), min-perm violations " +
                  std::to_string(violations) + "/100"};
}

// 6. Activation ranges and convex-softmax normalization.
Outcome activation_contracts() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> logit(-30.0, 30.0);
  constexpr std::size_t kN = 1000000;
  std::vector<double> z(kN);
  for (double& v : z) v = logit(rng);
  // Closed-range kinds must also hold at the far ends of the double range.
  const double big = std::numeric_limits<double>::max();
  const std::vector<double> extremes{-big, -1e300, -1e3, -40.0, 40.0, 1e3, 1e300, big};
  int bad = 0;
  for (Activation a : {Activation::kSigmoid, Activation::kDoubledSigmoid, Activation::kClippedRelu}) {
    const double hi = activation_max(a);
    for (double y : activate(z, a)) {
      if (a == Activation::kDoubledSigmoid ? !(y > 0.0 && y < hi) : !(y >= 0.0 && y <= hi)) ++bad;
    }
    if (a != Activation::kDoubledSigmoid) {
      for (double y : activate(extremes, a)) {
        if (!(y >= 0.0 && y <= hi)) ++bad;
      }
    }
  }
  std::vector<double> triples(3 * kN);
  for (double& v : triples) v = logit(rng);
  for (double y : activate(triples, Activation::kConvexSoftmax)) {
    if (!(y >= 0.0 && y <= 2.0)) ++bad;
  }
  double sum_err = 0.0;
  for (std::size_t i = 0; i < kN; ++i) {
    const auto p = softmax3(triples[3 * i], triples[3 * i + 1], triples[3 * i + 2]);
    sum_err = std::max(sum_err, std::abs(p[0] + p[1] + p[2] - 1.0));
  }
  for (double e : extremes) {
    const auto p = softmax3(e, -e, 0.0);
    sum_err = std::max(sum_err, std::abs(p[0] + p[1] + p[2] - 1.0));
  }
  return {bad == 0 && sum_err <= 1e-12, "1e6 logits per kind, out-of-range " +
                                            std::to_string(bad) + ", max |sum p - 1| " +
                                            fmt("%.1e", sum_err) + " (<= 1e-12)"};
}

// 7 and 8 share one set of trained networks.
struct SeedRun {
  std::uint64_t seed = 0;
  ExperimentReport sweep;  // chimera, wa, wa-misi-5 for K = 0..5
};

struct TrainingStudy {
  std::vector<SeedRun> runs;
  double seconds = 0.0;
  std::string error;
};

TrainingStudy run_training_study(const fs::path& workdir) {
  TrainingStudy study;
  const Stopwatch sw;
  try {
    const auto train = gen_dataset(120, 100);
    const auto held_out = gen_dataset(30, 300);
    TrainConfig config;
    config.learning_rate = 3e-3;
    config.chimera_epochs = 4;
    config.wa_epochs = 2;
    config.misi_epochs = 1;
    config.max_misi = 5;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      config.seed = seed;
      const fs::path dir = workdir / ("train_seed" + std::to_string(seed));
      const auto ckpts = curriculum(MaskerNet::initialize(NetConfig{}, seed), train, {}, config, dir);
      std::vector<NamedModel> models;
      for (const auto& c : ckpts) {
        if (c.stage == "chimera" || c.stage == "wa" || c.stage == "wa-misi-5") {
          models.push_back({c.stage, &c.net});
        }
      }
      SeedRun run{seed, misi_sweep(models, held_out, 5)};
      write_report_csv(dir / "sweep.csv", run.sweep);
      study.runs.push_back(std::move(run));
      std::fprintf(stderr, "  seed %llu trained (%.0f s)\n", static_cast<unsigned long long>(seed),
                   sw.seconds());
    }
  } catch (const std::exception& e) {
    study.error = e.what();
  }
  study.seconds = sw.seconds();
  return study;
}

double at(const SeedRun& r, const char* name, int k) { return r.sweep.find(name, k)->mean_db; }

Outcome training_trend(const TrainingStudy& s) {
  if (!s.error.empty()) return {false, "training failed: " + s.error};
  double tpsa = 0.0, wa = 0.0, misi = 0.0;
  std::string per_seed;
  for (const auto& r : s.runs) {
    const double a = at(r, "chimera", 0), b = at(r, "wa", 0), c = at(r, "wa-misi-5", 5);
    tpsa += a / 3.0;
    wa += b / 3.0;
    misi += c / 3.0;
    per_seed += " [" + fmt("%.2f", a) + " " + fmt("%.2f", b) + " " + fmt("%.2f", c) + "]";
  }
  const bool ok = tpsa <= wa && wa <= misi && misi - wa >= 0.2 && s.seconds < 1800.0;
  return {ok, "mean tPSA " + fmt("%.2f", tpsa) + " <= WA " + fmt("%.2f", wa) + " <= WA-MISI-5 " +
                  fmt("%.2f", misi) + " dB, gap " + fmt("%+.2f", misi - wa) +
                  " (>= 0.2); per seed" + per_seed + "; " + fmt("%.0f", s.seconds) +
                  " s (< 1800 s)"};
}

Outcome iteration_sweep(const TrainingStudy& s) {
  if (!s.error.empty()) return {false, "training failed: " + s.error};
  bool ok = true;
  std::string detail;
  for (const auto& r : s.runs) {
    const double gain = at(r, "wa-misi-5", 5) - at(r, "wa-misi-5", 0);
    double best = -1e9;
    for (int k = 0; k <= 5; ++k) best = std::max(best, at(r, "wa", k));
    const double drop = best - at(r, "wa", 0);
    ok = ok && gain > 0.0 && drop <= 0.5;
    detail += "seed " + std::to_string(r.seed) + ": WA-MISI-5 K5-K0 " + fmt("%+.2f", gain) +
              " (> 0), WA max-K0 " + fmt("%.2f", drop) + " (<= 0.5); ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 9. SI-SDR scale invariance and a constructed 10 dB case.
Outcome sisdr_properties() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto ref = oracle::random_signal(rng, 1000);
    auto est = ref;
    const auto noise = oracle::random_signal(rng, 1000, 0.1 + 0.01 * trial);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += noise[i];
    const double base = si_sdr(est, ref);
    const double a = scale(rng);
    std::vector<double> scaled(est);
    for (double& v : scaled) v *= a;
    worst = std::max(worst, std::abs(si_sdr(scaled, ref) - base));
  }
  // Noise orthogonal to the reference with a tenth of its energy.
  const auto ref = oracle::random_signal(rng, 4000);
  auto n = oracle::random_signal(rng, 4000);
  double rn = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rn += ref[i] * n[i];
    rr += ref[i] * ref[i];
  }
  for (std::size_t i = 0; i < n.size(); ++i) n[i] -= rn / rr * ref[i];
  double nn = 0.0;
  for (double v : n) nn += v * v;
  std::vector<double> est(ref);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += n[i] * std::sqrt(rr / 10.0 / nn);
  const double ten = si_sdr(est, ref);
  return {worst <= 1e-9 && std::abs(ten - 10.0) <= 0.01,
          "scale invariance " + fmt("%.1e", worst) + " dB (<= 1e-9), orthogonal noise " +
              fmt("%.6f", ten) + " dB (10 +- 0.01)"};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool run(const std::string& cmd, const fs::path& log) {
  const std::string full = cmd + " >> \"" + log.string() + "\" 2>&1";
  return std::system(full.c_str()) == 0;
}

// 10. CLI reruns with identical seeds are bit-identical.
Outcome determinism(const std::string& cli, const fs::path& workdir) {
  if (cli.empty()) return {false, "no CLI binary given (--cli)"};
  const std::string q = "\"" + cli + "\"";
  for (const char* tag : {"a", "b"}) {
    const fs::path d = workdir / "determinism" / tag;
    fs::remove_all(d);
    fs::create_directories(d);
    const fs::path log = d / "log.txt";
    const std::string data = "\"" + (d / "data").string() + "\"";
    const std::string ck = "\"" + (d / "ckpt").string() + "\"";
    const std::string est = "\"" + (d / "est").string() + "\"";
    const bool ok =
        run(q + " mix --n 3 --seed 7 --out " + data, log) &&
        run(q + " train --data " + data + " --val " + data + " --ckpt " + ck +
                " --stage all --max-misi 2 --hidden 8 --chimera-epochs 2 --wa-epochs 1"
                " --misi-epochs 1 --seed 3",
            log) &&
        run(q + " separate --ckpt " + ck + "/wa-misi-2.ckpt --data " + data + " --misi 2 --out " +
                est,
            log) &&
        run(q + " evaluate --est " + est + " --ref " + data + " --k 2 --name wa-misi-2 --out \"" +
                (d / "report.csv").string() + "\"",
            log) &&
        run(q + " oracle --data " + data + " --misi 2 --out \"" + (d / "oracle.csv").string() + "\"",
            log);
    if (!ok) return {false, "CLI run failed, see " + log.string()};
  }
  const fs::path a = workdir / "determinism" / "a", b = workdir / "determinism" / "b";
  std::set<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file() && e.path().filename() != "log.txt") files.insert(fs::relative(e.path(), a));
  }
  std::vector<std::string> differ;
  for (const auto& f : files) {
    if (read_bytes(a / f) != read_bytes(b / f)) differ.push_back(f.string());
  }
  // Forward equivalence of the final checkpoints.
  const auto na = load_checkpoint(a / "ckpt" / "wa-misi-2.ckpt").net;
  const auto nb = load_checkpoint(b / "ckpt" / "wa-misi-2.ckpt").net;
  const auto x = stft(read_dataset(a / "data").front().mixture, {});
  const auto ma = na.infer_masks(x), mb = nb.infer_masks(x);
  bool same_forward = true;
  for (std::size_t c = 0; c < ma.size(); ++c) same_forward = same_forward && (ma[c] == mb[c]).all();
  const bool has_all = files.count("data/manifest.jsonl") && files.count("ckpt/wa-misi-2.ckpt") &&
                       files.count("report.csv");
  std::string detail = std::to_string(files.size()) + " files compared (manifest, wavs, " +
                       "checkpoints, loss curves, reports), " + std::to_string(differ.size()) +
                       " differ, forward " + (same_forward ? "identical" : "differs");
  if (!differ.empty()) detail += "; first: " + differ.front();
  return {differ.empty() && same_forward && has_all, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unfoldsep acceptance suite"};
  std::string cli;
  std::string workdir = (fs::temp_directory_path() / "unfoldsep_acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", cli, "path to the unfoldsep binary (criterion 10)");
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const auto wanted = [&](int id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };
  TrainingStudy study;
  if (wanted(7) || wanted(8)) study = run_training_study(workdir);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"perfect reconstruction", perfect_reconstruction},
      {"gradient fidelity", gradient_fidelity},
      {"MISI fixed point", misi_fixed_point},
      {"oracle phase-reconstruction gains", oracle_gains},
      {"loss identities", loss_identities},
      {"activation contracts", activation_contracts},
      {"training trend", [&] { return training_trend(study); }},
      {"iteration sweep", [&] { return iteration_sweep(study); }},
      {"SI-SDR properties", sisdr_properties},
      {"determinism", [&] { return determinism(cli, workdir); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s  AC%-2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
