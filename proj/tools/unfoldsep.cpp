// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// unfoldsep command-line driver.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "unfoldsep/dataset.hpp"
#include "unfoldsep/errors.hpp"
#include "unfoldsep/eval.hpp"
#include "unfoldsep/separator.hpp"
#include "unfoldsep/wav.hpp"

namespace fs = std::filesystem;
using namespace unfoldsep;

namespace {

std::uint64_t manifest_seed(const fs::path& dir) {
  std::ifstream in(dir / kManifestName);
  std::string line;
  if (!std::getline(in, line)) return 0;
  const auto rec = nlohmann::json::parse(line, nullptr, false);
  if (rec.is_discarded() || !rec.contains("dataset_seed")) return 0;
  return rec["dataset_seed"].get<std::uint64_t>();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path meta_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

void write_report(const fs::path& out, ExperimentReport& report, std::uint64_t seed,
                  const std::string& hash_input) {
  report.seed = seed;
  report.config_hash = config_hash(hash_input);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_report_csv(out, report);
  write_report_metadata(meta_path(out), report);
}

// Stage order used when listing checkpoints.
int stage_rank(const std::string& name) {
  if (name == "tpsa") return -2;
  if (name == "chimera") return -1;
  if (name == "wa") return 0;
  try {
    return Stage::parse(name).misi_iterations;
  } catch (const ConfigError&) {
    return 1000;
  }
}

// The checkpoint a stage starts from, or empty for a fresh network.
std::string previous_stage(const Stage& stage) {
  switch (stage.objective) {
    case Objective::kChimera:
    case Objective::kTpsa:
      return {};
    case Objective::kWa:
      return "chimera";
    case Objective::kWaMisi:
      return stage.misi_iterations == 1 ? "wa" : "wa-misi-" + std::to_string(stage.misi_iterations - 1);
  }
  return {};
}

void print_epoch(const EpochRecord& r) {
  std::printf("%-10s epoch %3d  loss %.6f  val %.3f dB\n", r.stage.c_str(), r.epoch, r.train_loss,
              r.val_sisdr);
  std::fflush(stdout);
}

// Strips a trailing "_mix" so that estimates line up with dataset ids.
std::string mixture_id(const fs::path& wav) {
  std::string stem = wav.stem().string();
  if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, "_mix") == 0) stem.resize(stem.size() - 4);
  return stem;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unfoldsep: mask inference trained through unfolded MISI"};
  app.require_subcommand(1);

  // mix
  std::size_t mix_n = 100;
  std::uint64_t mix_seed = 0;
  std::string mix_out;
  auto* mix = app.add_subcommand("mix", "generate a synthetic two-talker dataset");
  mix->add_option("--n", mix_n, "number of mixtures")->check(CLI::PositiveNumber);
  mix->add_option("--seed", mix_seed, "dataset seed");
  mix->add_option("--out", mix_out, "output directory")->required();

  // oracle
  std::string or_data, or_out;
  std::vector<std::string> or_masks{"ibm", "mrm", "iam", "psm"};
  int or_misi = 5;
  double or_gamma = 2.0;
  auto* oracle = app.add_subcommand("oracle", "oracle masks followed by MISI");
  oracle->add_option("--data", or_data, "dataset directory")->required();
  oracle->add_option("--mask", or_masks, "ibm, mrm, iam, psm (repeatable)")->delimiter(',');
  oracle->add_option("--misi", or_misi, "largest MISI iteration count; rows for 0..K")
      ->check(CLI::NonNegativeNumber);
  oracle->add_option("--gamma", or_gamma, "PSM truncation")->check(CLI::PositiveNumber);
  oracle->add_option("--out", or_out, "report CSV")->required();

  // train
  std::string tr_data, tr_val, tr_ckpt, tr_stage = "all", tr_act = "sigmoid";
  TrainConfig tc;
  NetConfig nc;
  int tr_epochs = -1;
  auto* train = app.add_subcommand("train", "train one stage (or the whole curriculum)");
  train->add_option("--data", tr_data, "training dataset directory")->required();
  train->add_option("--val", tr_val, "validation dataset directory");
  train->add_option("--activation", tr_act, "sigmoid, dsig, crelu, csoftmax");
  train->add_option("--stage", tr_stage, "chimera, tpsa, wa, wa-misi-K or all");
  train->add_option("--ckpt", tr_ckpt, "checkpoint directory")->required();
  train->add_option("--seed", tc.seed, "initialization and shuffling seed");
  train->add_option("--epochs", tr_epochs, "epochs for this stage (default per stage)");
  train->add_option("--chimera-epochs", tc.chimera_epochs, "chimera epochs for --stage all");
  train->add_option("--wa-epochs", tc.wa_epochs, "WA epochs for --stage all");
  train->add_option("--misi-epochs", tc.misi_epochs, "epochs per WA-MISI stage for --stage all");
  train->add_option("--lr", tc.learning_rate, "Adam learning rate");
  train->add_option("--batch", tc.batch_size, "minibatch size");
  train->add_option("--segment-frames", tc.segment_frames, "training segment length");
  train->add_option("--max-misi", tc.max_misi, "last WA-MISI stage for --stage all");
  train->add_option("--hidden", nc.hidden, "hidden units per layer");
  train->add_option("--context", nc.context, "context frames on each side");

  // separate
  std::string sep_ckpt, sep_in, sep_data, sep_out;
  int sep_misi = 5;
  auto* sep = app.add_subcommand("separate", "separate mixtures with a checkpoint");
  sep->add_option("--ckpt", sep_ckpt, "checkpoint file")->required();
  auto* sep_in_opt = sep->add_option("--in", sep_in, "mixture WAV");
  sep->add_option("--data", sep_data, "separate every mixture of a dataset")->excludes(sep_in_opt);
  sep->add_option("--misi", sep_misi, "MISI iterations")->check(CLI::NonNegativeNumber);
  sep->add_option("--out", sep_out, "output directory")->required();

  // evaluate
  std::string ev_est, ev_ref, ev_out, ev_name = "model";
  int ev_k = 0;
  auto* evaluate = app.add_subcommand("evaluate", "score <id>_est*.wav against a dataset");
  evaluate->add_option("--est", ev_est, "estimate directory")->required();
  evaluate->add_option("--ref", ev_ref, "reference dataset directory")->required();
  evaluate->add_option("--out", ev_out, "report CSV")->required();
  evaluate->add_option("--name", ev_name, "row name");
  evaluate->add_option("--k", ev_k, "eval_k column value");

  // sweep-misi
  std::string sw_ckpts, sw_data, sw_out;
  int sw_max = 5;
  auto* sweep = app.add_subcommand("sweep-misi", "SI-SDR of every checkpoint for K = 0..max");
  sweep->add_option("--ckpts", sw_ckpts, "checkpoint directory")->required();
  sweep->add_option("--data", sw_data, "dataset directory")->required();
  sweep->add_option("--max-k", sw_max, "largest K")->check(CLI::NonNegativeNumber);
  sweep->add_option("--out", sw_out, "report CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mix) {
      const auto data = gen_dataset(mix_n, mix_seed);
      write_dataset(mix_out, data, mix_seed);
      std::printf("wrote %zu mixtures to %s\n", data.size(), mix_out.c_str());
    } else if (*oracle) {
      const auto data = read_dataset(or_data);
      std::vector<OracleMask> kinds;
      for (const auto& m : or_masks) kinds.push_back(parse_oracle_mask(m));
      std::vector<int> ks(static_cast<std::size_t>(or_misi) + 1);
      for (std::size_t k = 0; k < ks.size(); ++k) ks[k] = static_cast<int>(k);
      ExperimentReport report = oracle_experiment(data, kinds, ks, {}, or_gamma);
      std::ostringstream h;
      h << "oracle;" << read_text(fs::path(or_data) / kManifestName) << ";masks=";
      for (const auto& m : or_masks) h << m << ',';
      h << ";misi=" << or_misi << ";gamma=" << or_gamma;
      write_report(or_out, report, manifest_seed(or_data), h.str());
      write_report_csv(std::cout, report);
    } else if (*train) {
      nc.activation = parse_activation(tr_act);
      const auto data = read_dataset(tr_data);
      std::vector<SeparationBatch> val;
      if (!tr_val.empty()) val = read_dataset(tr_val);
      const fs::path dir(tr_ckpt);
      fs::create_directories(dir);
      if (tr_stage == "all") {
        if (tr_epochs > 0) {
          tc.chimera_epochs = tc.wa_epochs = tc.misi_epochs = tr_epochs;
        }
        curriculum(MaskerNet::initialize(nc, tc.seed), data, val, tc, dir, print_epoch);
      } else {
        const Stage stage = Stage::parse(tr_stage);
        if (tr_epochs > 0) {
          tc.chimera_epochs = tc.tpsa_epochs = tc.wa_epochs = tc.misi_epochs = tr_epochs;
        }
        MaskerNet net;
        const std::string prev = previous_stage(stage);
        if (prev.empty()) {
          net = MaskerNet::initialize(nc, tc.seed);
        } else {
          const fs::path from = dir / (prev + ".ckpt");
          if (!fs::exists(from)) {
            throw InputError("stage " + tr_stage + " starts from " + from.string() +
                             "; train " + prev + " first");
          }
          net = load_checkpoint(from).net;
          if (net.config().activation != nc.activation) {
            throw ConfigError("activation differs from " + from.string());
          }
        }
        const StageResult r = train_stage(net, data, val, stage, tc, print_epoch);
        save_checkpoint(dir / (stage.name() + ".ckpt"), net, stage.name());
        write_loss_curve_csv(dir / (stage.name() + "_loss.csv"), r.curve);
      }
    } else if (*sep) {
      const LoadedCheckpoint ck = load_checkpoint(sep_ckpt);
      std::vector<fs::path> inputs;
      if (!sep_data.empty()) {
        for (const auto& b : read_dataset(sep_data)) inputs.push_back(fs::path(sep_data) / (b.id + "_mix.wav"));
      } else if (!sep_in.empty()) {
        inputs.push_back(sep_in);
      } else {
        throw ConfigError("separate needs --in or --data");
      }
      fs::create_directories(sep_out);
      for (const auto& in : inputs) {
        const auto est = separate(ck.net, read_wav(in), sep_misi);
        for (std::size_t c = 0; c < est.size(); ++c) {
          write_wav(fs::path(sep_out) / (mixture_id(in) + "_est" + std::to_string(c + 1) + ".wav"), est[c]);
        }
      }
      std::printf("separated %zu mixtures into %s\n", inputs.size(), sep_out.c_str());
    } else if (*evaluate) {
      const auto data = read_dataset(ev_ref);
      std::vector<double> scores;
      for (const auto& b : data) {
        std::vector<Waveform> est;
        for (std::size_t c = 0; c < b.sources.size(); ++c) {
          est.push_back(read_wav(fs::path(ev_est) / (b.id + "_est" + std::to_string(c + 1) + ".wav")));
        }
        scores.push_back(eval_pair(est, b.sources).mean_db);
      }
      ExperimentReport report;
      report.dataset_size = data.size();
      report.rows.push_back(summarize(ev_name, ev_k, scores));
      write_report(ev_out, report, manifest_seed(ev_ref),
                   "evaluate;" + read_text(fs::path(ev_ref) / kManifestName) + ";" + ev_name);
      write_report_csv(std::cout, report);
    } else if (*sweep) {
      const auto data = read_dataset(sw_data);
      std::vector<std::pair<std::string, MaskerNet>> nets;
      for (const auto& e : fs::directory_iterator(sw_ckpts)) {
        if (e.path().extension() == ".ckpt") {
          nets.emplace_back(e.path().stem().string(), load_checkpoint(e.path()).net);
        }
      }
      if (nets.empty()) throw InputError("no .ckpt files in " + sw_ckpts);
      std::sort(nets.begin(), nets.end(), [](const auto& a, const auto& b) {
        const int ra = stage_rank(a.first), rb = stage_rank(b.first);
        return ra != rb ? ra < rb : a.first < b.first;
      });
      std::vector<NamedModel> models;
      std::string h = "sweep;" + read_text(fs::path(sw_data) / kManifestName);
      for (const auto& [name, net] : nets) {
        models.push_back({name, &net});
        h += ";" + name + "=" + read_text(fs::path(sw_ckpts) / (name + ".ckpt"));
      }
      ExperimentReport report = misi_sweep(models, data, sw_max);
      write_report(sw_out, report, manifest_seed(sw_data), h);
      write_report_csv(std::cout, report);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unfoldsep: %s\n", e.what());
    return 1;
  }
  return 0;
}
