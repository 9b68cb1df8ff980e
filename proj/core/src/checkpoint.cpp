// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"
#include "unfoldsep/errors.hpp"
#include "unfoldsep/separator.hpp"

namespace unfoldsep {
namespace {

constexpr char kMagic[8] = {'U', 'F', 'S', 'E', 'P', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw InputError("checkpoint truncated while reading " + what);
  }
  return value;
}

void put_doubles(std::ostream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<double> values(n);
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(n * sizeof(double)))) {
    throw InputError("checkpoint truncated while reading " + what);
  }
  return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MaskerNet& net,
                     std::string_view stage) {
  const NetConfig& c = net.config();
  nlohmann::ordered_json header;
  header["stage"] = std::string(stage);
  header["stft"] = {{"win_len", c.stft.win_len},
                    {"hop", c.stft.hop},
                    {"dft_size", c.stft.dft_size},
                    {"sample_rate", c.stft.sample_rate}};
  header["hidden"] = c.hidden;
  header["context"] = c.context;
  header["embedding_dim"] = c.embedding_dim;
  header["sources"] = c.sources;
  header["activation"] = std::string(to_string(c.activation));
  header["normalizer_bins"] = net.feature_mean().size();
  auto& params = header["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : net.parameters()) {
    params.push_back({{"name", p.name}, {"rows", p.shape.rows()}, {"cols", p.shape.cols()},
                      {"count", p.values.size()}});
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write checkpoint " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_doubles(out, net.feature_mean());
  put_doubles(out, net.feature_scale());
  for (const auto& p : net.parameters()) put_doubles(out, p.values);
  if (!out) {
    throw InputError("failed writing checkpoint " + path.string());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open checkpoint " + path.string());
  }
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError(path.string() + " is not an unfoldsep checkpoint");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = get<std::uint64_t>(in, "header length");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw InputError("checkpoint truncated while reading header");
  }

  nlohmann::json header;
  NetConfig config;
  try {
    header = nlohmann::json::parse(text);
    const auto& s = header.at("stft");
    config.stft.win_len = s.at("win_len").get<int>();
    config.stft.hop = s.at("hop").get<int>();
    config.stft.dft_size = s.at("dft_size").get<int>();
    config.stft.sample_rate = s.at("sample_rate").get<int>();
    config.hidden = header.at("hidden").get<int>();
    config.context = header.at("context").get<int>();
    config.embedding_dim = header.at("embedding_dim").get<int>();
    config.sources = header.at("sources").get<int>();
    config.activation = parse_activation(header.at("activation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint header: " + std::string(e.what()));
  }

  LoadedCheckpoint loaded{MaskerNet(config), header.at("stage").get<std::string>()};
  const auto bins = header.at("normalizer_bins").get<std::size_t>();
  std::vector<double> mean = get_doubles(in, bins, "normalizer");
  std::vector<double> scale = get_doubles(in, bins, "normalizer");
  loaded.net.set_normalizer(std::move(mean), std::move(scale));

  const auto& entries = header.at("parameters");
  auto& params = loaded.net.parameters();
  if (entries.size() != params.size()) {
    throw InputError("checkpoint has " + std::to_string(entries.size()) +
                     " parameter tensors, expected " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto count = entries[i].at("count").get<std::size_t>();
    if (entries[i].at("name").get<std::string>() != params[i].name ||
        count != params[i].values.size()) {
      throw InputError("checkpoint parameter " + std::to_string(i) +
                       " does not match the configured network");
    }
    params[i].values = get_doubles(in, count, params[i].name);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InputError("trailing bytes after checkpoint parameters");
  }
  return loaded;
}

}  // namespace unfoldsep
