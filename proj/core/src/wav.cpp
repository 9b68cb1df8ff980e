// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "unfoldsep/errors.hpp"

namespace unfoldsep {
namespace {

constexpr double kPcmScale = 32768.0;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::int16_t to_code(double x) {
  const double clipped = std::clamp(x, -1.0, 1.0 - 1.0 / kPcmScale);
  const long code = std::lround(clipped * kPcmScale);
  return static_cast<std::int16_t>(std::clamp(code, -32768L, 32767L));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open " + path.string());
  }
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError("not a RIFF/WAVE file" + where);
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint16_t format = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw InputError("truncated chunk" + where);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        throw InputError("short fmt chunk" + where);
      }
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) {
        throw InputError("data chunk before fmt chunk" + where);
      }
      if (format != 1 || channels != 1 || bits != 16) {
        throw InputError("only mono 16-bit PCM is supported" + where);
      }
      Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      wave.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto code =
            static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        wave.samples[i] = code / kPcmScale;
      }
      return wave;
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }
  throw InputError("no data chunk" + where);
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double x : wave.samples) {
    put_u16(out, static_cast<std::uint16_t>(to_code(x)));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw InputError("cannot write " + path.string());
  }
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void quantize_pcm16(std::vector<double>& samples) {
  for (double& x : samples) {
    x = to_code(x) / kPcmScale;
  }
}

}  // namespace unfoldsep
