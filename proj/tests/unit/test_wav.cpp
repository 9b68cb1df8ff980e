// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "unfoldsep/errors.hpp"
#include "unfoldsep/wav.hpp"

namespace unfoldsep {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "unfoldsep_wav_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Wav, RoundTripOnPcmGrid) {
  Waveform w;
  for (int i = -5; i < 5; ++i) w.samples.push_back(i * 1234.0 / 32768.0);
  w.samples.push_back(-1.0);
  const auto path = temp_path("grid.wav");
  write_wav(path, w);
  const Waveform r = read_wav(path);
  EXPECT_EQ(r.sample_rate, 8000);
  EXPECT_EQ(r.samples, w.samples);
  EXPECT_EQ(std::filesystem::file_size(path), 44u + 2u * w.size());
}

TEST(Wav, WriterClipsToPcmRange) {
  Waveform w{{2.0, -3.0, 1.0}, 8000};
  const auto path = temp_path("clip.wav");
  write_wav(path, w);
  const Waveform r = read_wav(path);
  EXPECT_EQ(r.samples[0], 1.0 - std::ldexp(1.0, -15));
  EXPECT_EQ(r.samples[1], -1.0);
  EXPECT_EQ(r.samples[2], 1.0 - std::ldexp(1.0, -15));
}

TEST(Wav, QuantizeIsIdempotent) {
  std::vector<double> x{0.1, -0.33333, 0.999999};
  quantize_pcm16(x);
  const auto once = x;
  quantize_pcm16(x);
  EXPECT_EQ(x, once);
  for (double v : x) EXPECT_EQ(v * 32768.0, std::round(v * 32768.0));
}

TEST(Wav, RejectsGarbageAndMissingFiles) {
  const auto path = temp_path("garbage.wav");
  std::ofstream(path) << "definitely not a wave file";
  EXPECT_THROW(read_wav(path), InputError);
  EXPECT_THROW(read_wav(temp_path("missing.wav")), InputError);
}

TEST(Wav, RejectsStereo) {
  const auto path = temp_path("stereo.wav");
  write_wav(path, Waveform{{0.0, 0.0}, 8000});
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(22);
  const char two[2] = {2, 0};
  f.write(two, 2);
  f.close();
  EXPECT_THROW(read_wav(path), InputError);
}

}  // namespace
}  // namespace unfoldsep
