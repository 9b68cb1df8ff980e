// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>

#include "unfoldsep/dsp.hpp"

namespace unfoldsep {

/// Reads a RIFF/WAVE file holding mono 16-bit little-endian PCM. Samples are
/// mapped to [-1, 1) by division by 32768. Throws InputError on anything else.
Waveform read_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1 - 2^-15] and rounded
/// to the nearest code, so values already on the 1/32768 grid round-trip
/// exactly.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Rounds every sample to the 16-bit PCM grid (same mapping as write_wav).
void quantize_pcm16(std::vector<double>& samples);

}  // namespace unfoldsep
