// Copyright 2026 The CMCD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CMCD_DSP_H_
#define CMCD_DSP_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cmcd/tensor.h"

namespace cmcd {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline constexpr int kNumMelBins = 40;
inline constexpr double kFrameLengthMs = 25.0;
inline constexpr double kFrameShiftMs = 10.0;
inline constexpr double kLogFloor = 1e-10;

// Hamming-windowed frames; T = 1 + floor((N - frame_len) / hop).
std::vector<std::vector<double>> frame_signal(const Waveform& w, std::size_t frame_len,
                                              std::size_t hop);

// 40 triangular filters on the HTK mel scale from 0 Hz to Nyquist, as a
// [kNumMelBins, fft_size/2 + 1] weight matrix over power-spectrum bins.
Tensor mel_filterbank(int sample_rate, std::size_t fft_size);

// Center frequency in Hz of each filter in mel_filterbank().
std::vector<double> mel_center_frequencies(int sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// ln(filter energy + 1e-10) per 25 ms frame every 10 ms: [T, 40].
Tensor log_mel(const Waveform& w);

double mean_power(std::span<const double> samples);

// Gain applied to the noise (looped or truncated to the clean length,
// starting at noise_offset) so that the mix has the requested SNR.
double snr_gain(const Waveform& clean, const Waveform& noise, double snr_db,
                std::size_t noise_offset = 0);

// clean + gain * noise at the requested SNR in dB.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                    std::size_t noise_offset = 0);

// PCM16 mono RIFF/WAVE. Other encodings are rejected with IoError.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Sub-range [start_sec, end_sec) of a waveform; end_sec < 0 means to the end.
Waveform slice(const Waveform& w, double start_sec, double end_sec);

}  // namespace cmcd

#endif  // CMCD_DSP_H_
