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

#include "cmcd/dsp.h"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <numbers>

#include "cmcd/error.h"

namespace cmcd {

namespace {

std::size_t round_samples(double ms, int sample_rate) {
  return static_cast<std::size_t>(std::lround(ms * sample_rate / 1000.0));
}

// FFTW planning is not thread-safe; execution with new arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class PowerSpectrum {
 public:
  explicit PowerSpectrum(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n_);
    out_ = fftw_alloc_complex(n_ / 2 + 1);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), in_, out_, FFTW_ESTIMATE);
  }
  ~PowerSpectrum() {
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  PowerSpectrum(const PowerSpectrum&) = delete;
  PowerSpectrum& operator=(const PowerSpectrum&) = delete;

  // |X_k|^2 for k = 0..n/2 of the zero-padded frame.
  void compute(std::span<const double> frame, std::vector<double>& power) {
    std::fill(in_, in_ + n_, 0.0);
    std::copy(frame.begin(), frame.end(), in_);
    fftw_execute(plan_);
    power.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) power[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

void require_finite(const Waveform& w, const char* what) {
  if (w.sample_rate <= 0) throw ValueError(std::string(what) + ": sample rate must be positive");
  for (double s : w.samples)
    if (!std::isfinite(s)) throw ValueError(std::string(what) + ": non-finite sample");
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> frame_signal(const Waveform& w, std::size_t frame_len,
                                              std::size_t hop) {
  if (hop < 1 || frame_len < hop) throw ValueError("frame_signal: need frame_len >= hop >= 1");
  const std::size_t n = w.samples.size();
  if (n < frame_len) {
    throw ValueError("signal too short: " + std::to_string(n) + " samples < frame of " +
                     std::to_string(frame_len));
  }
  const std::size_t frames = 1 + (n - frame_len) / hop;
  std::vector<double> window(frame_len);
  for (std::size_t i = 0; i < frame_len; ++i) {
    window[i] = frame_len == 1 ? 1.0
                               : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame_len - 1));
  }
  std::vector<std::vector<double>> out(frames, std::vector<double>(frame_len));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < frame_len; ++i) out[t][i] = w.samples[t * hop + i] * window[i];
  return out;
}

std::vector<double> mel_center_frequencies(int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(kNumMelBins);
  for (int m = 0; m < kNumMelBins; ++m) centers[m] = mel_to_hz(top * (m + 1) / (kNumMelBins + 1));
  return centers;
}

Tensor mel_filterbank(int sample_rate, std::size_t fft_size) {
  if (sample_rate <= 0 || fft_size < 2) throw ValueError("mel_filterbank: bad parameters");
  const std::size_t bins = fft_size / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(kNumMelBins + 2);
  for (int i = 0; i < kNumMelBins + 2; ++i) edges[i] = mel_to_hz(top * i / (kNumMelBins + 1));
  Tensor fb({static_cast<std::size_t>(kNumMelBins), bins});
  for (int m = 0; m < kNumMelBins; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double wgt = 0.0;
      if (f > lo && f <= mid) wgt = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) wgt = (hi - f) / (hi - mid);
      fb(m, k) = wgt;
    }
  }
  return fb;
}

Tensor log_mel(const Waveform& w) {
  if (w.samples.empty()) throw ValueError("log_mel: empty waveform");
  require_finite(w, "log_mel");
  const std::size_t frame_len = round_samples(kFrameLengthMs, w.sample_rate);
  const std::size_t hop = round_samples(kFrameShiftMs, w.sample_rate);
  const std::size_t fft_size = std::bit_ceil(frame_len);
  const auto frames = frame_signal(w, frame_len, hop);
  const Tensor fb = mel_filterbank(w.sample_rate, fft_size);

  PowerSpectrum fft(fft_size);
  std::vector<double> power;
  Tensor out({frames.size(), static_cast<std::size_t>(kNumMelBins)});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    fft.compute(frames[t], power);
    for (int m = 0; m < kNumMelBins; ++m) {
      auto wrow = fb.row(m);
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += wrow[k] * power[k];
      out(t, m) = std::log(e + kLogFloor);
    }
  }
  return out;
}

double mean_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / samples.size();
}

namespace {

std::vector<double> fit_noise(const Waveform& noise, std::size_t length, std::size_t offset) {
  std::vector<double> out(length);
  const std::size_t n = noise.samples.size();
  for (std::size_t i = 0; i < length; ++i) out[i] = noise.samples[(offset + i) % n];
  return out;
}

}  // namespace

double snr_gain(const Waveform& clean, const Waveform& noise, double snr_db,
                std::size_t noise_offset) {
  require_finite(clean, "mix_at_snr");
  require_finite(noise, "mix_at_snr");
  if (!std::isfinite(snr_db)) throw ValueError("mix_at_snr: SNR must be finite");
  const double p_clean = mean_power(clean.samples);
  if (!(p_clean > 0)) throw ValueError("mix_at_snr: clean signal has zero power");
  if (noise.samples.empty() || !(mean_power(noise.samples) > 0))
    throw ValueError("mix_at_snr: noise has zero power");
  const auto fitted = fit_noise(noise, clean.samples.size(), noise_offset);
  const double p_noise = mean_power(fitted);
  if (!(p_noise > 0)) throw ValueError("mix_at_snr: noise segment has zero power");
  return std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                    std::size_t noise_offset) {
  const double gain = snr_gain(clean, noise, snr_db, noise_offset);
  const auto fitted = fit_noise(noise, clean.samples.size(), noise_offset);
  Waveform out = clean;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += gain * fitted[i];
  return out;
}

Waveform slice(const Waveform& w, double start_sec, double end_sec) {
  const auto n = w.samples.size();
  auto to_index = [&](double sec) {
    const double idx = std::round(sec * w.sample_rate);
    return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(n)));
  };
  const std::size_t b = to_index(start_sec);
  const std::size_t e = end_sec < 0 ? n : to_index(end_sec);
  if (e <= b) throw ValueError("empty audio segment");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + b, w.samples.begin() + e);
  return out;
}

// ---------------------------------------------------------------------------
// WAV I/O

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}
void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw IoError(name + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  int sample_rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + pos, bytes.begin() + pos + 4);
    const std::size_t len = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw IoError(name + ": truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (len < 16) throw IoError(name + ": short fmt chunk");
      const auto format = read_u16(&bytes[body]);
      const auto channels = read_u16(&bytes[body + 2]);
      sample_rate = static_cast<int>(read_u32(&bytes[body + 4]));
      const auto bits = read_u16(&bytes[body + 14]);
      if (format != 1 || bits != 16 || channels != 1) {
        throw IoError(name + ": unsupported encoding (need PCM16 mono, got format " +
                      std::to_string(format) + ", " + std::to_string(bits) + " bits, " +
                      std::to_string(channels) + " channels)");
      }
      if (sample_rate <= 0) throw IoError(name + ": invalid sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw IoError(name + ": data chunk before fmt chunk");
      Waveform w;
      w.sample_rate = sample_rate;
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(&bytes[body + 2 * i]));
        w.samples[i] = v / 32768.0;
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw IoError(name + ": missing fmt or data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write WAV file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
  if (!out) throw IoError("failed writing WAV file: " + path.string());
}

}  // namespace cmcd
