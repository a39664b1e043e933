#include "facediff/audio.hpp"

#include "facediff/error.hpp"
#include "facediff/io.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

namespace facediff {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// RAII holder for an FFTW real-to-complex plan and its buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(fftw_alloc_real(n)),
        out_(fftw_alloc_complex(n / 2 + 1)),
        plan_(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE)) {}
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Power spectrum |X_k|^2 for k = 0..n/2.
  std::vector<double> power() {
    fftw_execute(plan_);
    std::vector<double> p(n_ / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    return p;
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw IngestionError(path.string() + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0;
  int bits = 0;
  int format = 0;
  int rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw IngestionError(path.string() + ": truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0 && size >= 16) {
      format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = static_cast<int>(read_u32(p + body + 4));
      bits = read_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw IngestionError(path.string() + ": data chunk before fmt chunk");
      if (format != 1 || bits != 16 || channels != 1) {
        throw IngestionError(path.string() + ": only 16-bit PCM mono is supported");
      }
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(p + body + 2 * i));
        w.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw IngestionError(path.string() + ": no data chunk");
}

void write_wav(const Waveform& wave, const std::filesystem::path& path) {
  std::string s;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  s += "RIFF";
  put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, 1);
  put_u32(s, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(s, static_cast<std::uint32_t>(wave.sample_rate * 2));
  put_u16(s, 2);
  put_u16(s, 16);
  s += "data";
  put_u32(s, data_bytes);
  for (double v : wave.samples) {
    const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  write_text_file(path, s);
}

std::size_t frame_count(std::size_t samples, int sample_rate, double fps) {
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(samples) * fps / static_cast<double>(sample_rate) + 1e-9));
}

LogMelExtractor::LogMelExtractor(LogMelConfig config) : config_(config) {
  if (config_.mel_bands < 1 || config_.fft_size < 4) {
    throw ValidationError("log-mel: need at least one band and fft_size >= 4");
  }
}

AudioFeatureSequence LogMelExtractor::extract(const Waveform& wave, double fps) const {
  if (wave.sample_rate <= 0 || !(fps > 0.0)) throw IngestionError("log-mel: invalid rates");
  const std::size_t rows = frame_count(wave.samples.size(), wave.sample_rate, fps);
  if (rows == 0) {
    throw IngestionError("audio too short: " + std::to_string(wave.samples.size()) +
                         " samples yield no frame at " + std::to_string(fps) + " fps");
  }

  const std::size_t n = config_.fft_size;
  const std::size_t bins = n / 2 + 1;
  const double nyquist = 0.5 * wave.sample_rate;
  const double hi = config_.max_hz > 0.0 ? std::min(config_.max_hz, nyquist) : nyquist;
  const double mel_lo = hz_to_mel(config_.min_hz);
  const double mel_hi = hz_to_mel(hi);
  const std::size_t bands = config_.mel_bands;

  // Triangular filters on the FFT bin grid.
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(bands + 1));
  }
  Matrix filters = Matrix::Zero(static_cast<Eigen::Index>(bands), static_cast<Eigen::Index>(bins));
  for (std::size_t b = 0; b < bands; ++b) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * wave.sample_rate / static_cast<double>(n);
      double w = 0.0;
      if (f > edges[b] && f <= edges[b + 1]) {
        w = (f - edges[b]) / (edges[b + 1] - edges[b]);
      } else if (f > edges[b + 1] && f < edges[b + 2]) {
        w = (edges[b + 2] - f) / (edges[b + 2] - edges[b + 1]);
      }
      filters(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = w;
    }
  }

  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n));
  }

  RealFft fft(n);
  AudioFeatureSequence out{Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(bands)),
                           fps};
  const double hop = wave.sample_rate / fps;
  const auto total = static_cast<std::ptrdiff_t>(wave.samples.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto centre = static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(r) + 0.5) * hop));
    const std::ptrdiff_t start = centre - static_cast<std::ptrdiff_t>(n / 2);
    double* buf = fft.input();
    for (std::size_t i = 0; i < n; ++i) {
      const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(i);
      buf[i] = (s >= 0 && s < total) ? wave.samples[static_cast<std::size_t>(s)] * window[i] : 0.0;
    }
    const auto power = fft.power();
    const Eigen::Map<const Eigen::VectorXd> pw(power.data(), static_cast<Eigen::Index>(bins));
    const Eigen::VectorXd energy = filters * pw;
    for (std::size_t b = 0; b < bands; ++b) {
      out.feats(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b)) =
          std::log(energy[static_cast<Eigen::Index>(b)] + config_.log_floor);
    }
  }
  return out;
}

AudioFeatureSequence load_precomputed_features(const std::filesystem::path& path, double fps) {
  AudioFeatureSequence out{load_feature_matrix(path), fps};
  if (out.size() == 0) throw IngestionError(path.string() + ": feature file has no rows");
  return out;
}

AudioFeatureSequence load_audio_features(const std::filesystem::path& path, double fps,
                                         const AudioFeatureExtractor* extractor) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".wav") {
    const Waveform wave = read_wav(path);
    if (extractor) return extractor->extract(wave, fps);
    return LogMelExtractor{}.extract(wave, fps);
  }
  return load_precomputed_features(path, fps);
}

}  // namespace facediff
