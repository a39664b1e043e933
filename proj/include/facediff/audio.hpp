#pragma once

#include "facediff/conditioning.hpp"

#include <cstddef>
#include <filesystem>
#include <memory>
#include <vector>

namespace facediff {

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1)
  int sample_rate = 16000;

  double duration() const noexcept {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// RIFF/WAVE, 16-bit PCM, mono. Throws IngestionError for anything else.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& wave, const std::filesystem::path& path);

// Number of feature rows for `samples` at `fps`: floor(duration * fps).
std::size_t frame_count(std::size_t samples, int sample_rate, double fps);

class AudioFeatureExtractor {
 public:
  virtual ~AudioFeatureExtractor() = default;
  virtual std::size_t dim() const = 0;
  // One row per 1/fps seconds. Throws IngestionError on empty or too-short audio.
  virtual AudioFeatureSequence extract(const Waveform& wave, double fps) const = 0;
};

struct LogMelConfig {
  std::size_t mel_bands = 29;
  std::size_t fft_size = 1024;
  double min_hz = 0.0;
  double max_hz = 0.0;  // 0 means Nyquist
  double log_floor = 1e-10;
};

// Hann-windowed STFT centred on each video frame, triangular mel filters,
// log(energy + log_floor).
class LogMelExtractor final : public AudioFeatureExtractor {
 public:
  explicit LogMelExtractor(LogMelConfig config = {});

  std::size_t dim() const override { return config_.mel_bands; }
  AudioFeatureSequence extract(const Waveform& wave, double fps) const override;

 private:
  LogMelConfig config_;
};

// Reads a precomputed feature matrix (binary or CSV) and returns it verbatim.
AudioFeatureSequence load_precomputed_features(const std::filesystem::path& path, double fps);

// `.wav` files go through `extractor` (log-mel when null); anything else is
// treated as a precomputed feature matrix.
AudioFeatureSequence load_audio_features(const std::filesystem::path& path, double fps,
                                         const AudioFeatureExtractor* extractor = nullptr);

}  // namespace facediff
