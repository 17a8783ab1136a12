#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace lungdn::audio {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string source_id;
};

struct BandpassSpec {
  int order = 6;
  double low_hz = 50.0;
  double high_hz = 2500.0;
  /// Upper edge actually used: min(high_hz, 0.45 * sample_rate).
  double applied_high_hz = 0.0;

  /// Default 50-2500 Hz spec with the upper edge clamped below Nyquist.
  static BandpassSpec for_rate(int sample_rate, double low_hz = 50.0, double high_hz = 2500.0, int order = 6);
};

/// One second-order section, a[0] == 1.
struct Biquad {
  std::array<double, 3> b;
  std::array<double, 3> a;
};

/// Digital Butterworth bandpass as cascaded biquads with unit gain at the
/// centre frequency. Throws RangeError on invalid edges.
std::vector<Biquad> design_bandpass(const BandpassSpec& spec, int sample_rate);

/// Samples the filter needs on each side for zero-phase filtering; inputs
/// must be longer than this.
std::size_t bandpass_pad_length(const BandpassSpec& spec);

/// Reads PCM16 or 32-bit float RIFF/WAVE, averaging channels to mono.
AudioClip read_wav(const std::filesystem::path& path);
/// Writes PCM16 mono. Throws RangeError for samples outside [-1, 1].
void write_wav(const AudioClip& clip, const std::filesystem::path& path);
/// Copy with samples clamped to [-1, 1].
AudioClip hard_clip(AudioClip clip);

/// Rational polyphase windowed-sinc resampling; output length is
/// round(len * target_hz / sample_rate).
AudioClip resample(const AudioClip& clip, int target_hz);

/// Zero-phase (forward-backward) Butterworth bandpass.
AudioClip bandpass(const AudioClip& clip, BandpassSpec spec);

/// Divides by max |sample|. Throws EmptyAudio for an all-zero clip.
AudioClip normalize_peak(const AudioClip& clip);

}  // namespace lungdn::audio
