#include "lungdn/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "lungdn/errors.hpp"

namespace lungdn::audio {

namespace {

using cplx = std::complex<double>;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

BandpassSpec BandpassSpec::for_rate(int sample_rate, double low_hz, double high_hz, int order) {
  BandpassSpec s;
  s.order = order;
  s.low_hz = low_hz;
  s.high_hz = high_hz;
  s.applied_high_hz = std::min(high_hz, 0.45 * sample_rate);
  return s;
}

std::size_t bandpass_pad_length(const BandpassSpec& spec) { return 3 * (2 * std::size_t(spec.order) + 1); }

std::vector<Biquad> design_bandpass(const BandpassSpec& spec, int sample_rate) {
  const double fs = sample_rate;
  const double high = spec.applied_high_hz > 0 ? spec.applied_high_hz : std::min(spec.high_hz, 0.45 * fs);
  if (spec.order < 1) throw RangeError("filter order must be positive");
  if (!(spec.low_hz > 0 && spec.low_hz < high && high < fs / 2))
    throw RangeError("bandpass edges must satisfy 0 < low < high < fs/2 (low " + std::to_string(spec.low_hz) +
                     ", high " + std::to_string(high) + ", fs " + std::to_string(sample_rate) + ")");

  // Analog prototype -> analog bandpass with prewarped edges -> bilinear.
  const double w1 = 2 * fs * std::tan(std::numbers::pi * spec.low_hz / fs);
  const double w2 = 2 * fs * std::tan(std::numbers::pi * high / fs);
  const double w0 = std::sqrt(w1 * w2), bw = w2 - w1;
  const int n = spec.order;
  std::vector<cplx> zpoles;
  for (int k = 0; k < n; ++k) {
    const cplx proto = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
    const cplx pb = proto * bw;
    const cplx root = std::sqrt(pb * pb - 4.0 * w0 * w0);
    for (const cplx s : {(pb + root) / 2.0, (pb - root) / 2.0}) zpoles.push_back((2 * fs + s) / (2 * fs - s));
  }

  // Group into conjugate pairs (upper half plane) and real pairs.
  std::vector<cplx> upper, reals;
  for (const auto& z : zpoles) {
    if (z.imag() > 1e-12)
      upper.push_back(z);
    else if (std::abs(z.imag()) <= 1e-12)
      reals.push_back(z);
  }
  std::vector<Biquad> sos;
  for (const auto& z : upper) sos.push_back({{1.0, 0.0, -1.0}, {1.0, -2.0 * z.real(), std::norm(z)}});
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    const double r1 = reals[i].real(), r2 = reals[i + 1].real();
    sos.push_back({{1.0, 0.0, -1.0}, {1.0, -(r1 + r2), r1 * r2}});
  }
  if (sos.size() != std::size_t(n)) throw RangeError("bandpass design produced an unexpected pole layout");

  // Unit gain per section at the digital centre frequency.
  const double omega0 = 2 * std::atan(w0 / (2 * fs));
  const cplx zi = std::polar(1.0, -omega0);
  for (auto& s : sos) {
    const cplx num = s.b[0] + s.b[1] * zi + s.b[2] * zi * zi;
    const cplx den = s.a[0] + s.a[1] * zi + s.a[2] * zi * zi;
    const double g = std::abs(num / den);
    for (auto& c : s.b) c /= g;
  }
  return sos;
}

namespace {

// Steady-state transposed direct-form II states for a unit step.
std::vector<std::array<double, 2>> step_states(const std::vector<Biquad>& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const auto& s = sos[i];
    const double dc = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
    const double x = scale, y = dc * scale;
    const double z2 = s.b[2] * x - s.a[2] * y;
    const double z1 = s.b[1] * x - s.a[1] * y + z2;
    zi[i] = {z1, z2};
    scale = y;
  }
  return zi;
}

void sos_filter(const std::vector<Biquad>& sos, const std::vector<std::array<double, 2>>& zi, double x0,
                std::vector<double>& x) {
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const auto& s = sos[i];
    double z1 = zi[i][0] * x0, z2 = zi[i][1] * x0;
    for (double& v : x) {
      const double y = s.b[0] * v + z1;
      z1 = s.b[1] * v - s.a[1] * y + z2;
      z2 = s.b[2] * v - s.a[2] * y;
      v = y;
    }
  }
}

}  // namespace

AudioClip bandpass(const AudioClip& clip, BandpassSpec spec) {
  if (clip.sample_rate <= 0) throw RangeError("sample rate must be positive");
  if (spec.applied_high_hz <= 0) spec.applied_high_hz = std::min(spec.high_hz, 0.45 * clip.sample_rate);
  const auto sos = design_bandpass(spec, clip.sample_rate);
  const std::size_t pad = bandpass_pad_length(spec);
  const auto& x = clip.samples;
  const std::size_t n = x.size();
  if (n <= pad)
    throw FilterLengthError("clip of " + std::to_string(n) + " samples is too short for zero-phase filtering (needs more than " +
                            std::to_string(pad) + ")");

  // Odd extension on both ends.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_states(sos);
  sos_filter(sos, zi, ext.front(), ext);
  std::reverse(ext.begin(), ext.end());
  sos_filter(sos, zi, ext.front(), ext);
  std::reverse(ext.begin(), ext.end());

  AudioClip out{std::vector<double>(ext.begin() + pad, ext.begin() + pad + n), clip.sample_rate, clip.source_id};
  return out;
}

AudioClip resample(const AudioClip& clip, int target_hz) {
  if (target_hz <= 0) throw RangeError("target rate must be positive");
  if (clip.sample_rate <= 0) throw RangeError("source rate must be positive");
  if (target_hz == clip.sample_rate) return clip;
  const long g = std::gcd(target_hz, clip.sample_rate);
  const long up = target_hz / g, down = clip.sample_rate / g;
  const std::size_t n = clip.samples.size();
  const std::size_t out_len = std::size_t(std::llround(double(n) * double(up) / double(down)));

  // Lowpass at the up-sampled rate: cutoff at the narrower Nyquist, Kaiser window.
  const long factor = std::max(up, down);
  const long half = 10 * factor;
  const double cutoff = 1.0 / double(factor);  // fraction of the up-sampled Nyquist
  const double beta = 5.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(2 * half + 1);
  for (long i = -half; i <= half; ++i) {
    const double t = double(i);
    const double sinc = i == 0 ? 1.0 : std::sin(std::numbers::pi * cutoff * t) / (std::numbers::pi * cutoff * t);
    const double r = t / double(half);
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[i + half] = sinc * w;
  }
  const double total = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v *= double(up) / total;

  AudioClip out{std::vector<double>(out_len), target_hz, clip.source_id};
  for (std::size_t m = 0; m < out_len; ++m) {
    const long t = long(m) * down;  // position on the up-sampled grid
    const long k_lo = t <= half ? 0 : (t - half + up - 1) / up;
    const long k_hi = std::min<long>((t + half) / up, long(n) - 1);
    double acc = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) acc += clip.samples[k] * h[t - k * up + half];
    out.samples[m] = acc;
  }
  return out;
}

AudioClip normalize_peak(const AudioClip& clip) {
  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (clip.samples.empty() || peak == 0.0) throw EmptyAudio("cannot normalize an all-zero clip '" + clip.source_id + "'");
  AudioClip out = clip;
  for (double& v : out.samples) v /= peak;
  return out;
}

AudioClip hard_clip(AudioClip clip) {
  for (double& v : clip.samples) v = std::clamp(v, -1.0, 1.0);
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ParseError(where + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw ParseError(where + ": truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw ParseError(where + ": truncated extensible fmt chunk");
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (body + size > bytes.size())
        throw ParseError(where + ": data chunk declares " + std::to_string(size) + " bytes but only " +
                         std::to_string(bytes.size() - body) + " are present");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw ParseError(where + ": missing fmt chunk");
  if (!data) throw ParseError(where + ": missing data chunk");
  if (channels == 0 || rate == 0) throw ParseError(where + ": zero channels or sample rate");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw UnsupportedFormat(where + ": format " + std::to_string(format) + " with " + std::to_string(bits) +
                            " bits (supported: PCM16, float32)");
  const std::size_t frame = std::size_t(channels) * (bits / 8);
  const std::size_t frames = data_size / frame;
  if (frames == 0) throw EmptyAudio(where + ": no audio frames");

  AudioClip clip;
  clip.sample_rate = int(rate);
  clip.source_id = path.stem().string();
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame + c * (bits / 8);
      if (pcm16) {
        acc += double(std::int16_t(read_u16(p))) / 32768.0;
      } else {
        float v;
        const std::uint32_t u = read_u32(p);
        std::memcpy(&v, &u, 4);
        acc += double(v);
      }
    }
    clip.samples[f] = acc / channels;
  }
  for (double v : clip.samples)
    if (!std::isfinite(v)) throw ParseError(where + ": non-finite sample");
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate <= 0) throw RangeError("sample rate must be positive");
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double v = clip.samples[i];
    if (!(v >= -1.0 && v <= 1.0))
      throw RangeError("sample " + std::to_string(i) + " = " + std::to_string(v) + " outside [-1, 1]");
  }
  const std::uint32_t data_bytes = std::uint32_t(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, std::uint32_t(clip.sample_rate));
  put_u32(out, std::uint32_t(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double v : clip.samples) {
    const long q = std::clamp<long>(std::lround(v * 32768.0), -32768, 32767);
    put_u16(out, std::uint16_t(std::int16_t(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace lungdn::audio
