#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace drift {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  int length() const { return static_cast<int>(samples.size()); }
  void validate() const;  // finite samples, positive rate
};

struct StftConfig {
  int window_len = 510;  // periodic Hann
  int hop = 128;
  int fft_size = 510;  // may be raised to 512 to pad the odd window

  int bins() const { return fft_size / 2 + 1; }
  int frame_count(int num_samples) const {
    return num_samples < window_len ? 0
                                    : (num_samples - window_len) / hop + 1;
  }
};

// Complex spectrogram, frame-major: c[t * bins + f].
struct SpectralFrameGrid {
  int bins = 0;
  int frames = 0;
  StftConfig cfg;
  double sample_rate = 16000.0;
  bool compressed = false;
  std::vector<std::complex<double>> c;

  std::complex<double>& at(int t, int f) {
    return c[static_cast<std::size_t>(t) * bins + f];
  }
  const std::complex<double>& at(int t, int f) const {
    return c[static_cast<std::size_t>(t) * bins + f];
  }
};

struct CompressionConfig {
  double exponent = 0.5;  // magnitude power
  double scale = 0.15;
};

SpectralFrameGrid stft(const Waveform& w, const StftConfig& cfg = {});

// Least-squares overlap-add synthesis (squared-window normalization).
// Output length is window_len + (frames - 1) * hop. Samples whose window
// normalizer is zero (the very first sample with a periodic Hann) come
// back as 0; round-trip guarantees hold on the interior.
Waveform istft(const SpectralFrameGrid& g);

// Adjoint of the linear map istft: waveform cotangent -> grid cotangent.
SpectralFrameGrid istft_adjoint(const Waveform& wave_cotangent,
                                const StftConfig& cfg, int frames);

SpectralFrameGrid compress(const SpectralFrameGrid& g,
                           const CompressionConfig& cc = {});
SpectralFrameGrid decompress(const SpectralFrameGrid& g,
                             const CompressionConfig& cc = {});

// VJP of decompress: cotangent w.r.t. the compressed grid, given the
// compressed grid itself and an upstream cotangent in the linear domain.
SpectralFrameGrid decompress_vjp(const SpectralFrameGrid& compressed_grid,
                                 const SpectralFrameGrid& upstream,
                                 const CompressionConfig& cc = {});

// clean + alpha * noise with alpha set so the clean/noise energy ratio is
// exactly snr_db.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double snr_db);

enum class CleanKind { harmonic, am_chirp };
enum class NoiseKind { white, lowpass, bandpass };

// Deterministic synthetic signals, RMS-normalized to 0.1.
Waveform synth_clean(std::uint64_t seed, int length, CleanKind kind,
                     double sample_rate = 16000.0);
Waveform synth_noise(std::uint64_t seed, int length, NoiseKind kind,
                     double sample_rate = 16000.0);

// Magnitude-squared weighted mean frequency in Hz over all STFT frames.
double spectral_centroid(const Waveform& w, const StftConfig& cfg = {});

Waveform segment(const Waveform& w, int offset, int len);

// 16-bit PCM little-endian mono.
void write_wav_pcm16(const std::string& path, const Waveform& w);
Waveform read_wav_pcm16(const std::string& path);

// Raw little-endian float64 samples, no header.
void write_raw_f64(const std::string& path, const Waveform& w);
Waveform read_raw_f64(const std::string& path, double sample_rate = 16000.0);

}  // namespace drift
