#include "drift/signal.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <stdexcept>

#include "drift/rng.hpp"

namespace drift {

void Waveform::validate() const {
  if (!(sample_rate > 0.0))
    throw std::invalid_argument("Waveform: sample_rate must be > 0");
  for (double s : samples)
    if (!std::isfinite(s))
      throw std::invalid_argument("Waveform: non-finite sample");
}

namespace {

// One cached plan pair per transform size. Single-threaded process; plans
// are created with FFTW_ESTIMATE so planning is deterministic.
struct FftPlans {
  int n = 0;
  double* rbuf = nullptr;
  fftw_complex* cbuf = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

FftPlans& plans_for(int n) {
  static std::map<int, FftPlans> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  FftPlans p;
  p.n = n;
  p.rbuf = fftw_alloc_real(n);
  p.cbuf = fftw_alloc_complex(n / 2 + 1);
  p.r2c = fftw_plan_dft_r2c_1d(n, p.rbuf, p.cbuf, FFTW_ESTIMATE);
  p.c2r = fftw_plan_dft_c2r_1d(n, p.cbuf, p.rbuf, FFTW_ESTIMATE);
  return cache.emplace(n, p).first->second;
}

std::vector<double> hann_periodic(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

void check_cfg(const StftConfig& cfg) {
  if (cfg.window_len < 2 || cfg.hop < 1 || cfg.fft_size < cfg.window_len)
    throw std::invalid_argument("StftConfig: invalid geometry");
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / (x.empty() ? 1 : x.size()));
}

void normalize_rms(std::vector<double>& x, double target) {
  const double r = rms(x);
  if (r > 0.0) {
    const double g = target / r;
    for (double& v : x) v *= g;
  }
}

}  // namespace

SpectralFrameGrid stft(const Waveform& w, const StftConfig& cfg) {
  check_cfg(cfg);
  w.validate();
  if (w.length() < cfg.window_len)
    throw std::invalid_argument("stft: input shorter than the window");

  const int frames = cfg.frame_count(w.length());
  const int bins = cfg.bins();
  const auto win = hann_periodic(cfg.window_len);
  auto& fp = plans_for(cfg.fft_size);

  SpectralFrameGrid g;
  g.bins = bins;
  g.frames = frames;
  g.cfg = cfg;
  g.sample_rate = w.sample_rate;
  g.c.assign(static_cast<std::size_t>(frames) * bins, {0.0, 0.0});

  for (int t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + static_cast<std::size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.window_len; ++i) fp.rbuf[i] = win[i] * src[i];
    for (int i = cfg.window_len; i < cfg.fft_size; ++i) fp.rbuf[i] = 0.0;
    fftw_execute(fp.r2c);
    for (int f = 0; f < bins; ++f)
      g.at(t, f) = {fp.cbuf[f][0], fp.cbuf[f][1]};
  }
  return g;
}

Waveform istft(const SpectralFrameGrid& g) {
  check_cfg(g.cfg);
  if (g.frames < 1) throw std::invalid_argument("istft: empty grid");
  if (g.bins != g.cfg.bins())
    throw std::invalid_argument("istft: grid/geometry bin mismatch");

  const StftConfig& cfg = g.cfg;
  const int out_len = cfg.window_len + (g.frames - 1) * cfg.hop;
  const auto win = hann_periodic(cfg.window_len);
  auto& fp = plans_for(cfg.fft_size);

  std::vector<double> num(out_len, 0.0), den(out_len, 0.0);
  for (int t = 0; t < g.frames; ++t) {
    for (int f = 0; f < g.bins; ++f) {
      fp.cbuf[f][0] = g.at(t, f).real();
      fp.cbuf[f][1] = g.at(t, f).imag();
    }
    fftw_execute(fp.c2r);  // unnormalized; divide by fft_size below
    const int base = t * cfg.hop;
    for (int i = 0; i < cfg.window_len; ++i) {
      num[base + i] += win[i] * (fp.rbuf[i] / cfg.fft_size);
      den[base + i] += win[i] * win[i];
    }
  }
  Waveform out;
  out.sample_rate = g.sample_rate;
  out.samples.resize(out_len);
  for (int i = 0; i < out_len; ++i)
    out.samples[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
  return out;
}

SpectralFrameGrid istft_adjoint(const Waveform& wave_cotangent,
                                const StftConfig& cfg, int frames) {
  check_cfg(cfg);
  const int out_len = cfg.window_len + (frames - 1) * cfg.hop;
  if (wave_cotangent.length() != out_len)
    throw std::invalid_argument("istft_adjoint: cotangent length mismatch");

  const auto win = hann_periodic(cfg.window_len);
  auto& fp = plans_for(cfg.fft_size);

  std::vector<double> den(out_len, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < cfg.window_len; ++i)
      den[t * cfg.hop + i] += win[i] * win[i];
  std::vector<double> u(out_len, 0.0);
  for (int i = 0; i < out_len; ++i)
    u[i] = den[i] > 1e-12 ? wave_cotangent.samples[i] / den[i] : 0.0;

  SpectralFrameGrid cot;
  cot.bins = cfg.bins();
  cot.frames = frames;
  cot.cfg = cfg;
  cot.sample_rate = wave_cotangent.sample_rate;
  cot.c.assign(static_cast<std::size_t>(frames) * cot.bins, {0.0, 0.0});

  // Adjoint of the one-sided c2r synthesis: r2c of the windowed segment,
  // scaled 1/N, with the doubled interior bins of the Hermitian half.
  const bool even = cfg.fft_size % 2 == 0;
  for (int t = 0; t < frames; ++t) {
    const int base = t * cfg.hop;
    for (int i = 0; i < cfg.window_len; ++i)
      fp.rbuf[i] = win[i] * u[base + i];
    for (int i = cfg.window_len; i < cfg.fft_size; ++i) fp.rbuf[i] = 0.0;
    fftw_execute(fp.r2c);
    for (int f = 0; f < cot.bins; ++f) {
      const bool half = f == 0 || (even && f == cot.bins - 1);
      const double s = (half ? 1.0 : 2.0) / cfg.fft_size;
      cot.at(t, f) = {s * fp.cbuf[f][0], s * fp.cbuf[f][1]};
    }
  }
  return cot;
}

SpectralFrameGrid compress(const SpectralFrameGrid& g,
                           const CompressionConfig& cc) {
  SpectralFrameGrid out = g;
  out.compressed = true;
  for (auto& z : out.c) {
    const double r = std::abs(z);
    z = r > 0.0 ? std::pow(r, cc.exponent) * cc.scale * (z / r)
                : std::complex<double>{0.0, 0.0};
  }
  return out;
}

SpectralFrameGrid decompress(const SpectralFrameGrid& g,
                             const CompressionConfig& cc) {
  SpectralFrameGrid out = g;
  out.compressed = false;
  for (auto& z : out.c) {
    const double r = std::abs(z);
    z = r > 0.0 ? std::pow(r / cc.scale, 1.0 / cc.exponent) * (z / r)
                : std::complex<double>{0.0, 0.0};
  }
  return out;
}

SpectralFrameGrid decompress_vjp(const SpectralFrameGrid& compressed_grid,
                                 const SpectralFrameGrid& upstream,
                                 const CompressionConfig& cc) {
  if (compressed_grid.c.size() != upstream.c.size())
    throw std::invalid_argument("decompress_vjp: shape mismatch");
  // decompress(z) = m(r) * z / r with m(r) = (r/scale)^(1/a); write it as
  // h(r) * z, h = r^(1/a - 1) / scale^(1/a).
  const double inv_a = 1.0 / cc.exponent;
  const double norm = std::pow(cc.scale, -inv_a);
  SpectralFrameGrid cot = compressed_grid;
  for (std::size_t i = 0; i < cot.c.size(); ++i) {
    const double u = compressed_grid.c[i].real();
    const double v = compressed_grid.c[i].imag();
    const double r = std::hypot(u, v);
    if (r < 1e-300) {
      cot.c[i] = {0.0, 0.0};
      continue;
    }
    const double h = norm * std::pow(r, inv_a - 1.0);
    const double hp = norm * (inv_a - 1.0) * std::pow(r, inv_a - 2.0);
    const double gu = upstream.c[i].real();
    const double gv = upstream.c[i].imag();
    const double du = gu * (h + hp * u * u / r) + gv * (hp * u * v / r);
    const double dv = gu * (hp * u * v / r) + gv * (h + hp * v * v / r);
    cot.c[i] = {du, dv};
  }
  return cot;
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double snr_db) {
  if (clean.length() != noise.length())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  double ec = 0.0, en = 0.0;
  for (double s : clean.samples) ec += s * s;
  for (double s : noise.samples) en += s * s;
  if (ec <= 0.0) throw std::invalid_argument("mix_at_snr: zero-energy clean");
  if (en <= 0.0) throw std::invalid_argument("mix_at_snr: zero-energy noise");
  const double alpha = std::sqrt(ec / (en * std::pow(10.0, snr_db / 10.0)));
  Waveform out = clean;
  for (int i = 0; i < out.length(); ++i)
    out.samples[i] += alpha * noise.samples[i];
  return out;
}

Waveform synth_clean(std::uint64_t seed, int length, CleanKind kind,
                     double sample_rate) {
  if (length < 1) throw std::invalid_argument("synth_clean: length must be > 0");
  RngStream rng(seed);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(length, 0.0);
  const double dt = 1.0 / sample_rate;

  if (kind == CleanKind::harmonic) {
    const double f0 = rng.uniform(80.0, 300.0);
    const double vib_rate = rng.uniform(2.0, 6.0);
    const double vib_depth = rng.uniform(0.02, 0.08);
    const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
    const int harmonics = rng.uniform_int(3, 6);
    std::vector<double> phase(harmonics), amp(harmonics);
    for (int h = 0; h < harmonics; ++h) {
      phase[h] = rng.uniform(0.0, 2.0 * M_PI);
      amp[h] = 1.0 / (h + 1);
    }
    const double env_rate = rng.uniform(1.5, 4.0);
    const double env_phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int n = 0; n < length; ++n) {
      const double t = n * dt;
      const double inst_f0 =
          f0 * (1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * t + vib_phase));
      for (int h = 0; h < harmonics; ++h)
        phase[h] += 2.0 * M_PI * (h + 1) * inst_f0 * dt;
      const double env =
          0.55 + 0.45 * std::sin(2.0 * M_PI * env_rate * t + env_phase);
      double s = 0.0;
      for (int h = 0; h < harmonics; ++h) s += amp[h] * std::sin(phase[h]);
      w.samples[n] = env * s;
    }
  } else {  // am_chirp
    const double f_start = rng.uniform(500.0, 1500.0);
    const double f_end = rng.uniform(2000.0, 3500.0);
    const double am_rate = rng.uniform(3.0, 9.0);
    const double am_phase = rng.uniform(0.0, 2.0 * M_PI);
    double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int n = 0; n < length; ++n) {
      const double t = n * dt;
      const double frac = length > 1 ? double(n) / (length - 1) : 0.0;
      const double f = f_start + (f_end - f_start) * frac;
      phase += 2.0 * M_PI * f * dt;
      const double env =
          0.6 + 0.4 * std::sin(2.0 * M_PI * am_rate * t + am_phase);
      w.samples[n] = env * std::sin(phase);
    }
  }
  normalize_rms(w.samples, 0.1);
  return w;
}

Waveform synth_noise(std::uint64_t seed, int length, NoiseKind kind,
                     double sample_rate) {
  if (length < 1) throw std::invalid_argument("synth_noise: length must be > 0");
  RngStream rng(seed);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(length, 0.0);
  for (int n = 0; n < length; ++n) w.samples[n] = rng.normal();

  if (kind == NoiseKind::lowpass) {
    double y = 0.0;
    for (int n = 0; n < length; ++n) {
      y = 0.9 * y + 0.1 * w.samples[n];
      w.samples[n] = y;
    }
  } else if (kind == NoiseKind::bandpass) {
    // Broad band: difference of two one-pole lowpasses.
    double slow = 0.0, fast = 0.0;
    for (int n = 0; n < length; ++n) {
      const double x = w.samples[n];
      fast = 0.6 * fast + 0.4 * x;
      slow = 0.95 * slow + 0.05 * x;
      w.samples[n] = fast - slow;
    }
  }
  normalize_rms(w.samples, 0.1);
  return w;
}

double spectral_centroid(const Waveform& w, const StftConfig& cfg) {
  const SpectralFrameGrid g = stft(w, cfg);
  const double hz_per_bin = w.sample_rate / cfg.fft_size;
  double num = 0.0, den = 0.0;
  for (int t = 0; t < g.frames; ++t) {
    for (int f = 0; f < g.bins; ++f) {
      const double p = std::norm(g.at(t, f));
      num += p * f * hz_per_bin;
      den += p;
    }
  }
  if (den <= 0.0) throw std::invalid_argument("spectral_centroid: zero energy");
  return num / den;
}

Waveform segment(const Waveform& w, int offset, int len) {
  if (offset < 0 || len < 0 || offset + len > w.length())
    throw std::invalid_argument("segment: range out of bounds");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + offset,
                     w.samples.begin() + offset + len);
  return out;
}

namespace {

void put_u32(FILE* fp, std::uint32_t v) { std::fwrite(&v, 4, 1, fp); }
void put_u16(FILE* fp, std::uint16_t v) { std::fwrite(&v, 2, 1, fp); }

std::uint32_t get_u32(FILE* fp) {
  std::uint32_t v = 0;
  if (std::fread(&v, 4, 1, fp) != 1) throw std::runtime_error("wav: truncated");
  return v;
}
std::uint16_t get_u16(FILE* fp) {
  std::uint16_t v = 0;
  if (std::fread(&v, 2, 1, fp) != 1) throw std::runtime_error("wav: truncated");
  return v;
}

}  // namespace

void write_wav_pcm16(const std::string& path, const Waveform& w) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("write_wav_pcm16: cannot open " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(w.length());
  const std::uint32_t rate = static_cast<std::uint32_t>(w.sample_rate);
  std::fwrite("RIFF", 1, 4, fp);
  put_u32(fp, 36 + 2 * n);
  std::fwrite("WAVE", 1, 4, fp);
  std::fwrite("fmt ", 1, 4, fp);
  put_u32(fp, 16);
  put_u16(fp, 1);  // PCM
  put_u16(fp, 1);  // mono
  put_u32(fp, rate);
  put_u32(fp, rate * 2);
  put_u16(fp, 2);
  put_u16(fp, 16);
  std::fwrite("data", 1, 4, fp);
  put_u32(fp, 2 * n);
  for (double s : w.samples) {
    double v = std::lround(s * 32768.0);
    if (v > 32767.0) v = 32767.0;
    if (v < -32768.0) v = -32768.0;
    const std::int16_t q = static_cast<std::int16_t>(v);
    std::fwrite(&q, 2, 1, fp);
  }
  std::fclose(fp);
}

Waveform read_wav_pcm16(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("read_wav_pcm16: cannot open " + path);
  char tag[5] = {0};
  if (std::fread(tag, 1, 4, fp) != 4 || std::strncmp(tag, "RIFF", 4) != 0) {
    std::fclose(fp);
    throw std::runtime_error("read_wav_pcm16: not a RIFF file");
  }
  get_u32(fp);
  if (std::fread(tag, 1, 4, fp) != 4 || std::strncmp(tag, "WAVE", 4) != 0) {
    std::fclose(fp);
    throw std::runtime_error("read_wav_pcm16: not a WAVE file");
  }
  Waveform w;
  std::uint16_t channels = 0, bits = 0;
  while (std::fread(tag, 1, 4, fp) == 4) {
    const std::uint32_t size = get_u32(fp);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t fmt = get_u16(fp);
      channels = get_u16(fp);
      w.sample_rate = get_u32(fp);
      get_u32(fp);
      get_u16(fp);
      bits = get_u16(fp);
      if (fmt != 1 || channels != 1 || bits != 16) {
        std::fclose(fp);
        throw std::runtime_error("read_wav_pcm16: expect 16-bit PCM mono");
      }
      if (size > 16) std::fseek(fp, size - 16, SEEK_CUR);
    } else if (std::strncmp(tag, "data", 4) == 0) {
      const std::uint32_t n = size / 2;
      w.samples.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        std::int16_t q = 0;
        if (std::fread(&q, 2, 1, fp) != 1) {
          std::fclose(fp);
          throw std::runtime_error("read_wav_pcm16: truncated data");
        }
        w.samples[i] = q / 32768.0;
      }
      break;
    } else {
      std::fseek(fp, size, SEEK_CUR);
    }
  }
  std::fclose(fp);
  if (w.samples.empty()) throw std::runtime_error("read_wav_pcm16: no data");
  return w;
}

void write_raw_f64(const std::string& path, const Waveform& w) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("write_raw_f64: cannot open " + path);
  std::fwrite(w.samples.data(), sizeof(double), w.samples.size(), fp);
  std::fclose(fp);
}

Waveform read_raw_f64(const std::string& path, double sample_rate) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("read_raw_f64: cannot open " + path);
  std::fseek(fp, 0, SEEK_END);
  const long bytes = std::ftell(fp);
  std::fseek(fp, 0, SEEK_SET);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(bytes / 8);
  if (!w.samples.empty() &&
      std::fread(w.samples.data(), sizeof(double), w.samples.size(), fp) !=
          w.samples.size()) {
    std::fclose(fp);
    throw std::runtime_error("read_raw_f64: truncated");
  }
  std::fclose(fp);
  return w;
}

}  // namespace drift
