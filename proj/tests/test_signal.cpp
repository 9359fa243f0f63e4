#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <span>
#include <complex>
#include <cstdio>
#include <vector>

#include "drift/rng.hpp"
#include "drift/signal.hpp"

using namespace drift;

namespace {

Waveform white_noise(std::uint64_t seed, int n) {
  RngStream rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (double& s : w.samples) s = 0.1 * rng.normal();
  return w;
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff / ref);
}

}  // namespace

TEST_CASE("stft geometry and the zero signal") {
  Waveform w;
  w.samples.assign(2048, 0.0);
  const SpectralFrameGrid g = stft(w);
  CHECK(g.bins == 256);
  CHECK(g.frames == (2048 - 510) / 128 + 1);
  for (const auto& z : g.c) {
    CHECK(z.real() == 0.0);
    CHECK(z.imag() == 0.0);
  }

  Waveform tiny;
  tiny.samples.assign(100, 0.0);
  CHECK_THROWS_AS(stft(tiny), std::invalid_argument);
}

TEST_CASE("bin-centered sine concentrates its energy") {
  // f = k * fs / fft_size lands exactly on bin k; the periodic Hann window
  // spreads it across at most +-1 bin.
  const StftConfig cfg;
  const int k = 32;
  Waveform w;
  w.sample_rate = 16000.0;
  w.samples.resize(4096);
  for (int n = 0; n < 4096; ++n)
    w.samples[n] = std::sin(2.0 * M_PI * k * n / cfg.fft_size);
  const SpectralFrameGrid g = stft(w, cfg);
  for (int t = 0; t < g.frames; ++t) {
    double total = 0.0, local = 0.0;
    for (int f = 0; f < g.bins; ++f) {
      const double p = std::norm(g.at(t, f));
      total += p;
      if (f >= k - 1 && f <= k + 1) local += p;
    }
    CHECK(local / total >= 0.99);
  }
}

TEST_CASE("windowed Parseval holds per frame") {
  const StftConfig cfg;
  const Waveform w = white_noise(5, 3000);
  const SpectralFrameGrid g = stft(w, cfg);

  std::vector<double> win(cfg.window_len);
  for (int i = 0; i < cfg.window_len; ++i)
    win[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.window_len);

  for (int t = 0; t < g.frames; ++t) {
    double time_energy = 0.0;
    for (int i = 0; i < cfg.window_len; ++i) {
      const double v = win[i] * w.samples[t * cfg.hop + i];
      time_energy += v * v;
    }
    double freq_energy = std::norm(g.at(t, 0)) + std::norm(g.at(t, g.bins - 1));
    for (int f = 1; f < g.bins - 1; ++f) freq_energy += 2.0 * std::norm(g.at(t, f));
    freq_energy /= cfg.fft_size;
    CHECK(std::abs(freq_energy - time_energy) <= 1e-6 * time_energy);
  }
}

TEST_CASE("stft is linear") {
  const Waveform w1 = white_noise(7, 2000), w2 = white_noise(8, 2000);
  Waveform mix;
  mix.samples.resize(2000);
  const double a = 1.5, b = -0.75;
  for (int i = 0; i < 2000; ++i)
    mix.samples[i] = a * w1.samples[i] + b * w2.samples[i];
  const auto g1 = stft(w1), g2 = stft(w2), gm = stft(mix);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < gm.c.size(); ++i) {
    const auto want = a * g1.c[i] + b * g2.c[i];
    worst = std::max(worst, std::abs(gm.c[i] - want));
    scale = std::max(scale, std::abs(want));
  }
  CHECK(worst <= 1e-12 * scale);
}

TEST_CASE("istft round-trips the interior") {
  const StftConfig cfg;
  const Waveform w = white_noise(9, 16384);
  const Waveform back = istft(stft(w, cfg));
  REQUIRE(back.length() == cfg.window_len + (cfg.frame_count(16384) - 1) * cfg.hop);

  const int trim = cfg.window_len;
  const int n = back.length() - 2 * trim;
  CHECK(rel_l2({back.samples.data() + trim, static_cast<std::size_t>(n)},
               {w.samples.data() + trim, static_cast<std::size_t>(n)}) < 1e-6);

  SpectralFrameGrid zeros = stft(w, cfg);
  for (auto& z : zeros.c) z = {0.0, 0.0};
  const Waveform silent = istft(zeros);
  for (double s : silent.samples) CHECK(s == 0.0);
}

TEST_CASE("istft adjoint matches finite differences") {
  StftConfig cfg;
  const int frames = 3;
  const int out_len = cfg.window_len + (frames - 1) * cfg.hop;

  RngStream rng(13);
  SpectralFrameGrid g;
  g.bins = cfg.bins();
  g.frames = frames;
  g.cfg = cfg;
  g.c.resize(static_cast<std::size_t>(frames) * g.bins);
  for (auto& z : g.c) z = {rng.normal(), rng.normal()};

  Waveform cot;
  cot.samples.resize(out_len);
  for (double& s : cot.samples) s = rng.normal();

  const SpectralFrameGrid adj = istft_adjoint(cot, cfg, frames);

  auto inner = [&](const SpectralFrameGrid& grid) {
    const Waveform y = istft(grid);
    double acc = 0.0;
    for (int i = 0; i < out_len; ++i) acc += y.samples[i] * cot.samples[i];
    return acc;
  };
  const double h = 1e-5;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t idx = rng.next_u64() % g.c.size();
    const bool imag = rng.uniform() < 0.5;
    SpectralFrameGrid up = g, dn = g;
    const std::complex<double> delta = imag ? std::complex<double>{0.0, h}
                                            : std::complex<double>{h, 0.0};
    up.c[idx] += delta;
    dn.c[idx] -= delta;
    const double fd = (inner(up) - inner(dn)) / (2.0 * h);
    const double got = imag ? adj.c[idx].imag() : adj.c[idx].real();
    CHECK(std::abs(fd - got) < 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("spectral compression and its inverse") {
  SpectralFrameGrid g;
  g.bins = 2;
  g.frames = 1;
  g.c = {{0.0, 0.0}, std::polar(1.0, M_PI / 3.0)};

  const SpectralFrameGrid comp = compress(g);
  CHECK(comp.compressed);
  CHECK(std::abs(comp.c[0]) == 0.0);
  CHECK(std::abs(comp.c[1]) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(std::arg(comp.c[1]) == doctest::Approx(M_PI / 3.0).epsilon(1e-12));

  RngStream rng(17);
  SpectralFrameGrid big;
  big.bins = 64;
  big.frames = 5;
  big.c.resize(320);
  for (auto& z : big.c) z = {rng.normal(), rng.normal()};
  const SpectralFrameGrid round = decompress(compress(big));
  double worst = 0.0;
  for (std::size_t i = 0; i < big.c.size(); ++i)
    worst = std::max(worst, std::abs(round.c[i] - big.c[i]));
  CHECK(worst < 1e-12);
}

TEST_CASE("decompress VJP matches finite differences") {
  RngStream rng(19);
  SpectralFrameGrid g;
  g.bins = 8;
  g.frames = 2;
  g.compressed = true;
  g.c.resize(16);
  for (auto& z : g.c) z = {0.2 * rng.normal(), 0.2 * rng.normal()};
  SpectralFrameGrid up = g;
  for (auto& z : up.c) z = {rng.normal(), rng.normal()};

  const SpectralFrameGrid cot = decompress_vjp(g, up);

  auto inner = [&](const SpectralFrameGrid& grid) {
    const SpectralFrameGrid lin = decompress(grid);
    double acc = 0.0;
    for (std::size_t i = 0; i < lin.c.size(); ++i)
      acc += lin.c[i].real() * up.c[i].real() + lin.c[i].imag() * up.c[i].imag();
    return acc;
  };
  const double h = 1e-7;
  for (std::size_t idx = 0; idx < g.c.size(); ++idx) {
    for (bool imag : {false, true}) {
      SpectralFrameGrid plus = g, minus = g;
      const std::complex<double> delta =
          imag ? std::complex<double>{0.0, h} : std::complex<double>{h, 0.0};
      plus.c[idx] += delta;
      minus.c[idx] -= delta;
      const double fd = (inner(plus) - inner(minus)) / (2.0 * h);
      const double got = imag ? cot.c[idx].imag() : cot.c[idx].real();
      CHECK(got == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("mix_at_snr realizes the requested ratio") {
  const Waveform clean = synth_clean(1, 8000, CleanKind::harmonic);
  const Waveform noise = synth_noise(2, 8000, NoiseKind::white);

  for (double snr : {0.0, 5.0, 10.0, 15.0}) {
    const Waveform mixed = mix_at_snr(clean, noise, snr);
    double ec = 0.0, en = 0.0;
    for (int i = 0; i < clean.length(); ++i) {
      ec += clean.samples[i] * clean.samples[i];
      const double d = mixed.samples[i] - clean.samples[i];
      en += d * d;
    }
    const double measured = 10.0 * std::log10(ec / en);
    CHECK(std::abs(measured - snr) < 1e-9);
    if (snr == 0.0) CHECK(std::abs(en / ec - 1.0) < 1e-10);
    if (snr == 10.0) CHECK(en == doctest::Approx(ec / 10.0).epsilon(1e-10));
  }

  Waveform silent = clean;
  silent.samples.assign(clean.samples.size(), 0.0);
  CHECK_THROWS_AS(mix_at_snr(silent, noise, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mix_at_snr(clean, silent, 0.0), std::invalid_argument);
}

TEST_CASE("synthetic signals are deterministic and normalized") {
  const Waveform a = synth_clean(42, 6000, CleanKind::harmonic);
  const Waveform b = synth_clean(42, 6000, CleanKind::harmonic);
  CHECK(a.samples == b.samples);

  double ss = 0.0;
  for (double s : a.samples) ss += s * s;
  CHECK(std::sqrt(ss / a.length()) == doctest::Approx(0.1).epsilon(1e-6));

  const Waveform chirp = synth_clean(43, 6000, CleanKind::am_chirp);
  CHECK(chirp.samples != a.samples);

  // Harmonic energy sits lower in the spectrum than white noise.
  const Waveform wn = synth_noise(44, 6000, NoiseKind::white);
  CHECK(spectral_centroid(a) < spectral_centroid(wn));
}

TEST_CASE("wav and raw i/o round-trips") {
  Waveform w;
  w.sample_rate = 16000.0;
  RngStream rng(23);
  w.samples.resize(777);
  // PCM-representable values round-trip bit-exactly.
  for (double& s : w.samples)
    s = rng.uniform_int(-32768, 32767) / 32768.0;
  const std::string path = "test_roundtrip.wav";
  write_wav_pcm16(path, w);
  const Waveform r = read_wav_pcm16(path);
  CHECK(r.sample_rate == 16000.0);
  REQUIRE(r.length() == w.length());
  CHECK(r.samples == w.samples);
  std::remove(path.c_str());

  Waveform f = white_noise(29, 333);
  const std::string raw = "test_roundtrip.f64";
  write_raw_f64(raw, f);
  const Waveform fr = read_raw_f64(raw);
  CHECK(fr.samples == f.samples);
  std::remove(raw.c_str());
}
