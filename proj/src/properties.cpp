#include <cmath>
#include <cstdio>

#include "drift/experiments.hpp"
#include "drift/metrics.hpp"

namespace drift {

bool PropertyReport::all_pass() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return !entries.empty();
}

void PropertyReport::print() const {
  for (const auto& e : entries)
    std::printf("[%s] %-28s max_dev=%.3e tol=%.3e\n", e.pass ? "PASS" : "FAIL",
                e.name.c_str(), e.max_dev, e.tol);
}

const PropertyReport::Entry& PropertyReport::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw std::runtime_error("no such property entry: " + name);
}

namespace {

LatentBatch random_batch(RngStream& rng, int n, int d, double offset) {
  LatentBatch b(d);
  std::vector<double> p(d);
  for (int i = 0; i < n; ++i) {
    for (double& x : p) x = rng.normal() + offset;
    b.push(p);
  }
  return b;
}

double rel_dev(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-30});
  return std::sqrt(diff) / denom;
}

void push(PropertyReport& r, const std::string& name, double dev, double tol) {
  r.entries.push_back({name, dev, tol, dev <= tol});
}

}  // namespace

PropertyReport run_drift_properties(std::uint64_t seed, bool perturb,
                                    int oracle_instances,
                                    int gradient_instances) {
  PropertyReport report;
  RngStream rng(seed);
  const double taus[3] = {0.1, 0.5, 1.0};

  // Joint-form vs decomposed-form equivalence, plus the factored training
  // route, across random dimensions, set sizes and temperatures.
  {
    double dev_unified = 0.0, dev_factored = 0.0;
    for (int it = 0; it < oracle_instances; ++it) {
      const int d = rng.uniform_int(2, 16);
      const int np = rng.uniform_int(1, 64);
      const int nn = rng.uniform_int(1, 64);
      const double tau = taus[rng.uniform_int(0, 2)];
      const LatentBatch pos = random_batch(rng, np, d, 0.4);
      const LatentBatch neg = random_batch(rng, nn, d, 0.0);
      std::vector<double> q(d);
      for (double& x : q) x = rng.normal();

      auto uni = drift_unified(q, pos, neg, tau);
      if (perturb) uni[0] += 1e-6;  // negative control: the suite must trip
      const auto dec = drift_decomposed(q, pos, neg, tau);
      dev_unified = std::max(dev_unified, rel_dev(uni, dec.total));

      KernelConfig kc;
      kc.temperatures = {tau};
      DriftOptions wm;
      wm.route = DriftOptions::Route::weighted_means;
      LatentBatch single(d);
      single.push(q);
      const auto field = drift_multi_temperature(single, pos, neg, kc, wm);
      dev_factored = std::max(dev_factored, rel_dev(field.vector(0), dec.total));
    }
    push(report, "oracle_equivalence", dev_unified, 1e-10);
    push(report, "factored_route", dev_factored, 1e-10);
  }

  // Exact zero at the sample-level equilibrium, both routes.
  {
    double dev = 0.0;
    KernelConfig kc;
    for (int it = 0; it < 50; ++it) {
      const int d = rng.uniform_int(2, 12);
      const int n = rng.uniform_int(1, 32);
      const LatentBatch pos = random_batch(rng, n, d, 0.0);
      for (auto route : {DriftOptions::Route::pairwise,
                         DriftOptions::Route::weighted_means}) {
        DriftOptions opts;
        opts.route = route;
        const auto field = drift_multi_temperature(pos, pos, pos, kc, opts);
        for (double v : field.vectors) dev = std::max(dev, std::abs(v));
      }
    }
    push(report, "equilibrium_zero", dev, 0.0);
  }

  // Swapping pos/neg negates the field bitwise.
  {
    double dev = 0.0;
    for (int it = 0; it < 50; ++it) {
      const int d = rng.uniform_int(2, 12);
      const LatentBatch pos = random_batch(rng, rng.uniform_int(1, 24), d, 0.4);
      const LatentBatch neg = random_batch(rng, rng.uniform_int(1, 24), d, 0.0);
      std::vector<double> q(d);
      for (double& x : q) x = rng.normal();
      const double tau = taus[rng.uniform_int(0, 2)];
      const auto v1 = drift_unified(q, pos, neg, tau);
      const auto v2 = drift_unified(q, neg, pos, tau);
      for (int k = 0; k < d; ++k) dev = std::max(dev, std::abs(v1[k] + v2[k]));
    }
    push(report, "antisymmetry", dev, 0.0);
  }

  // Rigid translation of query and both sets leaves the field unchanged.
  {
    double dev = 0.0;
    for (int it = 0; it < 50; ++it) {
      const int d = rng.uniform_int(2, 12);
      LatentBatch pos = random_batch(rng, rng.uniform_int(2, 24), d, 0.4);
      LatentBatch neg = random_batch(rng, rng.uniform_int(2, 24), d, 0.0);
      std::vector<double> q(d), c(d);
      for (double& x : q) x = rng.normal();
      for (double& x : c) x = 2.0 * rng.normal();
      const auto base = drift_unified(q, pos, neg, 0.5);
      for (int i = 0; i < pos.count(); ++i)
        for (int k = 0; k < d; ++k) pos.point(i)[k] += c[k];
      for (int i = 0; i < neg.count(); ++i)
        for (int k = 0; k < d; ++k) neg.point(i)[k] += c[k];
      for (int k = 0; k < d; ++k) q[k] += c[k];
      const auto moved = drift_unified(q, pos, neg, 0.5);
      dev = std::max(dev, rel_dev(base, moved));
    }
    push(report, "translation_equivariance", dev, 1e-9);
  }

  // Scaling query, sets and tau by s scales the field by s; dyadic s is
  // exact.
  {
    double dev_pow2 = 0.0, dev_general = 0.0;
    for (int it = 0; it < 50; ++it) {
      const int d = rng.uniform_int(2, 12);
      const LatentBatch pos = random_batch(rng, rng.uniform_int(1, 24), d, 0.4);
      const LatentBatch neg = random_batch(rng, rng.uniform_int(1, 24), d, 0.0);
      std::vector<double> q(d);
      for (double& x : q) x = rng.normal();
      const auto base = drift_unified(q, pos, neg, 0.5);
      for (double s : {4.0, 3.0}) {
        LatentBatch ps = pos, ns = neg;
        std::vector<double> qs = q;
        for (double& x : ps.data) x *= s;
        for (double& x : ns.data) x *= s;
        for (double& x : qs) x *= s;
        const auto scaled = drift_unified(qs, ps, ns, 0.5 * s);
        double local = 0.0;
        for (int k = 0; k < d; ++k)
          local = std::max(local, std::abs(scaled[k] - s * base[k]) /
                                      std::max(1e-30, std::abs(s * base[k])));
        if (s == 4.0)
          dev_pow2 = std::max(dev_pow2, local);
        else
          dev_general = std::max(dev_general, local);
      }
    }
    push(report, "joint_scaling_dyadic", dev_pow2, 0.0);
    push(report, "joint_scaling_general", dev_general, 1e-12);
  }

  // Multi-temperature aggregation is the arithmetic mean of per-tau fields.
  {
    double dev = 0.0;
    KernelConfig kc;
    for (int it = 0; it < 25; ++it) {
      const int d = rng.uniform_int(2, 10);
      const LatentBatch pos = random_batch(rng, rng.uniform_int(2, 20), d, 0.4);
      const LatentBatch neg = random_batch(rng, rng.uniform_int(2, 20), d, 0.0);
      const LatentBatch queries = random_batch(rng, 4, d, 0.0);
      const auto field = drift_multi_temperature(queries, pos, neg, kc);
      for (int qi = 0; qi < 4; ++qi) {
        std::vector<double> mean(d, 0.0);
        for (double tau : kc.temperatures) {
          const auto v = drift_unified(queries.point(qi), pos, neg, tau);
          for (int k = 0; k < d; ++k) mean[k] += v[k];
        }
        for (double& x : mean) x /= static_cast<double>(kc.temperatures.size());
        dev = std::max(dev, rel_dev(field.vector(qi), mean));
      }
    }
    push(report, "multi_temperature_mean", dev, 1e-14);
  }

  // Determinism: identical inputs, identical bits.
  {
    double dev = 0.0;
    KernelConfig kc;
    const LatentBatch pos = random_batch(rng, 16, 6, 0.4);
    const LatentBatch neg = random_batch(rng, 12, 6, 0.0);
    const LatentBatch queries = random_batch(rng, 8, 6, 0.0);
    const auto f1 = drift_multi_temperature(queries, pos, neg, kc);
    const auto f2 = drift_multi_temperature(queries, pos, neg, kc);
    for (std::size_t i = 0; i < f1.vectors.size(); ++i)
      if (f1.vectors[i] != f2.vectors[i]) dev = 1.0;
    push(report, "determinism", dev, 0.0);
  }

  // Generator backward vs central finite differences.
  {
    double dev = 0.0;
    const double h = 1e-5;
    for (int it = 0; it < gradient_instances; ++it) {
      const bool conditional = it % 2 == 1;
      const int dim = rng.uniform_int(3, 6);
      GeneratorParams p =
          conditional
              ? make_generator(Paradigm::conditional, dim, {7, 5}, dim,
                               rng.next_u64(), dim)
              : make_generator(Paradigm::direct_mapping, dim, {7, 5}, dim,
                               rng.next_u64());
      for (double& x : p.theta) x += 0.3 * rng.normal();
      std::vector<double> x(dim), c(dim), cot(dim);
      for (double& v : x) v = rng.normal();
      for (double& v : c) v = rng.normal();
      for (double& v : cot) v = rng.normal();

      auto value = [&](const GeneratorParams& q) {
        const auto out = conditional ? forward_conditional(x, c, q)
                                     : forward_direct(x, 0.0, {}, q);
        double acc = 0.0;
        for (int i = 0; i < dim; ++i) acc += out[i] * cot[i];
        return acc;
      };
      ForwardTrace tr;
      if (conditional)
        forward_conditional(x, c, p, &tr);
      else
        forward_direct(x, 0.0, {}, p, &tr);
      std::vector<double> grads(p.theta.size(), 0.0);
      backward(p, tr, cot, grads);
      for (int probe = 0; probe < 8; ++probe) {
        const std::size_t idx = rng.next_u64() % p.theta.size();
        GeneratorParams plus = p, minus = p;
        plus.theta[idx] += h;
        minus.theta[idx] -= h;
        const double fd = (value(plus) - value(minus)) / (2.0 * h);
        dev = std::max(dev, std::abs(grads[idx] - fd) / std::max(std::abs(fd), 1e-8));
      }
    }
    push(report, "generator_gradient_fd", dev, 1e-4);
  }

  // Encoder gradient vs central finite differences.
  {
    double dev = 0.0;
    const double h = 1e-5;
    for (int it = 0; it < gradient_instances; ++it) {
      const EncoderSpec spec = make_random_stack_encoder(
          {12, 12, 12}, {0, 1, 2}, rng.next_u64(), 256, 128);
      Waveform w;
      w.samples.resize(2048);
      for (double& s : w.samples) s = 0.2 * rng.normal();
      LatentStack up = encode(w, spec);
      for (auto& layer : up.layers)
        for (double& x : layer.data) x = rng.normal();
      const auto grad = encode_gradient(w, spec, up);

      auto value = [&](const Waveform& wave) {
        const LatentStack s = encode(wave, spec);
        double acc = 0.0;
        for (std::size_t l = 0; l < s.layers.size(); ++l)
          for (std::size_t i = 0; i < s.layers[l].data.size(); ++i)
            acc += s.layers[l].data[i] * up.layers[l].data[i];
        return acc;
      };
      for (int probe = 0; probe < 5; ++probe) {
        const int idx = rng.uniform_int(0, w.length() - 1);
        Waveform plus = w, minus = w;
        plus.samples[idx] += h;
        minus.samples[idx] -= h;
        const double fd = (value(plus) - value(minus)) / (2.0 * h);
        dev = std::max(dev, std::abs(grad[idx] - fd) / std::max(std::abs(fd), 1e-8));
      }
    }
    push(report, "encoder_gradient_fd", dev, 1e-4);
  }

  return report;
}

PropertyReport run_signal_properties(std::uint64_t seed) {
  PropertyReport report;
  RngStream rng(seed);
  const StftConfig cfg;

  // Interior round-trip of the analysis/synthesis pair.
  {
    Waveform w;
    w.samples.resize(16384);
    for (double& s : w.samples) s = 0.1 * rng.normal();
    const Waveform back = istft(stft(w, cfg));
    const int trim = cfg.window_len;
    double diff = 0.0, ref = 0.0;
    for (int i = trim; i < back.length() - trim; ++i) {
      diff += (back.samples[i] - w.samples[i]) * (back.samples[i] - w.samples[i]);
      ref += w.samples[i] * w.samples[i];
    }
    push(report, "stft_istft_roundtrip", std::sqrt(diff / ref), 1e-6);
  }

  // Compression round-trip.
  {
    SpectralFrameGrid g;
    g.bins = 64;
    g.frames = 8;
    g.c.resize(512);
    for (auto& z : g.c) z = {rng.normal(), rng.normal()};
    const SpectralFrameGrid round = decompress(compress(g));
    double dev = 0.0;
    for (std::size_t i = 0; i < g.c.size(); ++i)
      dev = std::max(dev, std::abs(round.c[i] - g.c[i]));
    push(report, "compress_roundtrip", dev, 1e-12);
  }

  // SNR mixing realizes the requested ratio.
  {
    const Waveform clean = synth_clean(seed + 1, 8000, CleanKind::harmonic);
    const Waveform noise = synth_noise(seed + 2, 8000, NoiseKind::white);
    double dev = 0.0;
    for (double snr : {0.0, 5.0, 10.0, 15.0}) {
      const Waveform mixed = mix_at_snr(clean, noise, snr);
      double ec = 0.0, en = 0.0;
      for (int i = 0; i < clean.length(); ++i) {
        ec += clean.samples[i] * clean.samples[i];
        const double d = mixed.samples[i] - clean.samples[i];
        en += d * d;
      }
      dev = std::max(dev, std::abs(10.0 * std::log10(ec / en) - snr));
    }
    push(report, "mix_snr_db", dev, 1e-9);
  }

  // Per-frame windowed Parseval.
  {
    Waveform w;
    w.samples.resize(4096);
    for (double& s : w.samples) s = 0.1 * rng.normal();
    const SpectralFrameGrid g = stft(w, cfg);
    std::vector<double> win(cfg.window_len);
    for (int i = 0; i < cfg.window_len; ++i)
      win[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.window_len);
    double dev = 0.0;
    for (int t = 0; t < g.frames; ++t) {
      double te = 0.0;
      for (int i = 0; i < cfg.window_len; ++i) {
        const double v = win[i] * w.samples[t * cfg.hop + i];
        te += v * v;
      }
      double fe = std::norm(g.at(t, 0)) + std::norm(g.at(t, g.bins - 1));
      for (int f = 1; f < g.bins - 1; ++f) fe += 2.0 * std::norm(g.at(t, f));
      fe /= cfg.fft_size;
      dev = std::max(dev, std::abs(fe - te) / te);
    }
    push(report, "windowed_parseval", dev, 1e-6);
  }

  // Linearity of the analysis transform.
  {
    Waveform w1, w2, mix;
    w1.samples.resize(3000);
    w2.samples.resize(3000);
    mix.samples.resize(3000);
    for (int i = 0; i < 3000; ++i) {
      w1.samples[i] = rng.normal();
      w2.samples[i] = rng.normal();
      mix.samples[i] = 1.25 * w1.samples[i] - 0.5 * w2.samples[i];
    }
    const auto g1 = stft(w1, cfg), g2 = stft(w2, cfg), gm = stft(mix, cfg);
    double dev = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < gm.c.size(); ++i) {
      const auto want = 1.25 * g1.c[i] - 0.5 * g2.c[i];
      dev = std::max(dev, std::abs(gm.c[i] - want));
      scale = std::max(scale, std::abs(want));
    }
    push(report, "stft_linearity", dev / scale, 1e-12);
  }

  // A bin-centered sine concentrates in +-1 bin.
  {
    const int k = 40;
    Waveform w;
    w.samples.resize(4096);
    for (int n = 0; n < 4096; ++n)
      w.samples[n] = std::sin(2.0 * M_PI * k * n / cfg.fft_size);
    const SpectralFrameGrid g = stft(w, cfg);
    double worst = 1.0;
    for (int t = 0; t < g.frames; ++t) {
      double total = 0.0, local = 0.0;
      for (int f = 0; f < g.bins; ++f) {
        const double p = std::norm(g.at(t, f));
        total += p;
        if (f >= k - 1 && f <= k + 1) local += p;
      }
      worst = std::min(worst, local / total);
    }
    push(report, "sine_bin_concentration", 1.0 - worst, 0.01);
  }

  // iSTFT adjoint identity <A x, y> == <x, A^T y>.
  {
    const int frames = 4;
    SpectralFrameGrid g;
    g.bins = cfg.bins();
    g.frames = frames;
    g.cfg = cfg;
    g.c.resize(static_cast<std::size_t>(frames) * g.bins);
    for (auto& z : g.c) z = {rng.normal(), rng.normal()};
    Waveform cot;
    cot.samples.resize(cfg.window_len + (frames - 1) * cfg.hop);
    for (double& s : cot.samples) s = rng.normal();
    const Waveform y = istft(g);
    const SpectralFrameGrid adj = istft_adjoint(cot, cfg, frames);
    double lhs = 0.0;
    for (int i = 0; i < y.length(); ++i) lhs += y.samples[i] * cot.samples[i];
    double rhs = 0.0;
    for (std::size_t i = 0; i < g.c.size(); ++i)
      rhs += g.c[i].real() * adj.c[i].real() + g.c[i].imag() * adj.c[i].imag();
    push(report, "istft_adjoint_identity", std::abs(lhs - rhs) / std::abs(lhs),
         1e-12);
  }

  return report;
}

}  // namespace drift
