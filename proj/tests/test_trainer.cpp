#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <span>
#include <limits>
#include <vector>

#include "drift/metrics.hpp"
#include "drift/rng.hpp"
#include "drift/trainer.hpp"

using namespace drift;

namespace {

LatentBatch random_batch(RngStream& rng, int n, int d, double offset = 0.0) {
  LatentBatch b(d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> p(d);
    for (double& x : p) x = rng.normal() + offset;
    b.push(p);
  }
  return b;
}

// Reference AdamW written directly from the published update rule,
// independent of the library implementation.
struct RefAdamW {
  std::vector<double> m, v;
  long t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g, double lr,
            double wd, double b1, double b2, double eps) {
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(b1, t));
      const double vhat = v[i] / (1 - std::pow(b2, t));
      p[i] = p[i] - lr * mhat / (std::sqrt(vhat) + eps) - lr * wd * p[i];
    }
  }
};

}  // namespace

TEST_CASE("adamw: zero gradient with zero decay is a no-op") {
  std::vector<double> p{1.0, -2.0, 0.5, 0.0};
  const std::vector<double> before = p;
  const std::vector<double> g(4, 0.0);
  AdamWState st;
  st.init(4);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adamw_update(p, g, st, cfg);
  CHECK(p == before);
}

TEST_CASE("adamw: first step closed form") {
  std::vector<double> p{1.0};
  const std::vector<double> g{0.25};
  AdamWState st;
  st.init(1);
  AdamWConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.0;
  adamw_update(p, g, st, cfg);
  // At t=1 the bias corrections cancel: step = lr * g / (|g| + eps).
  const double want = 1.0 - 1e-2 * 0.25 / (0.25 + cfg.eps);
  CHECK(p[0] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("adamw matches a reference implementation over 100 steps") {
  RngStream rng(3);
  const int n = 40;
  std::vector<double> p(n), pref(n);
  for (int i = 0; i < n; ++i) p[i] = pref[i] = rng.normal();
  AdamWState st;
  st.init(n);
  AdamWConfig cfg;
  cfg.lr = 3e-3;
  cfg.weight_decay = 0.02;
  RefAdamW ref;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g(n);
    for (double& x : g) x = rng.normal();
    adamw_update(p, g, st, cfg);
    ref.step(pref, g, cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);
    for (int i = 0; i < n; ++i)
      CHECK(p[i] == doctest::Approx(pref[i]).epsilon(1e-12));
  }
}

TEST_CASE("build_sets concatenates frames per layer") {
  RngStream rng(5);
  std::vector<LatentStack> clean(2), gen(2);
  for (int i = 0; i < 2; ++i) {
    clean[i].frames = 49;
    clean[i].layers.push_back(random_batch(rng, 49, 8));
    gen[i].frames = 49;
    gen[i].layers.push_back(random_batch(rng, 49, 8));
  }
  const SetPair sets = build_sets(clean, gen);
  REQUIRE(sets.pos.size() == 1);
  CHECK(sets.pos[0].count() == 98);
  CHECK(sets.neg[0].count() == 98);
  CHECK(sets.pos[0].role == BatchRole::positive);
  CHECK(sets.neg[0].role == BatchRole::negative);
  // Item-major order.
  CHECK(sets.pos[0].point(0)[0] == clean[0].layers[0].point(0)[0]);
  CHECK(sets.pos[0].point(49)[0] == clean[1].layers[0].point(0)[0]);

  CHECK_THROWS_AS(build_sets({}, gen), std::invalid_argument);
}

TEST_CASE("drift_loss equals the squared drift magnitude") {
  // Single frame, single layer, drift (3,4): loss is 25.
  LatentStack gen;
  gen.frames = 1;
  gen.layers.emplace_back(2);
  gen.layers[0].push(std::vector<double>{1.0, -1.0});

  DriftTarget target;
  target.layers.emplace_back(2);
  target.layers[0].push(std::vector<double>{1.0 + 3.0, -1.0 + 4.0});
  target.mean_drift_norm = {5.0};

  const DriftLoss out = drift_loss(std::span{&gen, 1}, target);
  CHECK(out.loss == doctest::Approx(25.0).epsilon(1e-15));
  CHECK(out.cotangents[0].layers[0].point(0)[0] == doctest::Approx(-6.0));
  CHECK(out.cotangents[0].layers[0].point(0)[1] == doctest::Approx(-8.0));
}

TEST_CASE("drift_loss: zero drift means zero loss and zero cotangents") {
  RngStream rng(7);
  LatentStack gen;
  gen.frames = 12;
  gen.layers.push_back(random_batch(rng, 12, 5));
  DriftTarget target;
  target.layers.push_back(gen.layers[0]);
  const DriftLoss out = drift_loss(std::span{&gen, 1}, target);
  CHECK(out.loss == 0.0);
  for (double c : out.cotangents[0].layers[0].data) CHECK(c == 0.0);
}

TEST_CASE("drift_loss value matches an independent recomputation") {
  RngStream rng(9);
  std::vector<LatentStack> gen(3);
  for (auto& s : gen) {
    s.frames = 7;
    s.layers.push_back(random_batch(rng, 7, 4));
    s.layers.push_back(random_batch(rng, 7, 6));
  }
  SetPair sets;
  sets.pos.push_back(random_batch(rng, 21, 4, 0.5));
  sets.pos.push_back(random_batch(rng, 21, 6, 0.5));
  sets.neg.resize(2);
  sets.neg[0].dim = 4;
  sets.neg[1].dim = 6;
  for (const auto& s : gen) {
    sets.neg[0].data.insert(sets.neg[0].data.end(), s.layers[0].data.begin(),
                            s.layers[0].data.end());
    sets.neg[1].data.insert(sets.neg[1].data.end(), s.layers[1].data.begin(),
                            s.layers[1].data.end());
  }

  KernelConfig kernel;
  DriftOptions opts;
  opts.route = DriftOptions::Route::weighted_means;
  const std::pair<int, int> whole{0, 21};
  const DriftTarget target = make_targets(sets, {&whole, 1}, kernel, opts);
  const DriftLoss out = drift_loss(gen, target);

  // Recompute mean over layers and frames of ||V||^2 from the field.
  double want = 0.0;
  for (int l = 0; l < 2; ++l) {
    const DriftField field =
        drift_multi_temperature(sets.neg[l], sets.pos[l], sets.neg[l], kernel, opts);
    double layer = 0.0;
    for (int i = 0; i < 21; ++i) {
      double ss = 0.0;
      for (int k = 0; k < field.dim; ++k) ss += field.vector(i)[k] * field.vector(i)[k];
      layer += ss;
    }
    want += layer / 21.0;
  }
  want /= 2.0;
  CHECK(std::abs(out.loss - want) <= 1e-12 * std::max(1.0, want));
}

TEST_CASE("stop-gradient: cotangents depend on targets only through the residual") {
  RngStream rng(11);
  LatentStack gen;
  gen.frames = 4;
  gen.layers.push_back(random_batch(rng, 4, 3));
  DriftTarget t1;
  t1.layers.push_back(random_batch(rng, 4, 3));
  DriftTarget t2 = t1;
  t2.layers[0].data[5] += 0.125;

  const DriftLoss a = drift_loss(std::span{&gen, 1}, t1);
  const DriftLoss b = drift_loss(std::span{&gen, 1}, t2);
  // The perturbed target changes the loss and exactly one cotangent entry,
  // by the residual formula 2(z - t)/(L*N); no path through the field.
  CHECK(a.loss != b.loss);
  for (int f = 0; f < 4; ++f) {
    for (int k = 0; k < 3; ++k) {
      const double ca = a.cotangents[0].layers[0].point(f)[k];
      const double cb = b.cotangents[0].layers[0].point(f)[k];
      const double za = gen.layers[0].point(f)[k];
      const double ta = t1.layers[0].point(f)[k];
      const double tb = t2.layers[0].point(f)[k];
      CHECK(ca == doctest::Approx(2.0 * (za - ta) / 4.0).epsilon(1e-12));
      CHECK(cb == doctest::Approx(2.0 * (za - tb) / 4.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("make_targets groups must tile the negatives") {
  RngStream rng(13);
  SetPair sets;
  sets.pos.push_back(random_batch(rng, 6, 2, 0.4));
  sets.neg.push_back(random_batch(rng, 6, 2));
  KernelConfig kernel;
  DriftOptions opts;
  std::vector<std::pair<int, int>> bad{{0, 3}, {4, 2}};
  CHECK_THROWS_AS(make_targets(sets, bad, kernel, opts), std::invalid_argument);
  std::vector<std::pair<int, int>> good{{0, 3}, {3, 3}};
  const DriftTarget t = make_targets(sets, good, kernel, opts);
  CHECK(t.layers[0].count() == 6);
}

TEST_CASE("latent training is deterministic and reaches the equilibrium no-op") {
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.seed = 77;
  cfg.opt.lr = 1e-3;
  cfg.opt.weight_decay = 0.0;

  auto run = [&](int steps) {
    GeneratorParams gen =
        make_generator(Paradigm::direct_mapping, 2, {16, 16}, 2, 101);
    LatentTrainState st = make_latent_state(std::move(gen), cfg);
    RngStream data_rng(5);
    std::vector<double> losses;
    for (int s = 0; s < steps; ++s) {
      const LatentBatch target = random_batch(data_rng, 32, 2, 2.0);
      losses.push_back(train_step_latent(st, target).loss);
    }
    return losses;
  };
  const auto a = run(5), b = run(5);
  CHECK(a == b);

  // Injecting the generated batch as the positive set: exact equilibrium,
  // zero loss, parameters unchanged.
  GeneratorParams gen =
      make_generator(Paradigm::direct_mapping, 2, {16, 16}, 2, 101);
  LatentTrainState st = make_latent_state(std::move(gen), cfg);
  // Reproduce the x_hat batch the step will generate: same rng sequence.
  RngStream probe(cfg.seed);
  LatentBatch predicted(2, BatchRole::positive);
  std::vector<double> eps(2);
  for (int k = 0; k < 32; ++k) {
    for (double& e : eps) e = probe.normal();
    predicted.push(forward_direct(eps, 0.0, {}, st.gen));
  }
  const std::vector<double> before = st.gen.theta;
  const StepMetrics m = train_step_latent(st, predicted);
  CHECK(m.loss == 0.0);
  CHECK(m.mean_drift_norm[0] == 0.0);
  CHECK(st.gen.theta == before);
}

TEST_CASE("pipeline step runs, is finite and deterministic") {
  TrainConfig cfg;
  cfg.seed = 31;
  cfg.opt.lr = 1e-3;
  cfg.sigma_schedule = NoiseSchedule{};

  const StftConfig stft_cfg;
  const int frame_dim = 2 * stft_cfg.bins();
  auto build = [&]() {
    GeneratorParams gen = make_generator(Paradigm::direct_mapping, frame_dim,
                                         {24}, frame_dim, 7);
    EncoderSpec enc = make_random_stack_encoder({16, 16}, {0, 1}, 5, 400, 320);
    return make_pipeline_state(std::move(gen), std::move(enc), cfg, stft_cfg);
  };

  std::vector<Waveform> noisy, clean;
  for (int i = 0; i < 2; ++i) {
    clean.push_back(synth_clean(100 + i, 2200, CleanKind::harmonic));
    noisy.push_back(
        mix_at_snr(clean.back(), synth_noise(200 + i, 2200, NoiseKind::white), 0.0));
  }

  PipelineTrainState s1 = build(), s2 = build();
  std::vector<double> l1, l2;
  for (int step = 0; step < 3; ++step) {
    l1.push_back(train_step(s1, noisy, clean).loss);
    l2.push_back(train_step(s2, noisy, clean).loss);
  }
  CHECK(l1 == l2);
  for (double l : l1) {
    CHECK(std::isfinite(l));
    CHECK(l > 0.0);
  }
  CHECK(s1.gen.theta == s2.gen.theta);
}

TEST_CASE("chained pipeline gradient matches finite differences") {
  // Freeze the drift targets, then check d(loss)/d(theta) through
  // generator -> decompression -> iSTFT -> encoder against central
  // differences.
  TrainConfig cfg;
  cfg.seed = 3;
  const StftConfig stft_cfg;
  const CompressionConfig comp;
  const int frame_dim = 2 * stft_cfg.bins();

  GeneratorParams gen = make_generator(Paradigm::direct_mapping, frame_dim,
                                       {12}, frame_dim, 11);
  RngStream wiggle(13);
  for (double& x : gen.theta) x += 0.02 * wiggle.normal();
  const EncoderSpec enc = make_random_stack_encoder({10, 10}, {0, 1}, 5, 400, 320);

  const Waveform noisy =
      mix_at_snr(synth_clean(1, 1400, CleanKind::harmonic),
                 synth_noise(2, 1400, NoiseKind::white), 0.0);
  const SpectralFrameGrid yc = compress(stft(noisy, stft_cfg), comp);

  auto generate = [&](const GeneratorParams& p,
                      std::vector<ForwardTrace>* traces,
                      SpectralFrameGrid* xc_out) {
    SpectralFrameGrid xc = yc;
    if (traces) traces->resize(yc.frames);
    for (int t = 0; t < yc.frames; ++t) {
      std::vector<double> u(static_cast<std::size_t>(frame_dim));
      for (int f = 0; f < yc.bins; ++f) {
        u[2 * f] = yc.at(t, f).real();
        u[2 * f + 1] = yc.at(t, f).imag();
      }
      const auto out =
          forward_direct(u, 0.0, {}, p, traces ? &(*traces)[t] : nullptr);
      for (int f = 0; f < yc.bins; ++f)
        xc.at(t, f) = {out[2 * f], out[2 * f + 1]};
    }
    if (xc_out) *xc_out = xc;
    LatentStack stack;
    Waveform w_hat = istft(decompress(xc, comp));
    stack = encode(w_hat, enc);
    return std::pair{std::move(stack), std::move(w_hat)};
  };

  // Targets from the initial parameters, then frozen.
  std::vector<ForwardTrace> traces;
  SpectralFrameGrid xc0;
  auto [stack0, w0] = generate(gen, &traces, &xc0);
  DriftTarget target;
  RngStream trng(17);
  for (const auto& layer : stack0.layers) {
    LatentBatch t = layer;
    for (double& x : t.data) x += 0.05 * trng.normal();
    target.layers.push_back(std::move(t));
  }

  auto loss_of = [&](const GeneratorParams& p) {
    auto [stack, w] = generate(p, nullptr, nullptr);
    return drift_loss(std::span{&stack, 1}, target).loss;
  };

  const DriftLoss base = drift_loss(std::span{&stack0, 1}, target);
  Waveform g_wave;
  g_wave.sample_rate = w0.sample_rate;
  g_wave.samples = encode_gradient(w0, enc, base.cotangents[0]);
  const SpectralFrameGrid g_lin = istft_adjoint(g_wave, stft_cfg, xc0.frames);
  const SpectralFrameGrid g_comp = decompress_vjp(xc0, g_lin, comp);
  std::vector<double> grads(gen.theta.size(), 0.0);
  for (int t = 0; t < xc0.frames; ++t) {
    std::vector<double> cot(static_cast<std::size_t>(frame_dim));
    for (int f = 0; f < g_comp.bins; ++f) {
      cot[2 * f] = g_comp.at(t, f).real();
      cot[2 * f + 1] = g_comp.at(t, f).imag();
    }
    backward(gen, traces[t], cot, grads);
  }

  RngStream pick(19);
  const double h = 1e-5;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t idx = pick.next_u64() % gen.theta.size();
    GeneratorParams plus = gen, minus = gen;
    plus.theta[idx] += h;
    minus.theta[idx] -= h;
    const double fd = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
    const double denom = std::max(std::abs(fd), 1e-9);
    CHECK(std::abs(grads[idx] - fd) / denom < 1e-4);
  }
}

TEST_CASE("non-finite targets raise the numerical failure") {
  TrainConfig cfg;
  cfg.seed = 1;
  GeneratorParams gen = make_generator(Paradigm::direct_mapping, 2, {8}, 2, 3);
  LatentTrainState st = make_latent_state(std::move(gen), cfg);
  LatentBatch bad(2);
  bad.push(std::vector<double>{1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(train_step_latent(st, bad), std::invalid_argument);
}
