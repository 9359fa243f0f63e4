#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "drift/experiments.hpp"
#include "drift/metrics.hpp"

namespace drift {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

void write_summary(const std::string& dir, const json& j) {
  auto out = open_out(dir + "/summary.json");
  out << j.dump(2) << "\n";
}

void write_trace_row(std::ofstream& out, const StepMetrics& m) {
  out << m.step << "," << fmt(m.loss);
  out << ",\"";
  for (std::size_t l = 0; l < m.mean_drift_norm.size(); ++l)
    out << (l ? ";" : "") << fmt(m.mean_drift_norm[l]);
  out << "\"," << fmt(m.sigma_mean) << ",";
  if (m.mmd2) out << fmt(*m.mmd2);
  out << "\n";
}

// The enhanced signal is the interior of the synthesis; reference signals
// must be cut to the same aligned span.
Waveform aligned_span(const Waveform& w, const PipelineTrainState& st, int len) {
  return segment(w, st.stft_cfg.window_len, len);
}

// Compressed magnitude spectrum per frame: nonnegative features whose
// centroid is the mean spectral envelope, so distribution motion shows up
// as centroid motion.
LatentBatch envelope_frames(const Waveform& w, const StftConfig& sc,
                            const CompressionConfig& comp) {
  const SpectralFrameGrid g = compress(stft(w, sc), comp);
  LatentBatch out(g.bins);
  std::vector<double> row(g.bins);
  for (int t = 0; t < g.frames; ++t) {
    for (int f = 0; f < g.bins; ++f) row[f] = std::abs(g.at(t, f));
    out.push(row);
  }
  return out;
}

LatentBatch last_tap_frames(std::span<const Waveform> waves,
                            const PipelineTrainState& st) {
  LatentBatch out;
  for (const auto& w : waves) {
    const LatentStack s = encode_scaled(st, w);
    const LatentBatch& layer = s.layers.back();
    if (out.dim == 0) out.dim = layer.dim;
    out.data.insert(out.data.end(), layer.data.begin(), layer.data.end());
  }
  return out;
}

std::pair<double, double> centroid2(std::span<const double> xy) {
  double cx = 0.0, cy = 0.0;
  const std::size_t n = xy.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    cx += xy[2 * i];
    cy += xy[2 * i + 1];
  }
  return {cx / n, cy / n};
}

}  // namespace

double DenoiseResult::enhanced_at(int epoch) const {
  for (const auto& [e, v] : eval_history)
    if (e == epoch) return v;
  throw std::runtime_error("no evaluation recorded at epoch " +
                           std::to_string(epoch));
}

Toy2dResult run_toy2d(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.task != "toy2d") throw ConfigError("run_toy2d: wrong task");
  fs::create_directories(cfg.out_dir);
  const std::uint64_t seed = *cfg.seed;

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.sigma_schedule.reset();
  GeneratorParams gen = make_generator(Paradigm::direct_mapping, 2,
                                       cfg.gen_hidden, 2, seed + 0x5eed);
  LatentTrainState st = make_latent_state(std::move(gen), tc);

  RngStream data_rng(seed + 1);
  RngStream eval_rng(seed + 2);
  auto sample_target = [&](RngStream& rng, int n) {
    LatentBatch b(2, BatchRole::positive);
    for (int i = 0; i < n; ++i) {
      double p[2];
      if (cfg.toy_target == "ring") {
        const int mode = rng.uniform_int(0, cfg.toy_ring_modes - 1);
        const double ang = 2.0 * M_PI * mode / cfg.toy_ring_modes;
        p[0] = cfg.toy_ring_radius * std::cos(ang) + cfg.toy_ring_sigma * rng.normal();
        p[1] = cfg.toy_ring_radius * std::sin(ang) + cfg.toy_ring_sigma * rng.normal();
      } else {
        p[0] = rng.normal();
        p[1] = rng.normal();
      }
      b.push(p);
    }
    return b;
  };

  const LatentBatch eval_target = sample_target(eval_rng, cfg.toy_eval_size);
  std::vector<double> eval_eps(static_cast<std::size_t>(cfg.toy_eval_size) * 2);
  for (double& x : eval_eps) x = eval_rng.normal();

  auto pushforward = [&]() {
    LatentBatch pts(2, BatchRole::negative);
    for (int i = 0; i < cfg.toy_eval_size; ++i) {
      const std::span<const double> eps{eval_eps.data() + 2 * i, 2};
      pts.push(forward_direct(eps, 0.0, {}, st.gen));
    }
    return pts;
  };
  auto eval_mmd = [&]() { return mmd2(pushforward(), eval_target, 0.5); };

  auto write_snapshot = [&](int step) {
    char name[64];
    std::snprintf(name, sizeof(name), "/snapshot_step_%06d.csv", step);
    auto out = open_out(cfg.out_dir + name);
    out << "x,y,label\n";
    const LatentBatch pts = pushforward();
    for (int i = 0; i < pts.count(); ++i)
      out << fmt(pts.point(i)[0]) << "," << fmt(pts.point(i)[1]) << ",generated\n";
    for (int i = 0; i < eval_target.count(); ++i)
      out << fmt(eval_target.point(i)[0]) << "," << fmt(eval_target.point(i)[1])
          << ",target\n";
  };

  Toy2dResult res;
  res.trace_csv = cfg.out_dir + "/trace.csv";
  auto trace = open_out(res.trace_csv);
  trace << "step,loss,mean_drift_norm,sigma_mean,mmd2\n";

  res.initial_mmd2 = eval_mmd();
  double last_mmd = res.initial_mmd2;
  for (int step = 1; step <= cfg.toy_steps; ++step) {
    const LatentBatch batch = sample_target(data_rng, tc.batch_size);
    StepMetrics m = train_step_latent(st, batch);
    m.step = step;
    if (step % cfg.toy_eval_interval == 0 || step == cfg.toy_steps) {
      last_mmd = eval_mmd();
      m.mmd2 = last_mmd;
    }
    write_trace_row(trace, m);
    for (int s : cfg.toy_snapshot_steps)
      if (s == step) write_snapshot(step);
  }
  res.final_mmd2 = last_mmd;

  write_summary(cfg.out_dir, json{{"task", "toy2d"},
                                  {"seed", seed},
                                  {"initial_mmd2", res.initial_mmd2},
                                  {"final_mmd2", res.final_mmd2},
                                  {"ratio", res.final_mmd2 / res.initial_mmd2}});
  return res;
}

namespace {

struct Corpus {
  std::vector<Waveform> clean, noise;
  std::vector<Waveform> eval_clean, eval_noisy;
};

Corpus build_corpus(const ExperimentConfig& cfg, std::uint64_t seed,
                    CleanKind kind) {
  NoiseKind nk = NoiseKind::white;
  if (cfg.noise_kind == "lowpass") nk = NoiseKind::lowpass;
  if (cfg.noise_kind == "bandpass") nk = NoiseKind::bandpass;

  Corpus c;
  for (int i = 0; i < cfg.corpus_size; ++i) {
    c.clean.push_back(synth_clean(seed + 1000 + i, cfg.excerpt_len, kind));
    c.noise.push_back(synth_noise(seed + 2000 + i, cfg.excerpt_len, nk));
  }
  for (int i = 0; i < cfg.eval_size; ++i) {
    c.eval_clean.push_back(synth_clean(seed + 3000 + i, cfg.excerpt_len, kind));
    const Waveform n = synth_noise(seed + 4000 + i, cfg.excerpt_len, nk);
    c.eval_noisy.push_back(mix_at_snr(c.eval_clean.back(), n, cfg.eval_snr_db));
  }
  return c;
}

PipelineTrainState build_pipeline(const ExperimentConfig& cfg,
                                  std::uint64_t seed, Pairing pairing) {
  const StftConfig stft_cfg;
  const int frame_dim = 2 * stft_cfg.bins();
  EncoderSpec enc =
      cfg.encoder_kind == "identity"
          ? make_identity_encoder()
          : make_random_stack_encoder(cfg.encoder_dims, cfg.encoder_taps,
                                      seed + 5000);
  const bool conditional = cfg.train.paradigm == Paradigm::conditional;
  GeneratorParams gen = make_generator(
      cfg.train.paradigm, frame_dim, cfg.gen_hidden, frame_dim, seed + 6000,
      conditional ? frame_dim : 0);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.pairing = pairing;
  if (conditional || cfg.sigma_mode == "zero")
    tc.sigma_schedule.reset();
  else
    tc.sigma_schedule = NoiseSchedule{};
  PipelineTrainState st = make_pipeline_state(std::move(gen), std::move(enc),
                                              tc, stft_cfg);
  st.mmd_interval = cfg.mmd_interval;
  st.latent_gain = cfg.latent_gain;
  return st;
}

// Mean held-out SI-SDR of the enhanced and the untouched noisy signal.
std::pair<double, double> eval_si_sdr(const PipelineTrainState& st,
                                      const Corpus& c, std::uint64_t eps_seed) {
  double acc_e = 0.0, acc_n = 0.0;
  RngStream eps_rng(eps_seed);
  for (std::size_t i = 0; i < c.eval_noisy.size(); ++i) {
    const Waveform enh = enhance(st, c.eval_noisy[i], &eps_rng);
    const Waveform clean_t = aligned_span(c.eval_clean[i], st, enh.length());
    const Waveform noisy_t = aligned_span(c.eval_noisy[i], st, enh.length());
    acc_e += si_sdr(enh, clean_t);
    acc_n += si_sdr(noisy_t, clean_t);
  }
  const double n = static_cast<double>(c.eval_noisy.size());
  return {acc_e / n, acc_n / n};
}

// One training epoch of dynamically mixed batches; returns steps run.
int run_epoch(PipelineTrainState& st, const Corpus& c, RngStream& mix_rng,
              const ExperimentConfig& cfg, std::ofstream& trace) {
  const int n = static_cast<int>(c.clean.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[mix_rng.uniform_int(0, i)]);

  const int steps = n / st.cfg.batch_size;
  for (int b = 0; b < steps; ++b) {
    std::vector<Waveform> noisy, clean;
    for (int k = 0; k < st.cfg.batch_size; ++k) {
      const int idx = order[b * st.cfg.batch_size + k];
      const int nj = mix_rng.uniform_int(0, n - 1);
      const double snr =
          cfg.snr_db[mix_rng.uniform_int(0, static_cast<int>(cfg.snr_db.size()) - 1)];
      noisy.push_back(mix_at_snr(c.clean[idx], c.noise[nj], snr));
      clean.push_back(c.clean[idx]);
    }
    write_trace_row(trace, train_step(st, noisy, clean));
  }
  return steps;
}

}  // namespace

DenoiseResult run_denoise(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.task != "denoise") throw ConfigError("run_denoise: wrong task");
  fs::create_directories(cfg.out_dir);
  const std::uint64_t seed = *cfg.seed;

  const Corpus corpus = build_corpus(cfg, seed, CleanKind::harmonic);
  PipelineTrainState st = build_pipeline(cfg, seed, Pairing::paired);
  RngStream mix_rng(seed + 7000);

  DenoiseResult res;
  res.trace_csv = cfg.out_dir + "/trace.csv";
  auto trace = open_out(res.trace_csv);
  trace << "step,loss,mean_drift_norm,sigma_mean,mmd2\n";
  auto evals = open_out(cfg.out_dir + "/eval.csv");
  evals << "epoch,enhanced_si_sdr_db,noisy_si_sdr_db\n";

  // Distribution snapshots of a fixed held-out utterance, as compressed
  // spectral-envelope frames with one shared projection basis so centroid
  // motion is comparable across epochs.
  Pca2 basis;
  bool basis_ready = false;
  auto snapshot = [&](int epoch) {
    RngStream eps_rng(seed + 8100);
    const Waveform enh = enhance(st, corpus.eval_noisy[0], &eps_rng);
    const LatentBatch gen_f = envelope_frames(enh, st.stft_cfg, st.comp);
    const LatentBatch clean_f = envelope_frames(
        aligned_span(corpus.eval_clean[0], st, enh.length()), st.stft_cfg, st.comp);
    const LatentBatch noisy_f = envelope_frames(
        aligned_span(corpus.eval_noisy[0], st, enh.length()), st.stft_cfg, st.comp);
    if (!basis_ready) {
      LatentBatch pooled(gen_f.dim);
      for (const LatentBatch* b : {&clean_f, &noisy_f, &gen_f})
        pooled.data.insert(pooled.data.end(), b->data.begin(), b->data.end());
      basis = pca2_project(pooled);
      basis_ready = true;
    }
    const auto xg = pca2_apply(basis, gen_f);
    const auto xc = pca2_apply(basis, clean_f);
    const auto xn = pca2_apply(basis, noisy_f);
    char name[64];
    std::snprintf(name, sizeof(name), "/snapshot_epoch_%03d.csv", epoch);
    auto out = open_out(cfg.out_dir + name);
    out << "x,y,label\n";
    for (std::size_t i = 0; i < xc.size() / 2; ++i)
      out << fmt(xc[2 * i]) << "," << fmt(xc[2 * i + 1]) << ",clean\n";
    for (std::size_t i = 0; i < xn.size() / 2; ++i)
      out << fmt(xn[2 * i]) << "," << fmt(xn[2 * i + 1]) << ",noisy\n";
    for (std::size_t i = 0; i < xg.size() / 2; ++i)
      out << fmt(xg[2 * i]) << "," << fmt(xg[2 * i + 1]) << ",generated\n";
    const auto [gx, gy] = centroid2(xg);
    const auto [cx, cy] = centroid2(xc);
    res.snapshot_epochs.push_back(epoch);
    res.snapshot_centroid_dist.push_back(std::hypot(gx - cx, gy - cy));
  };

  const auto [e0, n0] = eval_si_sdr(st, corpus, seed + 8000);
  res.noisy_si_sdr = n0;
  res.eval_history.push_back({0, e0});
  evals << 0 << "," << fmt(e0) << "," << fmt(n0) << "\n";

  for (int epoch = 1; epoch <= st.cfg.epochs; ++epoch) {
    run_epoch(st, corpus, mix_rng, cfg, trace);
    if (epoch % cfg.eval_interval_epochs == 0 || epoch == st.cfg.epochs) {
      const auto [e, n] = eval_si_sdr(st, corpus, seed + 8000);
      res.eval_history.push_back({epoch, e});
      evals << epoch << "," << fmt(e) << "," << fmt(n) << "\n";
    }
    for (int s : cfg.snapshot_epochs)
      if (s == epoch) snapshot(epoch);
  }

  // Enhanced examples and the final checkpoint.
  RngStream eps_rng(seed + 8200);
  for (int i = 0; i < std::min<int>(cfg.wav_examples, cfg.eval_size); ++i) {
    const Waveform enh = enhance(st, corpus.eval_noisy[i], &eps_rng);
    char name[64];
    std::snprintf(name, sizeof(name), "/example_%02d", i);
    const std::string base = cfg.out_dir + name;
    write_wav_pcm16(base + "_noisy.wav",
                    aligned_span(corpus.eval_noisy[i], st, enh.length()));
    write_wav_pcm16(base + "_clean.wav",
                    aligned_span(corpus.eval_clean[i], st, enh.length()));
    write_wav_pcm16(base + "_enhanced.wav", enh);
  }
  res.checkpoint = cfg.out_dir + "/generator.ckpt";
  save_checkpoint(res.checkpoint, st.gen);
  save_encoder_spec(cfg.out_dir + "/encoder.txt", st.enc);

  json j{{"task", "denoise"},
         {"seed", seed},
         {"noisy_si_sdr_db", res.noisy_si_sdr},
         {"final_enhanced_si_sdr_db", res.eval_history.back().second}};
  if (!res.snapshot_centroid_dist.empty()) {
    j["snapshot_epochs"] = res.snapshot_epochs;
    j["snapshot_centroid_dist"] = res.snapshot_centroid_dist;
  }
  write_summary(cfg.out_dir, j);
  return res;
}

UnpairedResult run_unpaired(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.task != "unpaired") throw ConfigError("run_unpaired: wrong task");
  fs::create_directories(cfg.out_dir);
  const std::uint64_t seed = *cfg.seed;

  // Family A (harmonic) provides the noisy inputs and their true cleans;
  // the drift targets come from the disjoint family-B pool (chirps).
  const Corpus corpus = build_corpus(cfg, seed, CleanKind::harmonic);
  std::vector<Waveform> pool;
  for (int i = 0; i < cfg.pool_size; ++i)
    pool.push_back(synth_clean(seed + 9000 + i, cfg.excerpt_len, CleanKind::am_chirp));

  UnpairedResult res;

  PipelineTrainState unpaired_st = build_pipeline(cfg, seed, Pairing::unpaired);
  unpaired_st.clean_pool = &pool;
  PipelineTrainState paired_st = build_pipeline(cfg, seed, Pairing::paired);

  const LatentBatch pool_latents = last_tap_frames(pool, unpaired_st);
  auto generated_latents = [&](const PipelineTrainState& st) {
    std::vector<Waveform> enh;
    RngStream eps_rng(seed + 8300);
    for (const auto& n : corpus.eval_noisy) enh.push_back(enhance(st, n, &eps_rng));
    return last_tap_frames(enh, st);
  };
  auto mean_centroid = [&](std::span<const Waveform> waves) {
    double acc = 0.0;
    for (const auto& w : waves) acc += spectral_centroid(w);
    return acc / static_cast<double>(waves.size());
  };
  auto generated_centroid = [&](const PipelineTrainState& st) {
    std::vector<Waveform> enh;
    RngStream eps_rng(seed + 8300);
    for (const auto& n : corpus.eval_noisy) enh.push_back(enhance(st, n, &eps_rng));
    return mean_centroid(enh);
  };

  res.initial_mmd2_pool = mmd2(generated_latents(unpaired_st), pool_latents, 0.5);
  res.centroid_noisy_hz = mean_centroid(corpus.eval_noisy);
  res.centroid_pool_hz = mean_centroid(pool);
  res.centroid_generated_init_hz = generated_centroid(unpaired_st);

  res.trace_csv = cfg.out_dir + "/unpaired_trace.csv";
  auto trace_u = open_out(res.trace_csv);
  trace_u << "step,loss,mean_drift_norm,sigma_mean,mmd2\n";
  auto trace_p = open_out(cfg.out_dir + "/paired_trace.csv");
  trace_p << "step,loss,mean_drift_norm,sigma_mean,mmd2\n";
  auto mmd_csv = open_out(cfg.out_dir + "/mmd_pool.csv");
  mmd_csv << "epoch,mmd2_generated_vs_pool\n";
  mmd_csv << 0 << "," << fmt(res.initial_mmd2_pool) << "\n";

  // Same mixing stream seed on both sides: the two runs see identical
  // noisy batches and differ only in the positive sets.
  RngStream mix_u(seed + 7000), mix_p(seed + 7000);
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    run_epoch(unpaired_st, corpus, mix_u, cfg, trace_u);
    run_epoch(paired_st, corpus, mix_p, cfg, trace_p);
    if (epoch % cfg.eval_interval_epochs == 0 || epoch == cfg.train.epochs) {
      const double m = mmd2(generated_latents(unpaired_st), pool_latents, 0.5);
      mmd_csv << epoch << "," << fmt(m) << "\n";
      if (epoch == cfg.train.epochs) res.final_mmd2_pool = m;
    }
  }

  res.final_si_sdr_unpaired = eval_si_sdr(unpaired_st, corpus, seed + 8000).first;
  res.final_si_sdr_paired = eval_si_sdr(paired_st, corpus, seed + 8000).first;
  res.centroid_generated_final_hz = generated_centroid(unpaired_st);

  write_summary(
      cfg.out_dir,
      json{{"task", "unpaired"},
           {"seed", seed},
           {"initial_mmd2_pool", res.initial_mmd2_pool},
           {"final_mmd2_pool", res.final_mmd2_pool},
           {"mmd_ratio", res.final_mmd2_pool / res.initial_mmd2_pool},
           {"final_si_sdr_unpaired_db", res.final_si_sdr_unpaired},
           {"final_si_sdr_paired_db", res.final_si_sdr_paired},
           {"centroid_noisy_hz", res.centroid_noisy_hz},
           {"centroid_pool_hz", res.centroid_pool_hz},
           {"centroid_generated_init_hz", res.centroid_generated_init_hz},
           {"centroid_generated_final_hz", res.centroid_generated_final_hz}});
  return res;
}

}  // namespace drift
