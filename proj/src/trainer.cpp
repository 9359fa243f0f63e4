#include "drift/trainer.hpp"

#include <cmath>
#include <sstream>

#include "drift/metrics.hpp"

namespace drift {

void adamw_update(std::span<double> params, std::span<const double> grads,
                  AdamWState& st, const AdamWConfig& cfg) {
  if (params.size() != grads.size() || params.size() != st.m.size() ||
      params.size() != st.v.size())
    throw std::invalid_argument("adamw_update: shape mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] = params[i] * decay - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (!(opt.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs < 0");
  kernel.validate();
  if (sigma_schedule) sigma_schedule->validate();
}

SetPair build_sets(std::span<const LatentStack> clean,
                   std::span<const LatentStack> generated) {
  if (clean.empty() || generated.empty())
    throw std::invalid_argument("build_sets: empty batch");
  const std::size_t n_layers = clean[0].layers.size();
  for (const auto& s : clean)
    if (s.layers.size() != n_layers)
      throw std::invalid_argument("build_sets: layer structure mismatch");
  for (const auto& s : generated)
    if (s.layers.size() != n_layers)
      throw std::invalid_argument("build_sets: layer structure mismatch");

  SetPair sets;
  sets.pos.resize(n_layers);
  sets.neg.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    sets.pos[l].dim = clean[0].layers[l].dim;
    sets.pos[l].role = BatchRole::positive;
    sets.neg[l].dim = generated[0].layers[l].dim;
    sets.neg[l].role = BatchRole::negative;
    for (const auto& s : clean) {
      if (s.layers[l].dim != sets.pos[l].dim)
        throw std::invalid_argument("build_sets: layer dim mismatch");
      sets.pos[l].data.insert(sets.pos[l].data.end(), s.layers[l].data.begin(),
                              s.layers[l].data.end());
    }
    for (const auto& s : generated) {
      if (s.layers[l].dim != sets.neg[l].dim)
        throw std::invalid_argument("build_sets: layer dim mismatch");
      sets.neg[l].data.insert(sets.neg[l].data.end(), s.layers[l].data.begin(),
                              s.layers[l].data.end());
    }
  }
  return sets;
}

namespace {

LatentBatch slice_rows(const LatentBatch& b, int start, int count) {
  LatentBatch out(b.dim, b.role);
  out.data.assign(b.data.begin() + static_cast<std::size_t>(start) * b.dim,
                  b.data.begin() +
                      static_cast<std::size_t>(start + count) * b.dim);
  return out;
}

}  // namespace

DriftTarget make_targets(const SetPair& sets,
                         std::span<const std::pair<int, int>> neg_groups,
                         const KernelConfig& kernel, const DriftOptions& opts) {
  const std::size_t n_layers = sets.neg.size();
  if (n_layers == 0 || sets.pos.size() != n_layers)
    throw std::invalid_argument("make_targets: bad set pair");

  DriftTarget target;
  target.layers.resize(n_layers);
  target.mean_drift_norm.assign(n_layers, 0.0);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LatentBatch& neg = sets.neg[l];
    const int total = neg.count();
    int covered = 0;
    for (const auto& [start, count] : neg_groups) {
      if (start != covered || count < 1)
        throw std::invalid_argument("make_targets: groups must tile the negatives");
      covered += count;
    }
    if (covered != total)
      throw std::invalid_argument("make_targets: groups must tile the negatives");

    LatentBatch& tl = target.layers[l];
    tl.dim = neg.dim;
    tl.data.resize(neg.data.size());
    double norm_sum = 0.0;
    for (const auto& [start, count] : neg_groups) {
      const bool whole = start == 0 && count == total;
      const LatentBatch slice = whole ? LatentBatch{} : slice_rows(neg, start, count);
      const LatentBatch& queries = whole ? neg : slice;
      const DriftField field =
          drift_multi_temperature(queries, sets.pos[l], queries, kernel, opts);
      for (int i = 0; i < count; ++i) {
        const auto z = queries.point(i);
        const auto v = field.vector(i);
        double ss = 0.0;
        auto dst = tl.point(start + i);
        for (int k = 0; k < neg.dim; ++k) {
          dst[k] = z[k] + v[k];
          ss += v[k] * v[k];
        }
        norm_sum += std::sqrt(ss);
      }
    }
    target.mean_drift_norm[l] = norm_sum / total;
  }
  return target;
}

DriftLoss drift_loss(std::span<const LatentStack> generated,
                     const DriftTarget& targets) {
  if (generated.empty()) throw std::invalid_argument("drift_loss: empty batch");
  const std::size_t n_layers = targets.layers.size();
  for (const auto& s : generated)
    if (s.layers.size() != n_layers)
      throw std::invalid_argument("drift_loss: layer structure mismatch");

  int total_frames = 0;
  for (const auto& s : generated) total_frames += s.frames;
  for (std::size_t l = 0; l < n_layers; ++l)
    if (targets.layers[l].count() != total_frames)
      throw std::invalid_argument("drift_loss: target/generated frame mismatch");

  DriftLoss out;
  out.cotangents.resize(generated.size());
  for (std::size_t it = 0; it < generated.size(); ++it) {
    out.cotangents[it].frames = generated[it].frames;
    out.cotangents[it].layers.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
      out.cotangents[it].layers[l].dim = generated[it].layers[l].dim;
      out.cotangents[it].layers[l].data.assign(
          generated[it].layers[l].data.size(), 0.0);
    }
  }

  const double layer_w = 1.0 / static_cast<double>(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LatentBatch& tl = targets.layers[l];
    const double frame_w = 1.0 / static_cast<double>(total_frames);
    double layer_loss = 0.0;
    int row = 0;
    for (std::size_t it = 0; it < generated.size(); ++it) {
      const LatentBatch& gl = generated[it].layers[l];
      if (gl.dim != tl.dim)
        throw std::invalid_argument("drift_loss: layer dim mismatch");
      LatentBatch& cl = out.cotangents[it].layers[l];
      for (int f = 0; f < generated[it].frames; ++f, ++row) {
        const auto z = gl.point(f);
        const auto t = tl.point(row);
        auto c = cl.point(f);
        for (int k = 0; k < gl.dim; ++k) {
          const double diff = z[k] - t[k];
          layer_loss += diff * diff;
          c[k] = 2.0 * diff * frame_w * layer_w;
        }
      }
    }
    out.loss += layer_loss * frame_w * layer_w;
  }
  return out;
}

LatentTrainState make_latent_state(GeneratorParams gen, const TrainConfig& cfg) {
  cfg.validate();
  gen.validate();
  if (gen.paradigm != Paradigm::direct_mapping)
    throw std::invalid_argument(
        "make_latent_state: latent task uses the direct paradigm");
  LatentTrainState st;
  st.gen = std::move(gen);
  st.cfg = cfg;
  st.dopts.route = DriftOptions::Route::weighted_means;
  st.dopts.exclude_self = cfg.exclude_self;
  st.opt.init(st.gen.theta.size());
  st.rng = RngStream(cfg.seed);
  return st;
}

namespace {

std::string dump_diagnostics(int step, double loss,
                             std::span<const double> sigmas,
                             std::span<const double> drift_norms) {
  std::ostringstream os;
  os << "non-finite loss " << loss << " at step " << step << "; sigma=[";
  for (std::size_t i = 0; i < sigmas.size(); ++i)
    os << (i ? "," : "") << sigmas[i];
  os << "]; mean_drift_norm=[";
  for (std::size_t i = 0; i < drift_norms.size(); ++i)
    os << (i ? "," : "") << drift_norms[i];
  os << "]";
  return os.str();
}

}  // namespace

StepMetrics train_step_latent(LatentTrainState& st,
                              const LatentBatch& target_batch) {
  target_batch.validate();
  const int batch = target_batch.count();
  if (batch < 1) throw std::invalid_argument("train_step_latent: empty batch");
  if (target_batch.dim != st.gen.output_dim)
    throw std::invalid_argument("train_step_latent: target dim mismatch");

  // Generate: one forward evaluation per sample.
  std::vector<ForwardTrace> traces(batch);
  LatentStack gen_stack;
  gen_stack.frames = batch;
  gen_stack.layers.assign(1, LatentBatch(st.gen.output_dim, BatchRole::negative));
  gen_stack.layers[0].data.resize(static_cast<std::size_t>(batch) *
                                  st.gen.output_dim);
  std::vector<double> eps(st.gen.input_dim);
  for (int k = 0; k < batch; ++k) {
    for (double& e : eps) e = st.rng.normal();
    const auto out = forward_direct(eps, 0.0, {}, st.gen, &traces[k]);
    auto dst = gen_stack.layers[0].point(k);
    for (int i = 0; i < st.gen.output_dim; ++i) dst[i] = out[i];
  }

  SetPair sets;
  sets.pos.push_back(target_batch);
  sets.pos[0].role = BatchRole::positive;
  sets.neg.push_back(gen_stack.layers[0]);

  const std::pair<int, int> whole{0, batch};
  const DriftTarget targets =
      make_targets(sets, std::span{&whole, 1}, st.cfg.kernel, st.dopts);
  const DriftLoss loss = drift_loss(std::span{&gen_stack, 1}, targets);
  if (!std::isfinite(loss.loss))
    throw NumericalError(dump_diagnostics(st.step, loss.loss, {},
                                          targets.mean_drift_norm));

  std::vector<double> grads(st.gen.theta.size(), 0.0);
  for (int k = 0; k < batch; ++k)
    backward(st.gen, traces[k], loss.cotangents[0].layers[0].point(k), grads);
  adamw_update(st.gen.theta, grads, st.opt, st.cfg.opt);

  StepMetrics m;
  m.step = st.step++;
  m.loss = loss.loss;
  m.mean_drift_norm = targets.mean_drift_norm;
  return m;
}

PipelineTrainState make_pipeline_state(GeneratorParams gen, EncoderSpec enc,
                                       const TrainConfig& cfg,
                                       const StftConfig& stft_cfg,
                                       const CompressionConfig& comp) {
  cfg.validate();
  gen.validate();
  enc.validate();
  const int frame_dim = 2 * stft_cfg.bins();
  if (gen.input_dim != frame_dim || gen.output_dim != frame_dim)
    throw std::invalid_argument(
        "make_pipeline_state: generator frame dim must be 2*bins");
  if (gen.paradigm == Paradigm::conditional && gen.cond_dim != frame_dim)
    throw std::invalid_argument(
        "make_pipeline_state: conditional cond_dim must be 2*bins");
  PipelineTrainState st;
  st.gen = std::move(gen);
  st.enc = std::move(enc);
  st.cfg = cfg;
  st.stft_cfg = stft_cfg;
  st.comp = comp;
  st.dopts.route = DriftOptions::Route::weighted_means;
  st.dopts.exclude_self = cfg.exclude_self;
  st.opt.init(st.gen.theta.size());
  st.rng = RngStream(cfg.seed);
  return st;
}

namespace {

std::vector<double> grid_frame(const SpectralFrameGrid& g, int t) {
  std::vector<double> u(static_cast<std::size_t>(2) * g.bins);
  for (int f = 0; f < g.bins; ++f) {
    u[2 * f] = g.at(t, f).real();
    u[2 * f + 1] = g.at(t, f).imag();
  }
  return u;
}

void set_grid_frame(SpectralFrameGrid& g, int t, std::span<const double> u) {
  for (int f = 0; f < g.bins; ++f) g.at(t, f) = {u[2 * f], u[2 * f + 1]};
}

Waveform apply_gain(const Waveform& w, double gain) {
  Waveform out = w;
  for (double& s : out.samples) s *= gain;
  return out;
}

}  // namespace

LatentStack encode_scaled(const PipelineTrainState& st, const Waveform& w) {
  if (st.latent_gain == 1.0) return encode(w, st.enc);
  return encode(apply_gain(w, st.latent_gain), st.enc);
}

StepMetrics train_step(PipelineTrainState& st, std::span<const Waveform> noisy,
                       std::span<const Waveform> clean) {
  const int batch = static_cast<int>(noisy.size());
  if (batch < 1) throw std::invalid_argument("train_step: empty batch");
  const bool paired = st.cfg.pairing == Pairing::paired;
  if (paired && clean.size() != noisy.size())
    throw std::invalid_argument("train_step: paired batch size mismatch");
  if (!paired && (st.clean_pool == nullptr || st.clean_pool->empty()))
    throw std::invalid_argument("train_step: unpaired mode needs a clean pool");

  // RNG order per step: pool indices (unpaired), then per item one sigma
  // followed by its per-frame epsilons.
  std::vector<int> pool_idx;
  if (!paired) {
    pool_idx.resize(batch);
    for (int& ix : pool_idx)
      ix = st.rng.uniform_int(0, static_cast<int>(st.clean_pool->size()) - 1);
  }

  const bool direct = st.gen.paradigm == Paradigm::direct_mapping;
  // The synthesis window normalizer vanishes toward the edges, so edge
  // samples are ill-conditioned both ways; latents are taken from the
  // interior only through this trim.
  const int trim = st.stft_cfg.window_len;
  std::vector<double> sigmas(batch, 0.0);
  std::vector<SpectralFrameGrid> xc_hat(batch);
  std::vector<std::vector<ForwardTrace>> traces(batch);
  std::vector<Waveform> w_full(batch), w_int(batch);
  std::vector<LatentStack> gen_stacks(batch), clean_stacks(batch);

  for (int i = 0; i < batch; ++i) {
    const SpectralFrameGrid yc = compress(stft(noisy[i], st.stft_cfg), st.comp);
    const int frames = yc.frames;
    if (direct && st.cfg.sigma_schedule)
      sigmas[i] = sample_sigma(*st.cfg.sigma_schedule, st.rng);

    xc_hat[i] = yc;
    traces[i].resize(frames);
    std::vector<double> eps(st.gen.input_dim);
    for (int t = 0; t < frames; ++t) {
      const std::vector<double> u = grid_frame(yc, t);
      std::vector<double> out;
      if (direct) {
        if (sigmas[i] > 0.0)
          for (double& e : eps) e = st.rng.normal();
        out = forward_direct(u, sigmas[i], eps, st.gen, &traces[i][t]);
      } else {
        for (double& e : eps) e = st.rng.normal();
        out = forward_conditional(eps, u, st.gen, &traces[i][t]);
      }
      set_grid_frame(xc_hat[i], t, out);
    }
    w_full[i] = istft(decompress(xc_hat[i], st.comp));
    const int interior = w_full[i].length() - 2 * trim;
    if (interior < st.enc.frame_len)
      throw std::invalid_argument(
          "train_step: excerpt too short for interior latent frames");
    w_int[i] = segment(w_full[i], trim, interior);
    gen_stacks[i] = encode_scaled(st, w_int[i]);
    const Waveform& pos_src = paired ? clean[i] : (*st.clean_pool)[pool_idx[i]];
    const int keep = std::min(pos_src.length() - trim, interior);
    clean_stacks[i] = encode_scaled(st, segment(pos_src, trim, keep));
  }

  const SetPair sets = build_sets(clean_stacks, gen_stacks);
  std::vector<std::pair<int, int>> groups;
  if (st.cfg.negatives_full_batch) {
    groups.push_back({0, sets.neg[0].count()});
  } else {
    int cursor = 0;
    for (int i = 0; i < batch; ++i) {
      groups.push_back({cursor, gen_stacks[i].frames});
      cursor += gen_stacks[i].frames;
    }
  }
  const DriftTarget targets =
      make_targets(sets, groups, st.cfg.kernel, st.dopts);
  const DriftLoss loss = drift_loss(gen_stacks, targets);
  if (!std::isfinite(loss.loss))
    throw NumericalError(
        dump_diagnostics(st.step, loss.loss, sigmas, targets.mean_drift_norm));

  // Backward chain: encoder -> iSTFT adjoint -> decompression -> generator.
  std::vector<double> grads(st.gen.theta.size(), 0.0);
  for (int i = 0; i < batch; ++i) {
    const std::vector<double> g_int = encode_gradient(
        apply_gain(w_int[i], st.latent_gain), st.enc, loss.cotangents[i]);
    Waveform g_wave;
    g_wave.sample_rate = w_full[i].sample_rate;
    g_wave.samples.assign(w_full[i].samples.size(), 0.0);
    for (std::size_t k = 0; k < g_int.size(); ++k)
      g_wave.samples[trim + k] = st.latent_gain * g_int[k];
    const SpectralFrameGrid g_lin =
        istft_adjoint(g_wave, st.stft_cfg, xc_hat[i].frames);
    const SpectralFrameGrid g_comp = decompress_vjp(xc_hat[i], g_lin, st.comp);
    for (int t = 0; t < xc_hat[i].frames; ++t)
      backward(st.gen, traces[i][t], grid_frame(g_comp, t), grads);
  }
  adamw_update(st.gen.theta, grads, st.opt, st.cfg.opt);

  StepMetrics m;
  m.step = st.step;
  m.loss = loss.loss;
  m.mean_drift_norm = targets.mean_drift_norm;
  double sig_sum = 0.0;
  for (double s : sigmas) sig_sum += s;
  m.sigma_mean = sig_sum / batch;
  if (st.mmd_interval > 0 && st.step % st.mmd_interval == 0) {
    const std::size_t last = sets.neg.size() - 1;
    m.mmd2 = mmd2(sets.neg[last], sets.pos[last], 0.5);
  }
  ++st.step;
  return m;
}

Waveform enhance(const PipelineTrainState& st, const Waveform& noisy,
                 RngStream* eps_rng) {
  const SpectralFrameGrid yc = compress(stft(noisy, st.stft_cfg), st.comp);
  SpectralFrameGrid xc = yc;
  std::vector<double> eps(st.gen.input_dim);
  for (int t = 0; t < yc.frames; ++t) {
    const std::vector<double> u = grid_frame(yc, t);
    std::vector<double> out;
    if (st.gen.paradigm == Paradigm::direct_mapping) {
      out = forward_direct(u, 0.0, {}, st.gen);
    } else {
      if (!eps_rng)
        throw std::invalid_argument("enhance: conditional paradigm needs an rng");
      for (double& e : eps) e = eps_rng->normal();
      out = forward_conditional(eps, u, st.gen);
    }
    set_grid_frame(xc, t, out);
  }
  // The enhancement product is the well-conditioned interior of the
  // synthesis, aligned with input samples [window_len, length - window_len).
  const Waveform full = istft(decompress(xc, st.comp));
  const int trim = st.stft_cfg.window_len;
  if (full.length() <= 2 * trim)
    throw std::invalid_argument("enhance: input too short for an interior");
  return segment(full, trim, full.length() - 2 * trim);
}

}  // namespace drift
