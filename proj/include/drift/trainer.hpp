#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "drift/core.hpp"
#include "drift/encoder.hpp"
#include "drift/generator.hpp"
#include "drift/signal.hpp"

namespace drift {

struct AdamWConfig {
  double lr = 5e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::int64_t t = 0;
  std::vector<double> m, v;
  void init(std::size_t n) {
    t = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

// Decoupled update: moments from the gradient, weight decay applied
// multiplicatively outside the moment step.
void adamw_update(std::span<double> params, std::span<const double> grads,
                  AdamWState& st, const AdamWConfig& cfg);

enum class Pairing { paired, unpaired };

struct TrainConfig {
  int batch_size = 16;
  int epochs = 1;
  AdamWConfig opt;
  KernelConfig kernel;
  Paradigm paradigm = Paradigm::direct_mapping;
  Pairing pairing = Pairing::paired;
  std::optional<NoiseSchedule> sigma_schedule;  // nullopt: fixed sigma = 0
  std::uint64_t seed = 0;
  // Negative set per generated frame: the whole batch (default) or only
  // the frame's own utterance.
  bool negatives_full_batch = true;
  bool exclude_self = false;
  void validate() const;
};

// Z+ / Z- per tapped layer, frames concatenated item-major.
struct SetPair {
  std::vector<LatentBatch> pos, neg;
};
SetPair build_sets(std::span<const LatentStack> clean,
                   std::span<const LatentStack> generated);

// Frozen per-layer regression targets z + V(z), aligned with the negative
// set's frame order. Plain values: nothing differentiates through them.
struct DriftTarget {
  std::vector<LatentBatch> layers;
  std::vector<double> mean_drift_norm;  // per layer
};

// `neg_groups` lists (start, count) row ranges of the negative set that
// share one drift field; a single full-range group reproduces the
// whole-batch estimator.
DriftTarget make_targets(const SetPair& sets,
                         std::span<const std::pair<int, int>> neg_groups,
                         const KernelConfig& kernel, const DriftOptions& opts);

struct DriftLoss {
  double loss = 0.0;
  std::vector<LatentStack> cotangents;  // shaped like `generated`
};

// Mean over layers of mean over frames of ||z - target||^2, plus
// d(loss)/dz for every generated frame latent.
DriftLoss drift_loss(std::span<const LatentStack> generated,
                     const DriftTarget& targets);

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  std::vector<double> mean_drift_norm;
  double sigma_mean = 0.0;
  std::optional<double> mmd2;
};

// Non-finite loss; message carries the diagnostic dump.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Latent-space task: generator outputs are themselves the drift-space
// points (identity feature map, no signal pipeline).
struct LatentTrainState {
  GeneratorParams gen;
  AdamWState opt;
  TrainConfig cfg;
  DriftOptions dopts;
  RngStream rng{0};
  int step = 0;
};

LatentTrainState make_latent_state(GeneratorParams gen, const TrainConfig& cfg);
StepMetrics train_step_latent(LatentTrainState& st,
                              const LatentBatch& target_batch);

// Full signal-pipeline task: spectrogram in, drift loss in encoder space.
struct PipelineTrainState {
  GeneratorParams gen;
  AdamWState opt;
  TrainConfig cfg;
  DriftOptions dopts;
  EncoderSpec enc;
  StftConfig stft_cfg;
  CompressionConfig comp;
  RngStream rng{0};
  int step = 0;
  int mmd_interval = 0;  // 0: never
  const std::vector<Waveform>* clean_pool = nullptr;  // unpaired positives
  // Gain applied to waveforms entering the frozen encoder. Calibrates the
  // latent distance scale against the fixed kernel temperatures; by
  // linearity this only rescales the drift geometry.
  double latent_gain = 1.0;
};

// The state's latent view of a waveform: gain, then the frozen encoder.
LatentStack encode_scaled(const PipelineTrainState& st, const Waveform& w);

PipelineTrainState make_pipeline_state(GeneratorParams gen, EncoderSpec enc,
                                       const TrainConfig& cfg,
                                       const StftConfig& stft_cfg = {},
                                       const CompressionConfig& comp = {});

// One optimizer step over a batch of (noisy, clean) excerpts. In unpaired
// mode the positive set comes from st.clean_pool and `clean` is only used
// for diagnostics.
StepMetrics train_step(PipelineTrainState& st, std::span<const Waveform> noisy,
                       std::span<const Waveform> clean);

// Single-evaluation enhancement. Direct paradigm runs with sigma = 0 and
// consumes no randomness; the conditional paradigm draws a fresh epsilon
// per frame from eps_rng.
Waveform enhance(const PipelineTrainState& st, const Waveform& noisy,
                 RngStream* eps_rng = nullptr);

}  // namespace drift
