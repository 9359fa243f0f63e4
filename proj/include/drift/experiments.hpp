#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drift/trainer.hpp"

namespace drift {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string task;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  TrainConfig train;
  std::vector<int> gen_hidden;

  // toy2d
  int toy_steps = 5000;
  int toy_eval_interval = 50;
  int toy_eval_size = 512;
  std::string toy_target = "ring";  // ring | gaussian
  int toy_ring_modes = 8;
  double toy_ring_radius = 2.5;
  double toy_ring_sigma = 0.25;
  std::vector<int> toy_snapshot_steps{1, 500, 1250, 5000};

  // denoise / unpaired
  int excerpt_len = 4800;
  int corpus_size = 96;
  int eval_size = 16;
  int pool_size = 64;  // unpaired clean pool
  std::vector<double> snr_db{0.0, 5.0, 10.0, 15.0};
  double eval_snr_db = 0.0;
  std::string noise_kind = "white";  // white | lowpass | bandpass
  std::string encoder_kind = "random_stack";
  double latent_gain = 1.0;
  std::vector<int> encoder_dims{64, 64, 64};
  std::vector<int> encoder_taps{0, 1, 2};
  std::vector<int> snapshot_epochs{1, 10, 25, 100};
  int eval_interval_epochs = 5;
  int mmd_interval = 20;
  int wav_examples = 3;
  std::string sigma_mode = "schedule";  // schedule | zero

  // harness
  bool perturb = false;
  int oracle_instances = 1000;
  int gradient_instances = 20;

  void validate() const;
};

// Built-in per-task defaults; `load_config` starts from these and applies
// `[section] key=value` lines.
ExperimentConfig default_config(const std::string& task);
ExperimentConfig load_config(const std::string& path, const std::string& task);

struct Toy2dResult {
  double initial_mmd2 = 0.0;
  double final_mmd2 = 0.0;
  std::string trace_csv;
};
Toy2dResult run_toy2d(const ExperimentConfig& cfg);

struct DenoiseResult {
  double noisy_si_sdr = 0.0;  // held-out noisy vs clean
  std::vector<std::pair<int, double>> eval_history;  // (epoch, enhanced si-sdr)
  std::vector<int> snapshot_epochs;
  std::vector<double> snapshot_centroid_dist;  // generated vs clean, PCA plane
  std::string trace_csv;
  std::string checkpoint;

  double enhanced_at(int epoch) const;
};
DenoiseResult run_denoise(const ExperimentConfig& cfg);

struct UnpairedResult {
  double initial_mmd2_pool = 0.0;  // generated vs independent clean pool
  double final_mmd2_pool = 0.0;
  double final_si_sdr_unpaired = 0.0;  // vs the (mismatched) true cleans
  double final_si_sdr_paired = 0.0;    // paired twin at equal steps
  double centroid_noisy_hz = 0.0;
  double centroid_pool_hz = 0.0;
  double centroid_generated_init_hz = 0.0;
  double centroid_generated_final_hz = 0.0;
  std::string trace_csv;
};
UnpairedResult run_unpaired(const ExperimentConfig& cfg);

struct PropertyReport {
  struct Entry {
    std::string name;
    double max_dev = 0.0;
    double tol = 0.0;
    bool pass = false;
  };
  std::vector<Entry> entries;
  bool all_pass() const;
  void print() const;
  const Entry& find(const std::string& name) const;
};

// Field-level property suite: oracle equivalence, equilibrium, symmetries,
// gradient checks. `perturb` injects a deliberate defect (negative
// control).
PropertyReport run_drift_properties(std::uint64_t seed, bool perturb,
                                    int oracle_instances = 1000,
                                    int gradient_instances = 20);

// Signal-chain property suite: round-trips, Parseval, SNR realization.
PropertyReport run_signal_properties(std::uint64_t seed);

}  // namespace drift
