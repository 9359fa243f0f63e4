#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drift/core.hpp"
#include "drift/signal.hpp"

namespace drift {

enum class EncoderKind { identity, random_stack };

// Frozen latent extractor standing in for a pretrained feature encoder.
// All parameters are materialized at construction and never mutated.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::identity;
  std::vector<int> layer_dims;
  std::vector<int> taps;  // strictly increasing layer indices
  std::uint64_t seed = 0;
  int frame_len = 400;  // 25 ms at 16 kHz
  int frame_hop = 320;  // 20 ms

  // random_stack: per layer, row-major out x in weights and out biases.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  int frame_count(int num_samples) const {
    return num_samples < frame_len ? 0
                                   : (num_samples - frame_len) / frame_hop + 1;
  }
  int num_taps() const { return static_cast<int>(taps.size()); }
  int tap_dim(int t) const { return layer_dims[taps[t]]; }
  void validate() const;
};

EncoderSpec make_identity_encoder(int frame_len = 400, int frame_hop = 320);

// Affine layers with N(0, 1/fan_in) entries followed by tanh.
EncoderSpec make_random_stack_encoder(const std::vector<int>& layer_dims,
                                      const std::vector<int>& taps,
                                      std::uint64_t seed, int frame_len = 400,
                                      int frame_hop = 320);

// Frame-level latents, one LatentBatch per tapped layer.
struct LatentStack {
  int frames = 0;
  std::vector<LatentBatch> layers;
};

LatentStack encode(const Waveform& w, const EncoderSpec& spec);

// d( sum_taps <upstream[t], Phi_t(w)> )/dw; `upstream` is shaped like
// encode(w, spec)'s output. Frame gradients overlap-add back into the
// waveform.
std::vector<double> encode_gradient(const Waveform& w, const EncoderSpec& spec,
                                    const LatentStack& upstream);

// Plain-text key=value serialization.
void save_encoder_spec(const std::string& path, const EncoderSpec& spec);
EncoderSpec load_encoder_spec(const std::string& path);

}  // namespace drift
