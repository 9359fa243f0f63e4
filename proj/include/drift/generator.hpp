#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drift/rng.hpp"

namespace drift {

enum class Paradigm { direct_mapping, conditional };

// One-step mapping function: a fully connected stack with tanh hidden
// activations and a linear, zero-initialized output layer. The direct
// paradigm adds an input skip so the initial map is the identity on the
// noisy input; the conditional paradigm concatenates the condition to
// every layer's input.
struct GeneratorParams {
  Paradigm paradigm = Paradigm::direct_mapping;
  int input_dim = 0;
  int output_dim = 0;
  int cond_dim = 0;  // conditional only
  std::vector<int> hidden_dims;
  bool input_skip = true;  // direct only

  struct Layer {
    int in = 0, out = 0;
    std::size_t w_off = 0, b_off = 0;
  };
  std::vector<Layer> layers;
  std::vector<double> theta;  // all weights and biases, flat

  std::span<double> weights(int l) {
    return {theta.data() + layers[l].w_off,
            static_cast<std::size_t>(layers[l].in) * layers[l].out};
  }
  std::span<const double> weights(int l) const {
    return {theta.data() + layers[l].w_off,
            static_cast<std::size_t>(layers[l].in) * layers[l].out};
  }
  std::span<double> bias(int l) {
    return {theta.data() + layers[l].b_off,
            static_cast<std::size_t>(layers[l].out)};
  }
  std::span<const double> bias(int l) const {
    return {theta.data() + layers[l].b_off,
            static_cast<std::size_t>(layers[l].out)};
  }
  void validate() const;
};

GeneratorParams make_generator(Paradigm paradigm, int input_dim,
                               const std::vector<int>& hidden_dims,
                               int output_dim, std::uint64_t seed,
                               int cond_dim = 0, bool input_skip = true);

struct NoiseSchedule {
  double mu = -3.0;
  double sigma_log = 1.2;
  double lo = 0.01;
  double hi = 0.3;
  void validate() const;
};

// log(sigma) ~ N(mu, sigma_log^2), rejected until sigma lands in [lo, hi].
double sample_sigma(const NoiseSchedule& schedule, RngStream& rng);

// Intermediate activations recorded by a forward pass, consumed by
// backward().
struct ForwardTrace {
  bool valid = false;
  std::vector<double> net_input;  // direct: noisy + sigma*eps; conditional: eps
  std::vector<double> cond;       // conditional only
  std::vector<std::vector<double>> acts;  // per layer output (last is linear)
};

std::vector<double> forward_direct(std::span<const double> noisy_input,
                                   double sigma,
                                   std::span<const double> epsilon,
                                   const GeneratorParams& p,
                                   ForwardTrace* trace = nullptr);

std::vector<double> forward_conditional(std::span<const double> epsilon,
                                        std::span<const double> condition,
                                        const GeneratorParams& p,
                                        ForwardTrace* trace = nullptr);

// Accumulates d<output_cotangent, f(.)>/dtheta into grads (same layout as
// p.theta). Throws if the trace is not from a forward pass.
void backward(const GeneratorParams& p, const ForwardTrace& trace,
              std::span<const double> output_cotangent,
              std::span<double> grads);

// Flat binary checkpoint: shape header plus little-endian float64 data.
void save_checkpoint(const std::string& path, const GeneratorParams& p);
GeneratorParams load_checkpoint(const std::string& path);

}  // namespace drift
