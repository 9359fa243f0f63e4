#include "drift/generator.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace drift {

void GeneratorParams::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("GeneratorParams: bad dims");
  if (paradigm == Paradigm::conditional && cond_dim < 1)
    throw std::invalid_argument("GeneratorParams: conditional needs cond_dim");
  if (paradigm == Paradigm::direct_mapping && input_skip &&
      input_dim != output_dim)
    throw std::invalid_argument("GeneratorParams: skip needs input_dim == output_dim");
  for (double v : theta)
    if (!std::isfinite(v))
      throw std::invalid_argument("GeneratorParams: non-finite parameter");
}

GeneratorParams make_generator(Paradigm paradigm, int input_dim,
                               const std::vector<int>& hidden_dims,
                               int output_dim, std::uint64_t seed,
                               int cond_dim, bool input_skip) {
  GeneratorParams p;
  p.paradigm = paradigm;
  p.input_dim = input_dim;
  p.output_dim = output_dim;
  p.cond_dim = paradigm == Paradigm::conditional ? cond_dim : 0;
  p.hidden_dims = hidden_dims;
  p.input_skip = paradigm == Paradigm::direct_mapping && input_skip;

  std::vector<int> widths;
  widths.push_back(input_dim);
  for (int h : hidden_dims) widths.push_back(h);
  widths.push_back(output_dim);

  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    GeneratorParams::Layer layer;
    layer.in = widths[l] + p.cond_dim;  // condition feeds every layer
    layer.out = widths[l + 1];
    layer.w_off = off;
    off += static_cast<std::size_t>(layer.in) * layer.out;
    layer.b_off = off;
    off += layer.out;
    p.layers.push_back(layer);
  }
  p.theta.assign(off, 0.0);

  RngStream rng(seed);
  const int last = static_cast<int>(p.layers.size()) - 1;
  for (int l = 0; l < last; ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.layers[l].in));
    for (double& w : p.weights(l)) w = scale * rng.normal();
    // biases stay zero
  }
  // Output layer zero-initialized: the direct paradigm starts at the
  // identity (through the skip), the conditional one at the zero map.
  p.validate();
  return p;
}

void NoiseSchedule::validate() const {
  if (!(0.0 < lo && lo < hi))
    throw std::invalid_argument("NoiseSchedule: need 0 < lo < hi");
  if (sigma_log < 0.0)
    throw std::invalid_argument("NoiseSchedule: sigma_log must be >= 0");
}

double sample_sigma(const NoiseSchedule& schedule, RngStream& rng) {
  schedule.validate();
  for (int it = 0; it < 100000; ++it) {
    const double s = std::exp(schedule.mu + schedule.sigma_log * rng.normal());
    if (s >= schedule.lo && s <= schedule.hi) return s;
  }
  throw std::runtime_error("sample_sigma: rejection did not terminate");
}

namespace {

// Shared stack evaluation. `input` is the first-layer feed (without the
// condition); `cond` may be empty.
std::vector<double> run_forward(const GeneratorParams& p,
                                std::span<const double> input,
                                std::span<const double> cond,
                                ForwardTrace* trace) {
  const int n_layers = static_cast<int>(p.layers.size());
  if (trace) {
    trace->valid = true;
    trace->net_input.assign(input.begin(), input.end());
    trace->cond.assign(cond.begin(), cond.end());
    trace->acts.assign(n_layers, {});
  }
  std::vector<double> cur(input.begin(), input.end());
  for (int l = 0; l < n_layers; ++l) {
    const auto& layer = p.layers[l];
    const int base_in = layer.in - p.cond_dim;
    if (static_cast<int>(cur.size()) != base_in)
      throw std::invalid_argument("generator: layer input size mismatch");
    std::vector<double> next(layer.out, 0.0);
    const double* W = p.theta.data() + layer.w_off;
    const double* b = p.theta.data() + layer.b_off;
    const bool last = l == n_layers - 1;
    for (int o = 0; o < layer.out; ++o) {
      const double* row = W + static_cast<std::size_t>(o) * layer.in;
      double acc = b[o];
      for (int i = 0; i < base_in; ++i) acc += row[i] * cur[i];
      for (int i = 0; i < p.cond_dim; ++i) acc += row[base_in + i] * cond[i];
      next[o] = last ? acc : std::tanh(acc);
    }
    if (trace) trace->acts[l] = next;
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

std::vector<double> forward_direct(std::span<const double> noisy_input,
                                   double sigma,
                                   std::span<const double> epsilon,
                                   const GeneratorParams& p,
                                   ForwardTrace* trace) {
  if (p.paradigm != Paradigm::direct_mapping)
    throw std::invalid_argument("forward_direct: paradigm mismatch");
  if (static_cast<int>(noisy_input.size()) != p.input_dim)
    throw std::invalid_argument("forward_direct: input dim mismatch");
  if (sigma < 0.0) throw std::invalid_argument("forward_direct: sigma < 0");
  if (sigma > 0.0 && epsilon.size() != noisy_input.size())
    throw std::invalid_argument("forward_direct: epsilon dim mismatch");

  std::vector<double> in(noisy_input.begin(), noisy_input.end());
  if (sigma > 0.0)
    for (std::size_t i = 0; i < in.size(); ++i) in[i] += sigma * epsilon[i];

  std::vector<double> out = run_forward(p, in, {}, trace);
  if (p.input_skip)
    for (int i = 0; i < p.output_dim; ++i) out[i] += in[i];
  return out;
}

std::vector<double> forward_conditional(std::span<const double> epsilon,
                                        std::span<const double> condition,
                                        const GeneratorParams& p,
                                        ForwardTrace* trace) {
  if (p.paradigm != Paradigm::conditional)
    throw std::invalid_argument("forward_conditional: paradigm mismatch");
  if (static_cast<int>(epsilon.size()) != p.input_dim)
    throw std::invalid_argument("forward_conditional: epsilon dim mismatch");
  if (static_cast<int>(condition.size()) != p.cond_dim)
    throw std::invalid_argument("forward_conditional: condition dim mismatch");
  return run_forward(p, epsilon, condition, trace);
}

void backward(const GeneratorParams& p, const ForwardTrace& trace,
              std::span<const double> output_cotangent,
              std::span<double> grads) {
  if (!trace.valid)
    throw std::invalid_argument("backward: no forward trace recorded");
  if (grads.size() != p.theta.size())
    throw std::invalid_argument("backward: gradient buffer size mismatch");
  if (static_cast<int>(output_cotangent.size()) != p.output_dim)
    throw std::invalid_argument("backward: cotangent dim mismatch");

  const int n_layers = static_cast<int>(p.layers.size());
  // g holds d/d(activation of layer l); the skip path adds nothing to the
  // parameter gradients.
  std::vector<double> g(output_cotangent.begin(), output_cotangent.end());
  std::vector<double> g_prev;
  for (int l = n_layers - 1; l >= 0; --l) {
    const auto& layer = p.layers[l];
    const int base_in = layer.in - p.cond_dim;
    const bool last = l == n_layers - 1;
    const std::vector<double>& in_act =
        l == 0 ? trace.net_input : trace.acts[l - 1];
    const double* W = p.theta.data() + layer.w_off;
    double* gW = grads.data() + layer.w_off;
    double* gb = grads.data() + layer.b_off;
    g_prev.assign(base_in, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double g_pre = g[o];
      if (!last) {
        const double a = trace.acts[l][o];
        g_pre *= 1.0 - a * a;
      }
      if (g_pre == 0.0) continue;
      const double* row = W + static_cast<std::size_t>(o) * layer.in;
      double* grow = gW + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < base_in; ++i) {
        grow[i] += g_pre * in_act[i];
        g_prev[i] += g_pre * row[i];
      }
      for (int i = 0; i < p.cond_dim; ++i)
        grow[base_in + i] += g_pre * trace.cond[i];
      gb[o] += g_pre;
    }
    g = g_prev;
  }
}

namespace {
constexpr std::uint32_t kCheckpointMagic = 0x4E454744;  // "DGEN"
}

void save_checkpoint(const std::string& path, const GeneratorParams& p) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("save_checkpoint: cannot open " + path);
  auto w32 = [&](std::uint32_t v) { std::fwrite(&v, 4, 1, fp); };
  w32(kCheckpointMagic);
  w32(1);  // version
  w32(p.paradigm == Paradigm::direct_mapping ? 0 : 1);
  w32(p.input_skip ? 1 : 0);
  w32(static_cast<std::uint32_t>(p.input_dim));
  w32(static_cast<std::uint32_t>(p.cond_dim));
  w32(static_cast<std::uint32_t>(p.output_dim));
  w32(static_cast<std::uint32_t>(p.hidden_dims.size()));
  for (int h : p.hidden_dims) w32(static_cast<std::uint32_t>(h));
  const std::uint64_t n = p.theta.size();
  std::fwrite(&n, 8, 1, fp);
  std::fwrite(p.theta.data(), sizeof(double), p.theta.size(), fp);
  std::fclose(fp);
}

GeneratorParams load_checkpoint(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("load_checkpoint: cannot open " + path);
  auto r32 = [&]() {
    std::uint32_t v = 0;
    if (std::fread(&v, 4, 1, fp) != 1) {
      std::fclose(fp);
      throw std::runtime_error("load_checkpoint: truncated header");
    }
    return v;
  };
  if (r32() != kCheckpointMagic)
    throw std::runtime_error("load_checkpoint: bad magic");
  if (r32() != 1) throw std::runtime_error("load_checkpoint: bad version");
  const Paradigm paradigm =
      r32() == 0 ? Paradigm::direct_mapping : Paradigm::conditional;
  const bool skip = r32() != 0;
  const int input_dim = static_cast<int>(r32());
  const int cond_dim = static_cast<int>(r32());
  const int output_dim = static_cast<int>(r32());
  const int n_hidden = static_cast<int>(r32());
  std::vector<int> hidden(n_hidden);
  for (int& h : hidden) h = static_cast<int>(r32());

  GeneratorParams p = make_generator(paradigm, input_dim, hidden, output_dim,
                                     /*seed=*/0, cond_dim, skip);
  std::uint64_t n = 0;
  if (std::fread(&n, 8, 1, fp) != 1 || n != p.theta.size()) {
    std::fclose(fp);
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  }
  if (std::fread(p.theta.data(), sizeof(double), n, fp) != n) {
    std::fclose(fp);
    throw std::runtime_error("load_checkpoint: truncated parameters");
  }
  std::fclose(fp);
  return p;
}

}  // namespace drift
