#include "drift/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "drift/rng.hpp"

namespace drift {

void EncoderSpec::validate() const {
  if (frame_len < 1 || frame_hop < 1)
    throw std::invalid_argument("EncoderSpec: bad framing");
  if (layer_dims.empty()) throw std::invalid_argument("EncoderSpec: no layers");
  if (taps.empty()) throw std::invalid_argument("EncoderSpec: no taps");
  int prev = -1;
  for (int t : taps) {
    if (t <= prev || t >= static_cast<int>(layer_dims.size()))
      throw std::invalid_argument(
          "EncoderSpec: taps must be strictly increasing layer indices");
    prev = t;
  }
  if (kind == EncoderKind::identity) {
    if (layer_dims.size() != 1 || layer_dims[0] != frame_len)
      throw std::invalid_argument("EncoderSpec: identity layer must be the frame");
  } else {
    if (weights.size() != layer_dims.size() || biases.size() != layer_dims.size())
      throw std::invalid_argument("EncoderSpec: missing layer parameters");
  }
}

EncoderSpec make_identity_encoder(int frame_len, int frame_hop) {
  EncoderSpec s;
  s.kind = EncoderKind::identity;
  s.frame_len = frame_len;
  s.frame_hop = frame_hop;
  s.layer_dims = {frame_len};
  s.taps = {0};
  s.validate();
  return s;
}

EncoderSpec make_random_stack_encoder(const std::vector<int>& layer_dims,
                                      const std::vector<int>& taps,
                                      std::uint64_t seed, int frame_len,
                                      int frame_hop) {
  EncoderSpec s;
  s.kind = EncoderKind::random_stack;
  s.layer_dims = layer_dims;
  s.taps = taps;
  s.seed = seed;
  s.frame_len = frame_len;
  s.frame_hop = frame_hop;
  RngStream rng(seed);
  int fan_in = frame_len;
  for (int dim : layer_dims) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(static_cast<std::size_t>(dim) * fan_in);
    for (double& x : w) x = scale * rng.normal();
    std::vector<double> b(dim);
    for (double& x : b) x = scale * rng.normal();
    s.weights.push_back(std::move(w));
    s.biases.push_back(std::move(b));
    fan_in = dim;
  }
  s.validate();
  return s;
}

namespace {

void check_wave(const Waveform& w, const EncoderSpec& spec) {
  spec.validate();
  w.validate();
  if (w.length() < spec.frame_len)
    throw std::invalid_argument("encode: waveform shorter than one frame");
}

// Runs the stack on one frame; `acts[l]` gets the post-tanh output of
// layer l.
void run_stack(const EncoderSpec& spec, const double* frame,
               std::vector<std::vector<double>>& acts) {
  const int n_layers = static_cast<int>(spec.layer_dims.size());
  acts.resize(n_layers);
  const double* in = frame;
  int in_dim = spec.frame_len;
  for (int l = 0; l < n_layers; ++l) {
    const int out_dim = spec.layer_dims[l];
    acts[l].assign(out_dim, 0.0);
    const double* W = spec.weights[l].data();
    for (int o = 0; o < out_dim; ++o) {
      double acc = spec.biases[l][o];
      const double* row = W + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) acc += row[i] * in[i];
      acts[l][o] = std::tanh(acc);
    }
    in = acts[l].data();
    in_dim = out_dim;
  }
}

}  // namespace

LatentStack encode(const Waveform& w, const EncoderSpec& spec) {
  check_wave(w, spec);
  const int frames = spec.frame_count(w.length());
  LatentStack out;
  out.frames = frames;
  out.layers.resize(spec.num_taps());
  for (int t = 0; t < spec.num_taps(); ++t) {
    out.layers[t].dim = spec.tap_dim(t);
    out.layers[t].data.assign(
        static_cast<std::size_t>(frames) * spec.tap_dim(t), 0.0);
  }

  std::vector<std::vector<double>> acts;
  for (int fr = 0; fr < frames; ++fr) {
    const double* frame = w.samples.data() + static_cast<std::size_t>(fr) * spec.frame_hop;
    if (spec.kind == EncoderKind::identity) {
      auto dst = out.layers[0].point(fr);
      for (int i = 0; i < spec.frame_len; ++i) dst[i] = frame[i];
      continue;
    }
    run_stack(spec, frame, acts);
    for (int t = 0; t < spec.num_taps(); ++t) {
      auto dst = out.layers[t].point(fr);
      const auto& src = acts[spec.taps[t]];
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
    }
  }
  return out;
}

std::vector<double> encode_gradient(const Waveform& w, const EncoderSpec& spec,
                                    const LatentStack& upstream) {
  check_wave(w, spec);
  const int frames = spec.frame_count(w.length());
  if (upstream.frames != frames ||
      static_cast<int>(upstream.layers.size()) != spec.num_taps())
    throw std::invalid_argument("encode_gradient: upstream shape mismatch");
  for (int t = 0; t < spec.num_taps(); ++t)
    if (upstream.layers[t].dim != spec.tap_dim(t) ||
        upstream.layers[t].count() != frames)
      throw std::invalid_argument("encode_gradient: upstream shape mismatch");

  std::vector<double> grad(w.samples.size(), 0.0);
  const int n_layers = static_cast<int>(spec.layer_dims.size());
  std::vector<std::vector<double>> acts, g_act(n_layers);

  for (int fr = 0; fr < frames; ++fr) {
    const int base = fr * spec.frame_hop;
    if (spec.kind == EncoderKind::identity) {
      const auto up = upstream.layers[0].point(fr);
      for (int i = 0; i < spec.frame_len; ++i) grad[base + i] += up[i];
      continue;
    }
    const double* frame = w.samples.data() + base;
    run_stack(spec, frame, acts);
    for (int l = 0; l < n_layers; ++l) g_act[l].assign(spec.layer_dims[l], 0.0);
    for (int t = 0; t < spec.num_taps(); ++t) {
      const auto up = upstream.layers[t].point(fr);
      auto& g = g_act[spec.taps[t]];
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
    }
    // Walk the stack top-down; tanh' = 1 - act^2.
    std::vector<double> g_in;
    for (int l = n_layers - 1; l >= 0; --l) {
      const int out_dim = spec.layer_dims[l];
      const int in_dim = l == 0 ? spec.frame_len : spec.layer_dims[l - 1];
      g_in.assign(in_dim, 0.0);
      const double* W = spec.weights[l].data();
      for (int o = 0; o < out_dim; ++o) {
        const double a = acts[l][o];
        const double g_pre = g_act[l][o] * (1.0 - a * a);
        if (g_pre == 0.0) continue;
        const double* row = W + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) g_in[i] += g_pre * row[i];
      }
      if (l == 0) {
        for (int i = 0; i < in_dim; ++i) grad[base + i] += g_in[i];
      } else {
        for (int i = 0; i < in_dim; ++i) g_act[l - 1][i] += g_in[i];
      }
    }
  }
  return grad;
}

void save_encoder_spec(const std::string& path, const EncoderSpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_encoder_spec: cannot open " + path);
  out << "kind=" << (spec.kind == EncoderKind::identity ? "identity"
                                                        : "random_stack")
      << "\n";
  out << "layer_dims=";
  for (std::size_t i = 0; i < spec.layer_dims.size(); ++i)
    out << (i ? "," : "") << spec.layer_dims[i];
  out << "\ntaps=";
  for (std::size_t i = 0; i < spec.taps.size(); ++i)
    out << (i ? "," : "") << spec.taps[i];
  out << "\nseed=" << spec.seed << "\nframe_len=" << spec.frame_len
      << "\nframe_hop=" << spec.frame_hop << "\n";
}

EncoderSpec load_encoder_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_encoder_spec: cannot open " + path);
  std::string kind = "identity";
  std::vector<int> dims, taps;
  std::uint64_t seed = 0;
  int frame_len = 400, frame_hop = 320;
  std::string line;
  auto parse_ints = [](const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "kind") kind = val;
    else if (key == "layer_dims") dims = parse_ints(val);
    else if (key == "taps") taps = parse_ints(val);
    else if (key == "seed") seed = std::stoull(val);
    else if (key == "frame_len") frame_len = std::stoi(val);
    else if (key == "frame_hop") frame_hop = std::stoi(val);
  }
  if (kind == "identity") return make_identity_encoder(frame_len, frame_hop);
  return make_random_stack_encoder(dims, taps, seed, frame_len, frame_hop);
}

}  // namespace drift
