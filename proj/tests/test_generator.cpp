#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <span>
#include <cstdio>
#include <vector>

#include "drift/generator.hpp"
#include "drift/rng.hpp"

using namespace drift;

namespace {

std::vector<double> random_vec(RngStream& rng, int n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

void randomize(GeneratorParams& p, std::uint64_t seed, double scale = 0.3) {
  RngStream rng(seed);
  for (double& x : p.theta) x = scale * rng.normal();
}

// Straight-line re-evaluation of the stack, written directly against the
// parameter layout: per layer, out_o = tanh/id( b_o + sum_i W[o,i]*in_i ),
// the condition occupying the trailing columns.
std::vector<double> reeval(const GeneratorParams& p,
                           std::span<const double> first_in,
                           std::span<const double> cond) {
  std::vector<double> cur(first_in.begin(), first_in.end());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto W = p.weights(static_cast<int>(l));
    const auto b = p.bias(static_cast<int>(l));
    const int in = p.layers[l].in, out = p.layers[l].out;
    const int base = in - p.cond_dim;
    std::vector<double> next(out);
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      for (int i = 0; i < base; ++i) acc += W[o * in + i] * cur[i];
      for (int i = 0; i < p.cond_dim; ++i) acc += W[o * in + base + i] * cond[i];
      next[o] = l + 1 == p.layers.size() ? acc : std::tanh(acc);
    }
    cur = next;
  }
  return cur;
}

}  // namespace

TEST_CASE("direct forward with sigma 0 ignores epsilon") {
  GeneratorParams p =
      make_generator(Paradigm::direct_mapping, 6, {8, 8}, 6, 21);
  randomize(p, 5);
  RngStream rng(7);
  const auto x = random_vec(rng, 6);
  const auto e1 = random_vec(rng, 6), e2 = random_vec(rng, 6);
  const auto a = forward_direct(x, 0.0, e1, p);
  const auto b = forward_direct(x, 0.0, e2, p);
  CHECK(a == b);
}

TEST_CASE("zero-initialized output layer") {
  // Without the skip the zero map; with it the identity on the input.
  GeneratorParams plain = make_generator(Paradigm::direct_mapping, 4, {8}, 4,
                                         3, 0, /*input_skip=*/false);
  RngStream rng(9);
  const auto x = random_vec(rng, 4);
  for (double v : forward_direct(x, 0.0, {}, plain)) CHECK(v == 0.0);

  GeneratorParams skip = make_generator(Paradigm::direct_mapping, 4, {8}, 4, 3);
  const auto out = forward_direct(x, 0.0, {}, skip);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == x[i]);

  GeneratorParams cond = make_generator(Paradigm::conditional, 4, {8}, 4, 3, 4);
  const auto eps = random_vec(rng, 4), c = random_vec(rng, 4);
  for (double v : forward_conditional(eps, c, cond)) CHECK(v == 0.0);
}

TEST_CASE("direct forward matches a layer-by-layer re-evaluation") {
  GeneratorParams p =
      make_generator(Paradigm::direct_mapping, 5, {7, 9}, 5, 11);
  randomize(p, 13);
  RngStream rng(15);
  const auto x = random_vec(rng, 5);
  const auto eps = random_vec(rng, 5);
  const double sigma = 0.05;

  const auto got = forward_direct(x, sigma, eps, p);
  std::vector<double> in(5);
  for (int i = 0; i < 5; ++i) in[i] = x[i] + sigma * eps[i];
  auto want = reeval(p, in, {});
  for (int i = 0; i < 5; ++i) want[i] += in[i];  // skip path
  for (int i = 0; i < 5; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("conditional forward: determinism and epsilon sensitivity") {
  GeneratorParams p = make_generator(Paradigm::conditional, 6, {10, 10}, 6, 17, 6);
  randomize(p, 19);
  RngStream rng(21);
  const auto c = random_vec(rng, 6);
  const auto e1 = random_vec(rng, 6), e2 = random_vec(rng, 6);

  const auto a = forward_conditional(e1, c, p);
  const auto b = forward_conditional(e1, c, p);
  CHECK(a == b);

  const auto other = forward_conditional(e2, c, p);
  double diff = 0.0;
  for (int i = 0; i < 6; ++i) diff += (a[i] - other[i]) * (a[i] - other[i]);
  CHECK(diff > 0.0);

  const auto want = reeval(p, e1, c);
  for (int i = 0; i < 6; ++i)
    CHECK(a[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("paradigm and dimension mismatches throw") {
  GeneratorParams d = make_generator(Paradigm::direct_mapping, 4, {6}, 4, 1);
  GeneratorParams c = make_generator(Paradigm::conditional, 4, {6}, 4, 1, 4);
  RngStream rng(23);
  const auto x = random_vec(rng, 4);
  CHECK_THROWS_AS(forward_conditional(x, x, d), std::invalid_argument);
  CHECK_THROWS_AS(forward_direct(x, 0.0, {}, c), std::invalid_argument);
  const auto bad = random_vec(rng, 3);
  CHECK_THROWS_AS(forward_direct(bad, 0.0, {}, d), std::invalid_argument);
  CHECK_THROWS_AS(forward_direct(x, -0.1, {}, d), std::invalid_argument);
}

TEST_CASE("sigma sampler stays inside the truncation interval") {
  NoiseSchedule s;
  RngStream rng(29);
  for (int i = 0; i < 10000; ++i) {
    const double v = sample_sigma(s, rng);
    CHECK(v >= 0.01);
    CHECK(v <= 0.3);
  }

  NoiseSchedule degenerate;
  degenerate.sigma_log = 0.0;
  const double fixed = sample_sigma(degenerate, rng);
  CHECK(fixed == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));

  NoiseSchedule impossible;
  impossible.sigma_log = 0.0;
  impossible.lo = 0.2;
  impossible.hi = 0.3;  // exp(-3) ~ 0.0498 never lands here
  CHECK_THROWS_AS(sample_sigma(impossible, rng), std::runtime_error);

  NoiseSchedule bad;
  bad.lo = 0.5;
  bad.hi = 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("backward: zero cotangent and the linear closed form") {
  GeneratorParams p = make_generator(Paradigm::direct_mapping, 3, {5}, 3, 31);
  randomize(p, 33);
  ForwardTrace tr;
  RngStream rng(35);
  const auto x = random_vec(rng, 3);
  forward_direct(x, 0.0, {}, p, &tr);
  std::vector<double> grads(p.theta.size(), 0.0);
  backward(p, tr, std::vector<double>{0.0, 0.0, 0.0}, grads);
  for (double g : grads) CHECK(g == 0.0);

  // Purely linear generator (no hidden layers), squared loss: the gradient
  // is the least-squares one, dW = 2 (Wx + b - y) x^T.
  GeneratorParams lin = make_generator(Paradigm::direct_mapping, 3, {}, 3, 37,
                                       0, /*input_skip=*/false);
  randomize(lin, 39);
  const auto y = random_vec(rng, 3);
  ForwardTrace ltr;
  const auto out = forward_direct(x, 0.0, {}, lin, &ltr);
  std::vector<double> cot(3);
  for (int i = 0; i < 3; ++i) cot[i] = 2.0 * (out[i] - y[i]);
  std::vector<double> lg(lin.theta.size(), 0.0);
  backward(lin, ltr, cot, lg);
  for (int o = 0; o < 3; ++o) {
    for (int i = 0; i < 3; ++i)
      CHECK(lg[lin.layers[0].w_off + o * 3 + i] ==
            doctest::Approx(cot[o] * x[i]).epsilon(1e-12));
    CHECK(lg[lin.layers[0].b_off + o] == doctest::Approx(cot[o]).epsilon(1e-12));
  }

  ForwardTrace none;
  CHECK_THROWS_AS(backward(p, none, cot, grads), std::invalid_argument);
}

TEST_CASE("backward matches central finite differences") {
  for (bool conditional : {false, true}) {
    GeneratorParams p =
        conditional
            ? make_generator(Paradigm::conditional, 4, {6, 5}, 4, 41, 4)
            : make_generator(Paradigm::direct_mapping, 4, {6, 5}, 4, 41);
    randomize(p, 43);
    RngStream rng(45);
    const auto x = random_vec(rng, 4);
    const auto c = random_vec(rng, 4);
    const auto cot = random_vec(rng, 4);

    auto run = [&](const GeneratorParams& q) {
      const auto out = conditional ? forward_conditional(x, c, q)
                                   : forward_direct(x, 0.0, {}, q);
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) acc += out[i] * cot[i];
      return acc;
    };

    ForwardTrace tr;
    if (conditional)
      forward_conditional(x, c, p, &tr);
    else
      forward_direct(x, 0.0, {}, p, &tr);
    std::vector<double> grads(p.theta.size(), 0.0);
    backward(p, tr, cot, grads);

    const double h = 1e-5;
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t idx = rng.next_u64() % p.theta.size();
      GeneratorParams plus = p, minus = p;
      plus.theta[idx] += h;
      minus.theta[idx] -= h;
      const double fd = (run(plus) - run(minus)) / (2.0 * h);
      const double denom = std::max(std::abs(fd), 1e-8);
      CHECK(std::abs(grads[idx] - fd) / denom < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round-trip is bit exact") {
  GeneratorParams p = make_generator(Paradigm::conditional, 8, {16, 12}, 8, 47, 8);
  randomize(p, 49);
  const std::string path = "test_gen_ckpt.bin";
  save_checkpoint(path, p);
  const GeneratorParams r = load_checkpoint(path);
  std::remove(path.c_str());
  CHECK(r.paradigm == p.paradigm);
  CHECK(r.input_dim == p.input_dim);
  CHECK(r.cond_dim == p.cond_dim);
  CHECK(r.hidden_dims == p.hidden_dims);
  CHECK(r.theta == p.theta);
}
