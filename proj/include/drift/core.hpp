#pragma once

#include <span>
#include <vector>

namespace drift {

enum class BatchRole { positive, negative, unspecified };

// A set of d-dimensional latent points, stored row-major.
struct LatentBatch {
  int dim = 0;
  std::vector<double> data;
  BatchRole role = BatchRole::unspecified;

  LatentBatch() = default;
  explicit LatentBatch(int d, BatchRole r = BatchRole::unspecified)
      : dim(d), role(r) {}

  int count() const {
    return dim > 0 ? static_cast<int>(data.size()) / dim : 0;
  }
  std::span<const double> point(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<double> point(int i) {
    return {data.data() + static_cast<std::size_t>(i) * dim,
            static_cast<std::size_t>(dim)};
  }
  void push(std::span<const double> p);

  // Throws std::invalid_argument on dim < 1, ragged data or non-finite
  // entries.
  void validate() const;
};

struct KernelConfig {
  // Canonical order is strictly increasing.
  std::vector<double> temperatures{0.1, 0.5, 1.0};

  void validate() const;
};

// Per-query drift vectors plus diagnostics.
struct DriftField {
  int dim = 0;
  int queries = 0;
  // queries x dim, mean over temperatures.
  std::vector<double> vectors;
  // One queries x dim block per temperature, canonical order.
  std::vector<std::vector<double>> per_temperature;
  // queries x n_tau, mini-batch normalizer means (may underflow to 0 for
  // far-away sets; the drift vectors themselves stay finite).
  std::vector<double> z_pos, z_neg;

  std::span<const double> vector(int i) const {
    return {vectors.data() + static_cast<std::size_t>(i) * dim,
            static_cast<std::size_t>(dim)};
  }
};

struct DecomposedDrift {
  std::vector<double> attract;  // kernel mean shift toward the positive set
  std::vector<double> repel;    // same, toward the negative set
  std::vector<double> total;    // attract - repel
  double z_pos = 0.0;
  double z_neg = 0.0;
};

struct DriftOptions {
  // The pairwise evaluation is the reference; the weighted-means route is
  // the algebraically factored form used in training (O(P+N) per query
  // instead of O(P*N)). Both agree to ~1e-14 relative.
  enum class Route { pairwise, weighted_means };
  Route route = Route::pairwise;

  // Frame-wise setting: queries are themselves members of the negative
  // set. By default the query stays in the negative sum, contributing
  // k(q,q)=1; setting this skips negative index i for query i (requires
  // queries.count() == neg.count()).
  bool exclude_self = false;
};

// exp(-||x - y||_2 / tau), symmetric, in (0, 1].
double kernel_eval(std::span<const double> x, std::span<const double> y,
                   double tau);

// Attraction/repulsion mean-shift pair and their difference.
DecomposedDrift drift_decomposed(std::span<const double> query,
                                 const LatentBatch& pos,
                                 const LatentBatch& neg, double tau);

// Joint double-sum form; equals drift_decomposed(...).total to rounding.
std::vector<double> drift_unified(std::span<const double> query,
                                  const LatentBatch& pos,
                                  const LatentBatch& neg, double tau);

// Per-query drift averaged over cfg.temperatures, components retained.
DriftField drift_multi_temperature(const LatentBatch& queries,
                                   const LatentBatch& pos,
                                   const LatentBatch& neg,
                                   const KernelConfig& cfg,
                                   const DriftOptions& opts = {});

}  // namespace drift
