#pragma once

#include <vector>

#include "drift/core.hpp"
#include "drift/signal.hpp"

namespace drift {

struct MetricReport {
  double si_sdr_db = 0.0;
  double mmd2 = 0.0;
  std::vector<double> mean_drift_norm;
  double centroid_distance = 0.0;
};

struct SiSdrOptions {
  bool remove_mean = false;
};

// Scale-invariant signal-to-distortion ratio in dB, capped to [-100, 100].
double si_sdr(const Waveform& estimate, const Waveform& reference,
              const SiSdrOptions& opts = {});

// Biased V-statistic MMD^2 with the exponential kernel; zero when a == b.
double mmd2(const LatentBatch& a, const LatentBatch& b, double tau = 0.5);

struct Pca2 {
  std::vector<double> xy;     // n x 2 projected coordinates
  double eig[2] = {0.0, 0.0};
  std::vector<double> basis;  // 2 x d, row-major
  std::vector<double> mean;   // original-space centroid
};

// Mean-centered projection onto the top-2 covariance eigenvectors (power
// iteration with deflation, tol 1e-10). Needs >= 3 frames and nonzero
// variance.
Pca2 pca2_project(const LatentBatch& frames);

// Project further points with an already-fitted basis.
std::vector<double> pca2_apply(const Pca2& fitted, const LatentBatch& frames);

}  // namespace drift
