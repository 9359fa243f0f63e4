#include "drift/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "drift/rng.hpp"

namespace drift {

double si_sdr(const Waveform& estimate, const Waveform& reference,
              const SiSdrOptions& opts) {
  if (estimate.length() != reference.length())
    throw std::invalid_argument("si_sdr: length mismatch");
  const int n = reference.length();
  if (n == 0) throw std::invalid_argument("si_sdr: empty signals");

  std::vector<double> e(estimate.samples), s(reference.samples);
  if (opts.remove_mean) {
    double me = 0.0, ms = 0.0;
    for (int i = 0; i < n; ++i) {
      me += e[i];
      ms += s[i];
    }
    me /= n;
    ms /= n;
    for (int i = 0; i < n; ++i) {
      e[i] -= me;
      s[i] -= ms;
    }
  }
  double dot = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += e[i] * s[i];
    ss += s[i] * s[i];
  }
  if (ss <= 0.0) throw std::invalid_argument("si_sdr: zero reference");
  const double a = dot / ss;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = a * s[i];
    const double r = e[i] - t;
    num += t * t;
    den += r * r;
  }
  if (den == 0.0) return 100.0;  // zero residual sentinel
  if (num == 0.0) return -100.0;
  const double db = 10.0 * std::log10(num / den);
  return db > 100.0 ? 100.0 : (db < -100.0 ? -100.0 : db);
}

namespace {

double kernel_mean(const LatentBatch& a, const LatentBatch& b, double tau) {
  double acc = 0.0;
  const int m = a.count(), n = b.count();
  for (int i = 0; i < m; ++i) {
    const auto x = a.point(i);
    for (int j = 0; j < n; ++j) {
      const auto y = b.point(j);
      double ss = 0.0;
      for (int k = 0; k < a.dim; ++k) {
        const double d = x[k] - y[k];
        ss += d * d;
      }
      acc += std::exp(-std::sqrt(ss) / tau);
    }
  }
  return acc / (static_cast<double>(m) * n);
}

}  // namespace

double mmd2(const LatentBatch& a, const LatentBatch& b, double tau) {
  a.validate();
  b.validate();
  if (a.dim != b.dim) throw std::invalid_argument("mmd2: dimension mismatch");
  if (a.count() == 0 || b.count() == 0)
    throw std::invalid_argument("mmd2: empty batch");
  if (!(tau > 0.0)) throw std::invalid_argument("mmd2: tau must be > 0");
  const double t_aa = kernel_mean(a, a, tau);
  const double t_bb = kernel_mean(b, b, tau);
  const double t_ab = kernel_mean(a, b, tau);
  return t_aa + t_bb - 2.0 * t_ab;
}

namespace {

// Largest eigenpair of the symmetric matrix c (d x d) by power iteration.
// Returns false when the matrix is numerically zero relative to `floor`.
bool power_iterate(const std::vector<double>& c, int d, double floor,
                   std::vector<double>& vec, double& val) {
  RngStream rng(0x9e3779b97f4a7c15ull);
  vec.assign(d, 0.0);
  for (double& x : vec) x = rng.normal();
  double nrm = 0.0;
  for (double x : vec) nrm += x * x;
  nrm = std::sqrt(nrm);
  for (double& x : vec) x /= nrm;

  std::vector<double> next(d);
  val = 0.0;
  for (int it = 0; it < 20000; ++it) {
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      const double* row = c.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) acc += row[j] * vec[j];
      next[i] = acc;
    }
    double nn = 0.0;
    for (double x : next) nn += x * x;
    nn = std::sqrt(nn);
    if (nn <= floor) return false;
    double diff = 0.0;
    for (int i = 0; i < d; ++i) {
      next[i] /= nn;
      const double e = next[i] - vec[i];
      diff += e * e;
    }
    vec = next;
    val = nn;
    if (std::sqrt(diff) < 1e-10) break;
  }
  return true;
}

}  // namespace

Pca2 pca2_project(const LatentBatch& frames) {
  frames.validate();
  const int n = frames.count();
  const int d = frames.dim;
  if (n < 3) throw std::invalid_argument("pca2_project: need >= 3 frames");

  Pca2 out;
  out.mean.assign(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto p = frames.point(i);
    for (int k = 0; k < d; ++k) out.mean[k] += p[k];
  }
  for (int k = 0; k < d; ++k) out.mean[k] /= n;

  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> centered(d);
  for (int i = 0; i < n; ++i) {
    const auto p = frames.point(i);
    for (int k = 0; k < d; ++k) centered[k] = p[k] - out.mean[k];
    for (int r = 0; r < d; ++r) {
      const double cr = centered[r];
      if (cr == 0.0) continue;
      double* row = cov.data() + static_cast<std::size_t>(r) * d;
      for (int cidx = 0; cidx < d; ++cidx) row[cidx] += cr * centered[cidx];
    }
  }
  for (double& x : cov) x /= (n - 1);

  double trace = 0.0;
  for (int k = 0; k < d; ++k) trace += cov[static_cast<std::size_t>(k) * d + k];
  if (!(trace > 0.0))
    throw std::invalid_argument("pca2_project: zero-variance input");
  const double floor = trace * 1e-14;

  std::vector<double> v1, v2;
  double l1 = 0.0, l2 = 0.0;
  if (!power_iterate(cov, d, floor, v1, l1))
    throw std::invalid_argument("pca2_project: zero-variance input");
  // Deflate and repeat for the second component.
  std::vector<double> cov2 = cov;
  for (int r = 0; r < d; ++r)
    for (int cidx = 0; cidx < d; ++cidx)
      cov2[static_cast<std::size_t>(r) * d + cidx] -= l1 * v1[r] * v1[cidx];
  if (!power_iterate(cov2, d, floor, v2, l2)) {
    // Rank-1 data: pick any unit vector orthogonal to v1.
    v2.assign(d, 0.0);
    int axis = 0;
    for (int k = 1; k < d; ++k)
      if (std::abs(v1[k]) < std::abs(v1[axis])) axis = k;
    v2[axis] = 1.0;
    double proj = v1[axis];
    double nn = 0.0;
    for (int k = 0; k < d; ++k) {
      v2[k] -= proj * v1[k];
      nn += v2[k] * v2[k];
    }
    nn = std::sqrt(nn);
    for (double& x : v2) x /= nn;
    l2 = 0.0;
  } else {
    // Re-orthogonalize against v1 to clean up deflation rounding.
    double proj = 0.0;
    for (int k = 0; k < d; ++k) proj += v1[k] * v2[k];
    double nn = 0.0;
    for (int k = 0; k < d; ++k) {
      v2[k] -= proj * v1[k];
      nn += v2[k] * v2[k];
    }
    nn = std::sqrt(nn);
    if (nn > 0.0)
      for (double& x : v2) x /= nn;
  }

  out.eig[0] = l1;
  out.eig[1] = l2;
  out.basis.resize(2 * static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    out.basis[k] = v1[k];
    out.basis[d + k] = v2[k];
  }
  out.xy = pca2_apply(out, frames);
  return out;
}

std::vector<double> pca2_apply(const Pca2& fitted, const LatentBatch& frames) {
  const int d = static_cast<int>(fitted.mean.size());
  if (frames.dim != d)
    throw std::invalid_argument("pca2_apply: dimension mismatch");
  const int n = frames.count();
  std::vector<double> xy(static_cast<std::size_t>(n) * 2, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto p = frames.point(i);
    double a = 0.0, b = 0.0;
    for (int k = 0; k < d; ++k) {
      const double c = p[k] - fitted.mean[k];
      a += fitted.basis[k] * c;
      b += fitted.basis[d + k] * c;
    }
    xy[static_cast<std::size_t>(i) * 2] = a;
    xy[static_cast<std::size_t>(i) * 2 + 1] = b;
  }
  return xy;
}

}  // namespace drift
