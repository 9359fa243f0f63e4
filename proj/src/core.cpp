#include "drift/core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace drift {

void LatentBatch::push(std::span<const double> p) {
  if (dim == 0) dim = static_cast<int>(p.size());
  if (static_cast<int>(p.size()) != dim)
    throw std::invalid_argument("LatentBatch::push: dimension mismatch");
  data.insert(data.end(), p.begin(), p.end());
}

void LatentBatch::validate() const {
  if (dim < 1) throw std::invalid_argument("LatentBatch: dim must be >= 1");
  if (data.size() % static_cast<std::size_t>(dim) != 0)
    throw std::invalid_argument("LatentBatch: ragged data");
  for (double v : data)
    if (!std::isfinite(v))
      throw std::invalid_argument("LatentBatch: non-finite entry");
}

void KernelConfig::validate() const {
  if (temperatures.empty())
    throw std::invalid_argument("KernelConfig: no temperatures");
  double prev = 0.0;
  for (double t : temperatures) {
    if (!(t > 0.0) || !std::isfinite(t))
      throw std::invalid_argument("KernelConfig: temperatures must be > 0");
    if (t <= prev)
      throw std::invalid_argument(
          "KernelConfig: temperatures must be strictly increasing");
    prev = t;
  }
}

namespace {

double euclid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    s += d * d;
  }
  return std::sqrt(s);
}

void all_dists(std::span<const double> q, const LatentBatch& b,
               std::vector<double>& out) {
  const int n = b.count();
  out.resize(n);
  for (int i = 0; i < n; ++i) out[i] = euclid(q, b.point(i));
}

// Kernel weights with the max log-kernel subtracted, so the weight sum is
// always >= 1 no matter how far the set sits from the query. Ratios of
// these weights equal ratios of the raw kernels. `skip` (if >= 0) removes
// one index from the set.
struct StableWeights {
  std::vector<double> w;
  double sum = 0.0;
  double max_logk = -std::numeric_limits<double>::infinity();
  int used = 0;
};

void stable_weights(const std::vector<double>& dists, double tau, int skip,
                    StableWeights& sw) {
  const int n = static_cast<int>(dists.size());
  sw.w.assign(n, 0.0);
  sw.max_logk = -std::numeric_limits<double>::infinity();
  sw.used = 0;
  for (int i = 0; i < n; ++i) {
    if (i == skip) continue;
    const double logk = -dists[i] / tau;
    if (logk > sw.max_logk) sw.max_logk = logk;
    ++sw.used;
  }
  if (sw.used == 0)
    throw std::invalid_argument("drift: sample set empty after exclusion");
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == skip) continue;
    sw.w[i] = std::exp(-dists[i] / tau - sw.max_logk);
    s += sw.w[i];
  }
  sw.sum = s;
}

// Mini-batch mean of the raw kernels (the paper-level normalizer). May
// underflow to zero when every point is far from the query; diagnostic
// only, the drift itself is computed from the stabilized weights.
double normalizer_mean(const StableWeights& sw) {
  return std::exp(sw.max_logk) * (sw.sum / sw.used);
}

void check_pair(std::span<const double> query, const LatentBatch& pos,
                const LatentBatch& neg, double tau) {
  pos.validate();
  neg.validate();
  if (pos.dim != neg.dim)
    throw std::invalid_argument("drift: pos/neg dimension mismatch");
  if (static_cast<int>(query.size()) != pos.dim)
    throw std::invalid_argument("drift: query dimension mismatch");
  if (pos.count() == 0 || neg.count() == 0)
    throw std::invalid_argument("drift: empty batch");
  if (!(tau > 0.0))
    throw std::invalid_argument("drift: tau must be > 0");
  for (double v : query)
    if (!std::isfinite(v))
      throw std::invalid_argument("drift: non-finite query");
}

// Joint double sum over (pos, neg) pairs. Terms are visited diagonal
// first, then (i,j)/(j,i) combined per unordered pair, then the
// rectangular remainder. The paired order makes the sum cancel bitwise
// when pos == neg, and negate bitwise when pos and neg swap roles.
void pairwise_sum(const LatentBatch& pos, const LatentBatch& neg,
                  const StableWeights& wp, const StableWeights& wq,
                  std::vector<double>& acc) {
  const int d = pos.dim;
  const int np = pos.count();
  const int nq = neg.count();
  const int m = np < nq ? np : nq;
  acc.assign(d, 0.0);

  for (int i = 0; i < m; ++i) {
    const double wij = wp.w[i] * wq.w[i];
    const auto yi = pos.point(i);
    const auto zi = neg.point(i);
    for (int k = 0; k < d; ++k) acc[k] += wij * (yi[k] - zi[k]);
  }
  for (int i = 0; i < m; ++i) {
    const auto yi = pos.point(i);
    const auto zi = neg.point(i);
    for (int j = i + 1; j < m; ++j) {
      const auto yj = pos.point(j);
      const auto zj = neg.point(j);
      const double wij = wp.w[i] * wq.w[j];
      const double wji = wp.w[j] * wq.w[i];
      for (int k = 0; k < d; ++k) {
        const double t1 = wij * (yi[k] - zj[k]);
        const double t2 = wji * (yj[k] - zi[k]);
        acc[k] += t1 + t2;
      }
    }
  }
  if (np > m) {
    for (int i = m; i < np; ++i) {
      const auto yi = pos.point(i);
      for (int j = 0; j < nq; ++j) {
        const double wij = wp.w[i] * wq.w[j];
        const auto zj = neg.point(j);
        for (int k = 0; k < d; ++k) acc[k] += wij * (yi[k] - zj[k]);
      }
    }
  } else if (nq > m) {
    for (int j = m; j < nq; ++j) {
      const auto zj = neg.point(j);
      for (int i = 0; i < np; ++i) {
        const double wij = wp.w[i] * wq.w[j];
        const auto yi = pos.point(i);
        for (int k = 0; k < d; ++k) acc[k] += wij * (yi[k] - zj[k]);
      }
    }
  }
}

void pairwise_drift(const LatentBatch& pos, const LatentBatch& neg,
                    const StableWeights& wp, const StableWeights& wq,
                    std::span<double> out, std::vector<double>& scratch) {
  pairwise_sum(pos, neg, wp, wq, scratch);
  const double denom = wp.sum * wq.sum;
  for (int k = 0; k < pos.dim; ++k) out[k] = scratch[k] / denom;
}

// Factored form of the joint sum: difference of the kernel-weighted means
// of the two sets. O(P+N) per query.
void wmeans_drift(const LatentBatch& pos, const LatentBatch& neg,
                  const StableWeights& wp, const StableWeights& wq,
                  std::span<double> out) {
  const int d = pos.dim;
  const int np = pos.count();
  const int nq = neg.count();
  std::vector<double> mp(d, 0.0), mq(d, 0.0);
  for (int i = 0; i < np; ++i) {
    const double w = wp.w[i];
    if (w == 0.0) continue;
    const auto yi = pos.point(i);
    for (int k = 0; k < d; ++k) mp[k] += w * yi[k];
  }
  for (int j = 0; j < nq; ++j) {
    const double w = wq.w[j];
    if (w == 0.0) continue;
    const auto zj = neg.point(j);
    for (int k = 0; k < d; ++k) mq[k] += w * zj[k];
  }
  for (int k = 0; k < d; ++k) out[k] = mp[k] / wp.sum - mq[k] / wq.sum;
}

}  // namespace

double kernel_eval(std::span<const double> x, std::span<const double> y,
                   double tau) {
  if (x.size() != y.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("kernel_eval: tau must be > 0");
  for (std::size_t k = 0; k < x.size(); ++k)
    if (!std::isfinite(x[k]) || !std::isfinite(y[k]))
      throw std::invalid_argument("kernel_eval: non-finite input");
  return std::exp(-euclid(x, y) / tau);
}

DecomposedDrift drift_decomposed(std::span<const double> query,
                                 const LatentBatch& pos,
                                 const LatentBatch& neg, double tau) {
  check_pair(query, pos, neg, tau);
  const int d = pos.dim;

  std::vector<double> dists;
  StableWeights wp, wq;
  all_dists(query, pos, dists);
  stable_weights(dists, tau, -1, wp);
  all_dists(query, neg, dists);
  stable_weights(dists, tau, -1, wq);

  DecomposedDrift out;
  out.attract.assign(d, 0.0);
  out.repel.assign(d, 0.0);
  out.total.assign(d, 0.0);
  for (int i = 0; i < pos.count(); ++i) {
    const double w = wp.w[i];
    const auto yi = pos.point(i);
    for (int k = 0; k < d; ++k) out.attract[k] += w * (yi[k] - query[k]);
  }
  for (int k = 0; k < d; ++k) out.attract[k] /= wp.sum;
  for (int j = 0; j < neg.count(); ++j) {
    const double w = wq.w[j];
    const auto zj = neg.point(j);
    for (int k = 0; k < d; ++k) out.repel[k] += w * (zj[k] - query[k]);
  }
  for (int k = 0; k < d; ++k) out.repel[k] /= wq.sum;
  for (int k = 0; k < d; ++k) out.total[k] = out.attract[k] - out.repel[k];
  out.z_pos = normalizer_mean(wp);
  out.z_neg = normalizer_mean(wq);
  return out;
}

std::vector<double> drift_unified(std::span<const double> query,
                                  const LatentBatch& pos,
                                  const LatentBatch& neg, double tau) {
  check_pair(query, pos, neg, tau);
  std::vector<double> dists, scratch;
  StableWeights wp, wq;
  all_dists(query, pos, dists);
  stable_weights(dists, tau, -1, wp);
  all_dists(query, neg, dists);
  stable_weights(dists, tau, -1, wq);
  std::vector<double> v(pos.dim, 0.0);
  pairwise_drift(pos, neg, wp, wq, v, scratch);
  return v;
}

DriftField drift_multi_temperature(const LatentBatch& queries,
                                   const LatentBatch& pos,
                                   const LatentBatch& neg,
                                   const KernelConfig& cfg,
                                   const DriftOptions& opts) {
  cfg.validate();
  queries.validate();
  if (queries.count() == 0)
    throw std::invalid_argument("drift: empty query batch");
  check_pair(queries.point(0), pos, neg, cfg.temperatures.front());
  if (opts.exclude_self && queries.count() != neg.count())
    throw std::invalid_argument(
        "drift: exclude_self requires queries to be the negative set");

  const int d = pos.dim;
  const int nq = queries.count();
  const int ntau = static_cast<int>(cfg.temperatures.size());

  DriftField field;
  field.dim = d;
  field.queries = nq;
  field.vectors.assign(static_cast<std::size_t>(nq) * d, 0.0);
  field.per_temperature.assign(
      ntau, std::vector<double>(static_cast<std::size_t>(nq) * d, 0.0));
  field.z_pos.assign(static_cast<std::size_t>(nq) * ntau, 0.0);
  field.z_neg.assign(static_cast<std::size_t>(nq) * ntau, 0.0);

  std::vector<double> dpos, dneg, scratch;
  StableWeights wp, wq;
  // Queries outer, temperatures next; distances are shared across
  // temperatures.
  for (int qi = 0; qi < nq; ++qi) {
    const auto q = queries.point(qi);
    all_dists(q, pos, dpos);
    all_dists(q, neg, dneg);
    const int skip = opts.exclude_self ? qi : -1;
    for (int ti = 0; ti < ntau; ++ti) {
      const double tau = cfg.temperatures[ti];
      stable_weights(dpos, tau, -1, wp);
      stable_weights(dneg, tau, skip, wq);
      std::span<double> slot{
          field.per_temperature[ti].data() + static_cast<std::size_t>(qi) * d,
          static_cast<std::size_t>(d)};
      if (opts.route == DriftOptions::Route::pairwise)
        pairwise_drift(pos, neg, wp, wq, slot, scratch);
      else
        wmeans_drift(pos, neg, wp, wq, slot);
      field.z_pos[static_cast<std::size_t>(qi) * ntau + ti] =
          normalizer_mean(wp);
      field.z_neg[static_cast<std::size_t>(qi) * ntau + ti] =
          normalizer_mean(wq);
    }
    // Arithmetic mean over temperatures, canonical order.
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int ti = 0; ti < ntau; ++ti)
        s += field.per_temperature[ti][static_cast<std::size_t>(qi) * d + k];
      field.vectors[static_cast<std::size_t>(qi) * d + k] = s / ntau;
    }
  }
  return field;
}

}  // namespace drift
