#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "sitvos/tensor.hpp"

namespace sitvos {

namespace detail {

template <typename T>
void require_binary_pair(const Tensor<T>& pred, const Tensor<T>& truth) {
  if (pred.rank() != 2 || truth.rank() != 2)
    throw DimensionError("metrics: masks must be rank-2, got " + shape_str(pred.shape()) + " and " +
                         shape_str(truth.shape()));
  require_same_shape(pred.shape(), truth.shape(), "metric mask pair");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if ((pred[i] != T(0) && pred[i] != T(1)) || (truth[i] != T(0) && truth[i] != T(1)))
      throw ContractError("metrics: masks must be binary");
}

// Inner boundary under 4-connectivity; pixels beyond the image count as
// background, so foreground touching the border is boundary.
template <typename T>
std::vector<char> inner_boundary(const Tensor<T>& mask) {
  const std::size_t h = mask.extent(0), w = mask.extent(1);
  std::vector<char> b(h * w, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (mask(y, x) != T(1)) continue;
      const bool edge = y == 0 || y + 1 == h || x == 0 || x + 1 == w;
      if (edge || mask(y - 1, x) == T(0) || mask(y + 1, x) == T(0) || mask(y, x - 1) == T(0) ||
          mask(y, x + 1) == T(0))
        b[y * w + x] = 1;
    }
  return b;
}

// Felzenszwalb-Huttenlocher exact 1D squared distance transform.
inline void edt_1d(std::vector<double>& f) {
  const std::size_t n = f.size();
  std::vector<double> d(n);
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  const auto intersect = [&f](std::size_t p, std::size_t q) {
    return ((f[q] + static_cast<double>(q) * static_cast<double>(q)) -
            (f[p] + static_cast<double>(p) * static_cast<double>(p))) /
           (2.0 * (static_cast<double>(q) - static_cast<double>(p)));
  };
  for (std::size_t q = 1; q < n; ++q) {
    double s = intersect(v[k], q);
    while (s <= z[k]) {
      --k;
      s = intersect(v[k], q);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
  f = std::move(d);
}

// Exact squared Euclidean distance to the nearest set pixel (inf if none).
inline std::vector<double> squared_edt(const std::vector<char>& set, std::size_t h, std::size_t w) {
  constexpr double kInf = 1e18;
  std::vector<double> d(h * w);
  for (std::size_t i = 0; i < h * w; ++i) d[i] = set[i] ? 0.0 : kInf;
  std::vector<double> col(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) col[y] = d[y * w + x];
    edt_1d(col);
    for (std::size_t y = 0; y < h; ++y) d[y * w + x] = col[y];
  }
  std::vector<double> row(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) row[x] = d[y * w + x];
    edt_1d(row);
    for (std::size_t x = 0; x < w; ++x) d[y * w + x] = row[x];
  }
  return d;
}

}  // namespace detail

// |P ∩ T| / |P ∪ T|, 1 when both masks are empty.
template <typename T>
double jaccard(const Tensor<T>& pred, const Tensor<T>& truth) {
  detail::require_binary_pair(pred, truth);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == T(1), t = truth[i] == T(1);
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// DAVIS convention: ceil(0.8% of the image diagonal).
inline double default_boundary_tolerance(std::size_t h, std::size_t w) {
  return std::ceil(0.008 * std::sqrt(static_cast<double>(h * h + w * w)));
}

// Boundary F: precision = fraction of predicted boundary pixels within
// tolerance of the true boundary, recall symmetric, F = 2PR/(P+R).
template <typename T>
double boundary_f(const Tensor<T>& pred, const Tensor<T>& truth, double tolerance_px) {
  detail::require_binary_pair(pred, truth);
  if (tolerance_px < 0) throw ContractError("boundary_f: tolerance must be >= 0");
  const std::size_t h = pred.extent(0), w = pred.extent(1);
  const std::vector<char> bp = detail::inner_boundary(pred);
  const std::vector<char> bt = detail::inner_boundary(truth);
  std::size_t np = 0, nt = 0;
  for (char c : bp) np += c;
  for (char c : bt) nt += c;
  if (np == 0 && nt == 0) return 1.0;
  if (np == 0 || nt == 0) return 0.0;

  const std::vector<double> dist_to_t = detail::squared_edt(bt, h, w);
  const std::vector<double> dist_to_p = detail::squared_edt(bp, h, w);
  const double tol2 = tolerance_px * tolerance_px;
  std::size_t hit_p = 0, hit_t = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (bp[i] && dist_to_t[i] <= tol2) ++hit_p;
    if (bt[i] && dist_to_p[i] <= tol2) ++hit_t;
  }
  const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
  const double recall = static_cast<double>(hit_t) / static_cast<double>(nt);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

inline double jf_mean(double j, double f) { return (j + f) / 2.0; }

struct FrameScore {
  double j = 0, f = 0;
};

// sequence -> object id -> per-frame scores
using SequenceScores = std::map<int, std::vector<FrameScore>>;

struct EvalReport {
  struct ObjectReport {
    double j = 0, f = 0;
  };
  std::vector<std::map<int, ObjectReport>> per_sequence;
  std::vector<FrameScore> sequence_means;
  double j = 0, f = 0, jf = 0;
};

// DAVIS-style averaging: frames -> object, objects -> sequence, sequences ->
// global, then J&F = (J+F)/2.
inline EvalReport aggregate(const std::vector<SequenceScores>& sequences) {
  if (sequences.empty()) throw ContractError("aggregate: no sequences");
  EvalReport report;
  double jsum = 0, fsum = 0;
  for (const SequenceScores& seq : sequences) {
    if (seq.empty()) throw ContractError("aggregate: sequence with no objects");
    std::map<int, EvalReport::ObjectReport> objs;
    double seq_j = 0, seq_f = 0;
    for (const auto& [id, frames] : seq) {
      if (frames.empty()) throw ContractError("aggregate: object with no frames");
      EvalReport::ObjectReport o;
      for (const FrameScore& s : frames) {
        o.j += s.j;
        o.f += s.f;
      }
      o.j /= static_cast<double>(frames.size());
      o.f /= static_cast<double>(frames.size());
      seq_j += o.j;
      seq_f += o.f;
      objs.emplace(id, o);
    }
    seq_j /= static_cast<double>(seq.size());
    seq_f /= static_cast<double>(seq.size());
    report.per_sequence.push_back(std::move(objs));
    report.sequence_means.push_back({seq_j, seq_f});
    jsum += seq_j;
    fsum += seq_f;
  }
  report.j = jsum / static_cast<double>(sequences.size());
  report.f = fsum / static_cast<double>(sequences.size());
  report.jf = jf_mean(report.j, report.f);
  return report;
}

}  // namespace sitvos
