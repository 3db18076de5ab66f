#pragma once

// Slow reference computations, written without the production kernels, for
// property checks and tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gxn/autodiff.hpp"

namespace gxn::oracle {

// D^-1/2 (A + I) D^-1/2 by explicit loops.
inline Matrix normalized_operator(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  std::vector<double> degree(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) degree[static_cast<std::size_t>(i)] += adjacency(i, j);
    degree[static_cast<std::size_t>(i)] += 1.0;
  }
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out(i, j) = (adjacency(i, j) + (i == j ? 1.0 : 0.0)) /
                  std::sqrt(degree[static_cast<std::size_t>(i)] * degree[static_cast<std::size_t>(j)]);
  return out;
}

inline Matrix laplacian(const Matrix& adjacency) {
  Matrix l = Matrix::Zero(adjacency.rows(), adjacency.cols());
  for (Index i = 0; i < adjacency.rows(); ++i)
    for (Index j = 0; j < adjacency.cols(); ++j) {
      if (i == j) continue;
      l(i, j) = -adjacency(i, j);
      l(i, i) += adjacency(i, j);
    }
  return l;
}

inline Matrix pseudo_inverse(const Matrix& m) {
  // The rank is fixed during compute(), so the threshold goes first.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(m.rows(), m.cols());
  cod.setThreshold(1e-10);
  cod.compute(m);
  return cod.pseudoInverse();
}

// R(i, j) = (e_i - e_j)^T L^+ (e_i - e_j).
inline double effective_resistance(const Matrix& laplacian_pinv, Index i, Index j) {
  return laplacian_pinv(i, i) + laplacian_pinv(j, j) - 2.0 * laplacian_pinv(i, j);
}

// Schur complement through the pseudo-inverse of the removed block.
inline Matrix schur_complement(const Matrix& l, const std::vector<Index>& kept) {
  const Index n = l.rows();
  std::vector<Index> removed;
  for (Index v = 0; v < n; ++v)
    if (std::find(kept.begin(), kept.end(), v) == kept.end()) removed.push_back(v);
  const auto k = static_cast<Index>(kept.size());
  const auto r = static_cast<Index>(removed.size());
  Matrix kk(k, k), kr(k, r), rr(r, r);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) kk(i, j) = l(kept[i], kept[j]);
    for (Index j = 0; j < r; ++j) kr(i, j) = l(kept[i], removed[j]);
  }
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) rr(i, j) = l(removed[i], removed[j]);
  if (r == 0) return kk;
  return kk - kr * pseudo_inverse(rr) * kr.transpose();
}

inline double log_sigmoid(double t) { return -std::log1p(std::exp(-t)); }

// C over an explicit logit table T(v, u), straight from the definition.
inline double criterion(const Matrix& logits, const std::vector<Index>& omega) {
  double positive = 0.0;
  double negative = 0.0;
  for (Index v : omega) {
    positive += std::log(1.0 / (1.0 + std::exp(-logits(v, v))));
    for (Index u : omega) negative += std::log(1.0 - 1.0 / (1.0 + std::exp(-logits(v, u))));
  }
  const auto k = static_cast<double>(omega.size());
  return positive / k + negative / (k * k);
}

// Calls visit(subset) for every size-k subset of 0..n-1 in lexicographic order.
inline void for_each_subset(Index n, Index k, const std::function<void(const std::vector<Index>&)>& visit) {
  std::vector<Index> subset(static_cast<std::size_t>(k));
  std::iota(subset.begin(), subset.end(), Index{0});
  if (k > n) return;
  while (true) {
    visit(subset);
    Index i = k - 1;
    while (i >= 0 && subset[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++subset[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < k; ++j) subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
  }
}

// Maximizer of sum_v score(v) over size-k subsets; the lexicographically
// first subset wins ties within `tolerance`.
inline std::vector<Index> best_subset(const std::vector<double>& scores, Index k, double tolerance = 1e-12) {
  std::vector<Index> best;
  double best_value = -std::numeric_limits<double>::infinity();
  for_each_subset(static_cast<Index>(scores.size()), k, [&](const std::vector<Index>& s) {
    double value = 0.0;
    for (Index v : s) value += scores[static_cast<std::size_t>(v)];
    if (value > best_value + tolerance) {
      best_value = value;
      best = s;
    }
  });
  return best;
}

// Vertex u maximizing C(omega + u); lowest index within `tolerance`.
inline Index best_addition(const Matrix& logits, const std::vector<Index>& omega, double tolerance = 1e-12) {
  Index best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Index u = 0; u < logits.rows(); ++u) {
    if (std::find(omega.begin(), omega.end(), u) != omega.end()) continue;
    std::vector<Index> extended = omega;
    extended.push_back(u);
    const double value = criterion(logits, extended);
    if (value > best_value + tolerance) {
      best_value = value;
      best = u;
    }
  }
  return best;
}

}  // namespace gxn::oracle
