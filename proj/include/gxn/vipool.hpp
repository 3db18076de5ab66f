#pragma once

// Vertex infomax pooling: an estimator T(x_v, y_N(u)) = S(E(x_v), P(y_N(u)))
// trained as a GAN-style mutual-information bound between vertices and their
// R-hop neighborhoods, the selection criterion C built on it, greedy and
// top-K selection, affinity-weighted feature pooling, three structure-pooling
// operators and unpooling.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "gxn/autodiff.hpp"
#include "gxn/graph.hpp"
#include "gxn/rng.hpp"

namespace gxn {

// How S combines a vertex embedding e and a neighborhood embedding p.
//   concat:   [e || p] w + b
//   bilinear: e^T W p + b
// Under concat the logit splits into f(v) + g(u), so positives and uniformly
// drawn negatives share a mean and the pool loss cannot drop far below 2 ln 2.
enum class AffinityForm { bilinear, concat };
enum class StructurePool { edge_remove, kron, cluster };
enum class Selector { greedy, topk };

inline const char* to_string(AffinityForm f) { return f == AffinityForm::bilinear ? "bilinear" : "concat"; }
inline const char* to_string(Selector s) { return s == Selector::greedy ? "greedy" : "topk"; }
inline const char* to_string(StructurePool p) {
  switch (p) {
    case StructurePool::edge_remove: return "edge-remove";
    case StructurePool::kron: return "kron";
    case StructurePool::cluster: return "cluster";
  }
  return "?";
}

inline AffinityForm parse_affinity_form(const std::string& s) {
  if (s == "bilinear") return AffinityForm::bilinear;
  if (s == "concat") return AffinityForm::concat;
  throw std::invalid_argument("unknown affinity form '" + s + "' (bilinear|concat)");
}
inline Selector parse_selector(const std::string& s) {
  if (s == "greedy") return Selector::greedy;
  if (s == "topk" || s == "top-k") return Selector::topk;
  throw std::invalid_argument("unknown selector '" + s + "' (greedy|topk)");
}
inline StructurePool parse_structure_pool(const std::string& s) {
  if (s == "edge-remove" || s == "edge_remove") return StructurePool::edge_remove;
  if (s == "kron") return StructurePool::kron;
  if (s == "cluster") return StructurePool::cluster;
  throw std::invalid_argument("unknown structure pooling '" + s + "' (edge-remove|kron|cluster)");
}

// E: two-layer perceptron in -> hidden -> hidden (ReLU between layers).
// P: per-hop hidden x hidden maps, hop_weights[r] acting on r-hop propagated
//    vertex embeddings.
// S: affinity, see AffinityForm.
// The three functions own disjoint parameters.
struct VipoolEstimator {
  Index input_width = 0;
  Index hidden = 0;
  int hops = 1;
  AffinityForm form = AffinityForm::concat;

  Parameter* embed_w1 = nullptr;
  Parameter* embed_b1 = nullptr;
  Parameter* embed_w2 = nullptr;
  Parameter* embed_b2 = nullptr;
  std::vector<Parameter*> hop_weights;
  Parameter* score_w = nullptr;
  Parameter* score_b = nullptr;

  static VipoolEstimator create(ParameterStore& store, const std::string& prefix, Index input_width, Index hidden,
                                int hops, AffinityForm form, Rng& rng) {
    if (hops < 1) throw std::invalid_argument("VipoolEstimator: hop radius must be >= 1");
    if (input_width < 1 || hidden < 1) throw std::invalid_argument("VipoolEstimator: widths must be positive");
    VipoolEstimator est;
    est.input_width = input_width;
    est.hidden = hidden;
    est.hops = hops;
    est.form = form;
    est.embed_w1 = &store.xavier(prefix + ".embed.w1", input_width, hidden, rng);
    est.embed_b1 = &store.zeros(prefix + ".embed.b1", 1, hidden);
    est.embed_w2 = &store.xavier(prefix + ".embed.w2", hidden, hidden, rng);
    est.embed_b2 = &store.zeros(prefix + ".embed.b2", 1, hidden);
    for (int r = 0; r <= hops; ++r)
      est.hop_weights.push_back(&store.xavier(prefix + ".hop" + std::to_string(r), hidden, hidden, rng));
    if (form == AffinityForm::bilinear)
      est.score_w = &store.xavier(prefix + ".score.w", hidden, hidden, rng);
    else
      est.score_w = &store.xavier(prefix + ".score.w", 2 * hidden, 1, rng);
    est.score_b = &store.zeros(prefix + ".score.b", 1, 1);
    return est;
  }

  std::vector<Parameter*> parameters() const {
    std::vector<Parameter*> out{embed_w1, embed_b1, embed_w2, embed_b2};
    out.insert(out.end(), hop_weights.begin(), hop_weights.end());
    out.push_back(score_w);
    out.push_back(score_b);
    return out;
  }

  void set_zero() const {
    for (Parameter* p : parameters()) p->value.setZero();
  }
};

// Row i is E(x_i).
inline Tensor embed_vertices(const VipoolEstimator& est, const Tensor& x) {
  if (x.cols() != est.input_width)
    throw std::invalid_argument("embed_vertices: feature width " + std::to_string(x.cols()) +
                                " does not match estimator input width " + std::to_string(est.input_width));
  Tape& t = x.tape();
  Tensor h = relu(add_row(matmul(x, t.parameter(*est.embed_w1)), t.parameter(*est.embed_b1)));
  return add_row(matmul(h, t.parameter(*est.embed_w2)), t.parameter(*est.embed_b2));
}

// Row u = (1/R) sum_{r=0..R} (P^r E)_u W_r. P is symmetric, so (P^r)^T E
// equals P^r E.
inline Tensor embed_neighborhoods(const VipoolEstimator& est, const PropagationOperator& op,
                                  const Tensor& vertex_embeddings) {
  Tape& t = vertex_embeddings.tape();
  Tensor hop = vertex_embeddings;
  Tensor total = matmul(hop, t.parameter(*est.hop_weights[0]));
  for (int r = 1; r <= est.hops; ++r) {
    hop = op.apply(hop);
    total = add(total, matmul(hop, t.parameter(*est.hop_weights[static_cast<std::size_t>(r)])));
  }
  return scale(total, 1.0 / static_cast<double>(est.hops));
}

// T for row-aligned pairs: out(i) = S(vertex_rows(i), neighborhood_rows(i)).
inline Tensor pair_logits(const VipoolEstimator& est, const Tensor& vertex_rows, const Tensor& neighborhood_rows) {
  Tape& t = vertex_rows.tape();
  Tensor raw;
  if (est.form == AffinityForm::bilinear)
    raw = row_sum(mul(matmul(vertex_rows, t.parameter(*est.score_w)), neighborhood_rows));
  else
    raw = matmul(concat_cols({vertex_rows, neighborhood_rows}), t.parameter(*est.score_w));
  return add_row(raw, t.parameter(*est.score_b));
}

// T(x_v, y_N(u)) from already computed embeddings, outside any tape.
inline double affinity_logit(const VipoolEstimator& est, const Eigen::Ref<const Eigen::RowVectorXd>& e_v,
                             const Eigen::Ref<const Eigen::RowVectorXd>& p_u) {
  if (e_v.size() != est.hidden || p_u.size() != est.hidden)
    throw std::invalid_argument("affinity_logit: embeddings must have width " + std::to_string(est.hidden));
  const Matrix& w = est.score_w->value;
  double t = est.score_b->value(0, 0);
  if (est.form == AffinityForm::bilinear) {
    t += (e_v * w * p_u.transpose())(0, 0);
  } else {
    t += e_v.dot(w.col(0).head(est.hidden).transpose());
    t += p_u.dot(w.col(0).tail(est.hidden).transpose());
  }
  return t;
}

struct NegativeSamples {
  std::vector<Index> vertex;
  std::vector<Index> neighborhood;
};

// per_positive rounds; in each, vertex v is paired with u drawn uniformly
// from V \ {v}.
inline NegativeSamples sample_negatives(Index n, int per_positive, Rng& rng) {
  if (n < 2) throw std::invalid_argument("negative sampling needs at least 2 vertices, got " + std::to_string(n));
  if (per_positive < 1) throw std::invalid_argument("negatives per positive must be >= 1");
  NegativeSamples out;
  std::uniform_int_distribution<Index> pick(0, n - 2);
  for (int round = 0; round < per_positive; ++round) {
    for (Index v = 0; v < n; ++v) {
      Index u = pick(rng);
      if (u >= v) ++u;
      out.vertex.push_back(v);
      out.neighborhood.push_back(u);
    }
  }
  return out;
}

// -[ mean_v log s(T(v, N_v)) + mean_(v,u) log(1 - s(T(v, N_u))) ] over the
// supplied negative pairs; log(1 - s(t)) is evaluated as log s(-t).
inline Tensor mi_bound_loss(const VipoolEstimator& est, const PropagationOperator& op, const Tensor& x,
                            const NegativeSamples& negatives) {
  if (x.rows() < 2) throw std::invalid_argument("mi_bound_loss: need at least 2 vertices");
  if (negatives.vertex.empty() || negatives.vertex.size() != negatives.neighborhood.size())
    throw std::invalid_argument("mi_bound_loss: malformed negative samples");
  Tensor e = embed_vertices(est, x);
  Tensor p = embed_neighborhoods(est, op, e);
  Tensor positive = mean(log(sigmoid(pair_logits(est, e, p))));
  Tensor negative_logits =
      pair_logits(est, gather_rows(e, negatives.vertex), gather_rows(p, negatives.neighborhood));
  Tensor negative = mean(log(sigmoid(scale(negative_logits, -1.0))));
  return scale(add(positive, negative), -1.0);
}

inline Tensor mi_bound_loss(const VipoolEstimator& est, const PropagationOperator& op, const Tensor& x,
                            int negatives_per_positive, Rng& rng) {
  if (x.rows() < 2) throw std::invalid_argument("mi_bound_loss: need at least 2 vertices");
  return mi_bound_loss(est, op, x, sample_negatives(x.rows(), negatives_per_positive, rng));
}

// Vertex and neighborhood embeddings evaluated once with the estimator frozen;
// answers T(v, u) for any pair.
class FrozenAffinity {
 public:
  FrozenAffinity(const VipoolEstimator& est, const PropagationOperator& op, const Matrix& x) : est_(&est) {
    Tape tape;
    Tensor e = embed_vertices(est, tape.constant(x));
    Tensor p = embed_neighborhoods(est, op, e);
    vertex_ = e.value();
    neighborhood_ = p.value();
    bias_ = est.score_b->value(0, 0);
    if (est.form == AffinityForm::bilinear) {
      vertex_side_ = vertex_ * est.score_w->value;
    } else {
      vertex_term_ = vertex_ * est.score_w->value.col(0).head(est.hidden);
      neighborhood_term_ = neighborhood_ * est.score_w->value.col(0).tail(est.hidden);
    }
  }

  Index size() const { return vertex_.rows(); }
  const Matrix& vertex_embeddings() const { return vertex_; }
  const Matrix& neighborhood_embeddings() const { return neighborhood_; }

  double logit(Index v, Index u) const {
    if (est_->form == AffinityForm::bilinear) return vertex_side_.row(v).dot(neighborhood_.row(u)) + bias_;
    return vertex_term_(v) + neighborhood_term_(u) + bias_;
  }

  // log s(T(v, N_v)) for every vertex.
  Eigen::VectorXd positive_scores() const {
    Eigen::VectorXd s(size());
    for (Index v = 0; v < size(); ++v) s(v) = log_sigmoid(logit(v, v));
    return s;
  }

 private:
  const VipoolEstimator* est_;
  Matrix vertex_;
  Matrix neighborhood_;
  Matrix vertex_side_;
  Eigen::VectorXd vertex_term_;
  Eigen::VectorXd neighborhood_term_;
  double bias_ = 0.0;
};

// C(Omega) = (1/|O|) sum_v log s(T(v,N_v)) + (1/|O|^2) sum_{(v,u) in OxO} log(1 - s(T(v,N_u))),
// pairs with v == u included.
inline double criterion_full(const FrozenAffinity& affinity, std::span<const Index> omega) {
  if (omega.empty()) throw std::invalid_argument("criterion_full: empty vertex set");
  check_unique_ids("criterion_full", omega, affinity.size());
  const auto k = static_cast<double>(omega.size());
  double positive = 0.0;
  double negative = 0.0;
  for (Index v : omega) {
    positive += log_sigmoid(affinity.logit(v, v));
    for (Index u : omega) negative += log_sigmoid(-affinity.logit(v, u));
  }
  return positive / k + negative / (k * k);
}

inline double criterion_full(const VipoolEstimator& est, const PropagationOperator& op, const Matrix& x,
                             std::span<const Index> omega) {
  return criterion_full(FrozenAffinity(est, op, x), omega);
}

inline void check_selection_size(const char* what, Index k, Index n) {
  if (k < 1 || k > n)
    throw std::out_of_range(std::string(what) + ": K=" + std::to_string(k) + " outside [1, " + std::to_string(n) +
                            "]");
}

// Greedy maximization of C: each step adds the vertex with the largest
// C(Omega + v); ties go to the lowest index. Returns indices in selection order.
// Pair sums are maintained incrementally, so a step costs O(n) logits.
inline std::vector<Index> select_greedy(const FrozenAffinity& affinity, Index k) {
  const Index n = affinity.size();
  check_selection_size("select_greedy", k, n);
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd self_positive(n);
  Eigen::VectorXd self_negative(n);
  for (Index v = 0; v < n; ++v) {
    const double t = affinity.logit(v, v);
    self_positive(v) = log_sigmoid(t);
    self_negative(v) = log_sigmoid(-t);
  }
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(n);  // sum over u in Omega of both pair orders
  double positive = 0.0;
  double negative = 0.0;
  std::vector<Index> order;
  for (Index step = 0; step < k; ++step) {
    const auto size = static_cast<double>(step + 1);
    Index best = -1;
    double best_value = 0.0;
    for (Index v = 0; v < n; ++v) {
      if (chosen[static_cast<std::size_t>(v)]) continue;
      const double value =
          (positive + self_positive(v)) / size + (negative + cross(v) + self_negative(v)) / (size * size);
      if (best < 0 || value > best_value) {
        best = v;
        best_value = value;
      }
    }
    chosen[static_cast<std::size_t>(best)] = 1;
    order.push_back(best);
    positive += self_positive(best);
    negative += cross(best) + self_negative(best);
    for (Index v = 0; v < n; ++v)
      if (!chosen[static_cast<std::size_t>(v)])
        cross(v) += log_sigmoid(-affinity.logit(v, best)) + log_sigmoid(-affinity.logit(best, v));
  }
  return order;
}

// The K largest s_v = log s(T(v, N_v)), ties to the lowest index; exactly
// maximizes the positive term of C. Returned ascending.
inline std::vector<Index> select_topk(const Eigen::VectorXd& scores, Index k) {
  const Index n = scores.size();
  check_selection_size("select_topk", k, n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) > scores(b); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

inline std::vector<Index> select_topk(const FrozenAffinity& affinity, Index k) {
  return select_topk(affinity.positive_scores(), k);
}

inline std::vector<Index> select_vertices(const FrozenAffinity& affinity, Index k, Selector selector) {
  return selector == Selector::greedy ? select_greedy(affinity, k) : select_topk(affinity, k);
}

// a_v = s(T(v, N_v)) for v in ids; differentiable w.r.t. the estimator and x.
inline Tensor affinity_scores(const VipoolEstimator& est, const PropagationOperator& op, const Tensor& x,
                              std::span<const Index> ids) {
  Tensor e = embed_vertices(est, x);
  Tensor p = embed_neighborhoods(est, op, e);
  return sigmoid(pair_logits(est, gather_rows(e, ids), gather_rows(p, ids)));
}

// Row k = a_k * x[ids_k].
inline Tensor pool_features(const Tensor& x, std::span<const Index> ids, const Tensor& a) {
  if (a.rows() != static_cast<Index>(ids.size()) || a.cols() != 1)
    throw std::invalid_argument("pool_features: affinity " + a.shape() + " does not match " +
                                std::to_string(ids.size()) + " selected vertices");
  return scale_rows(gather_rows(x, ids), a);
}

struct PooledStructure {
  Matrix adjacency;
  std::optional<Matrix> assignment;  // cluster-connection only
};

inline Matrix laplacian(const Graph& g) {
  Matrix a = g.dense_adjacency();
  Matrix l = -a;
  l.diagonal() += a.rowwise().sum();
  return l;
}

inline constexpr double kKronPivotThreshold = 1e-10;
inline constexpr double kKronDust = 1e-10;

// Schur complement of the Laplacian onto the kept vertices:
// L_kk - L_kr L_rr^{-1} L_rk. Throws when a removed component has no edge to a
// kept vertex (L_rr singular).
inline Matrix kron_reduced_laplacian(const Graph& g, std::span<const Index> ids) {
  const Index n = g.size();
  check_unique_ids("kron", ids, n);
  std::vector<Index> position(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < ids.size(); ++i) position[static_cast<std::size_t>(ids[i])] = static_cast<Index>(i);
  std::vector<Index> removed;
  std::vector<Index> removed_pos(static_cast<std::size_t>(n), -1);
  for (Index v = 0; v < n; ++v)
    if (position[static_cast<std::size_t>(v)] < 0) {
      removed_pos[static_cast<std::size_t>(v)] = static_cast<Index>(removed.size());
      removed.push_back(v);
    }

  // Every connected component of the removed set must touch the kept set.
  std::vector<char> visited(static_cast<std::size_t>(n), 0);
  for (Index start : removed) {
    if (visited[static_cast<std::size_t>(start)]) continue;
    std::vector<Index> component{start};
    visited[static_cast<std::size_t>(start)] = 1;
    bool touches_kept = false;
    for (std::size_t head = 0; head < component.size(); ++head) {
      for (Index w : g.neighbors(component[head])) {
        if (position[static_cast<std::size_t>(w)] >= 0) {
          touches_kept = true;
        } else if (!visited[static_cast<std::size_t>(w)]) {
          visited[static_cast<std::size_t>(w)] = 1;
          component.push_back(w);
        }
      }
    }
    if (!touches_kept) {
      std::sort(component.begin(), component.end());
      std::string names;
      for (Index v : component) names += (names.empty() ? "" : ", ") + std::to_string(v);
      throw std::domain_error("kron: removed component {" + names + "} has no edge to a kept vertex");
    }
  }

  const Matrix l = laplacian(g);
  const auto k = static_cast<Index>(ids.size());
  const auto r = static_cast<Index>(removed.size());
  Matrix l_kk(k, k), l_kr(k, r), l_rr(r, r);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) l_kk(i, j) = l(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    for (Index j = 0; j < r; ++j) l_kr(i, j) = l(ids[static_cast<std::size_t>(i)], removed[static_cast<std::size_t>(j)]);
  }
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) l_rr(i, j) = l(removed[static_cast<std::size_t>(i)], removed[static_cast<std::size_t>(j)]);
  if (r == 0) return l_kk;

  Eigen::PartialPivLU<Matrix> lu(l_rr);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (min_pivot < kKronPivotThreshold)
    throw std::domain_error("kron: removed-vertex Laplacian block is singular (pivot " + std::to_string(min_pivot) + ")");
  Matrix schur = l_kk - l_kr * lu.solve(Matrix(l_kr.transpose()));
  return 0.5 * (schur + schur.transpose());
}

// Off-diagonal of -L_reduced; the diagonal (self-loop mass) is discarded and
// negative rounding dust clamped to zero.
inline Matrix kron_adjacency(const Matrix& reduced_laplacian) {
  Matrix a = -reduced_laplacian;
  a.diagonal().setZero();
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      if (a(i, j) < 0.0) {
        if (a(i, j) < -kKronDust)
          throw std::logic_error("kron: reduced Laplacian has a positive off-diagonal entry");
        a(i, j) = 0.0;
      }
  return a;
}

inline PooledStructure pool_structure(const Graph& g, std::span<const Index> ids, StructurePool method) {
  switch (method) {
    case StructurePool::edge_remove:
      return {induced_adjacency(g, ids), std::nullopt};
    case StructurePool::kron:
      return {kron_adjacency(kron_reduced_laplacian(g, ids)), std::nullopt};
    case StructurePool::cluster: {
      check_unique_ids("cluster", ids, g.size());
      Matrix rows(static_cast<Index>(ids.size()), g.size());
      for (std::size_t i = 0; i < ids.size(); ++i) rows.row(static_cast<Index>(i)) = g.adjacency().row(ids[i]);
      Matrix s = row_softmax(rows);
      Matrix sa = s * g.adjacency();
      Matrix pooled = sa * s.transpose();
      return {0.5 * (pooled + pooled.transpose()), std::move(s)};
    }
  }
  throw std::invalid_argument("pool_structure: unknown method");
}

// Zero-filled scatter of coarse features to ids, then one propagation layer
// on the finer graph: ReLU(P X' W).
inline Tensor unpool(const Tensor& coarse, std::span<const Index> ids, Index n, const PropagationOperator& finer,
                     const Tensor& weight) {
  if (finer.size() != n)
    throw std::invalid_argument("unpool: operator size " + std::to_string(finer.size()) + " != " + std::to_string(n));
  return relu(matmul(finer.apply(scatter_rows(coarse, ids, n)), weight));
}

struct PoolingResult {
  std::vector<Index> ids;  // ascending
  Eigen::VectorXd affinity;
  Matrix pooled_features;
  Matrix pooled_adjacency;
  std::optional<Matrix> assignment;
};

// Selection plus data and structure pooling of one graph with a frozen
// estimator.
inline PoolingResult vipool(const VipoolEstimator& est, const Graph& g, const Matrix& x, Index k, Selector selector,
                            StructurePool method) {
  const PropagationOperator op = normalized_operator(g);
  FrozenAffinity affinity(est, op, x);
  PoolingResult result;
  result.ids = select_vertices(affinity, k, selector);
  std::sort(result.ids.begin(), result.ids.end());
  Tape tape;
  Tensor xt = tape.constant(x);
  Tensor a = affinity_scores(est, op, xt, result.ids);
  result.affinity = a.value().col(0);
  result.pooled_features = pool_features(xt, result.ids, a).value();
  PooledStructure s = pool_structure(g, result.ids, method);
  result.pooled_adjacency = std::move(s.adjacency);
  result.assignment = std::move(s.assignment);
  return result;
}

}  // namespace gxn
