#pragma once

// Graph cross network: an input propagation layer, a pyramid of VIPool
// coarsenings, per-scale propagation stacks joined by feature-crossing
// layers, unpooling back to the finest scale, a readout propagation layer and
// a linear head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gxn/autodiff.hpp"
#include "gxn/graph.hpp"
#include "gxn/rng.hpp"
#include "gxn/vipool.hpp"

namespace gxn {

enum class ReadoutMode { sum_align, sortpool };
enum class Task { graph, vertex };

inline const char* to_string(ReadoutMode m) { return m == ReadoutMode::sum_align ? "sum-align" : "sortpool"; }
inline const char* to_string(Task t) { return t == Task::graph ? "graph" : "vertex"; }

inline ReadoutMode parse_readout_mode(const std::string& s) {
  if (s == "sum-align" || s == "sum_align") return ReadoutMode::sum_align;
  if (s == "sortpool" || s == "sortpool-k") return ReadoutMode::sortpool;
  throw std::invalid_argument("unknown readout mode '" + s + "' (sum-align|sortpool)");
}
inline Task parse_task(const std::string& s) {
  if (s == "graph") return Task::graph;
  if (s == "vertex") return Task::vertex;
  throw std::invalid_argument("unknown task '" + s + "' (graph|vertex)");
}

struct GxnConfig {
  int scales = 2;  // coarsening steps S; the model has S + 1 scales
  std::vector<double> keep_ratios{0.8, 0.6};
  int hops = 1;
  Index hidden = 48;
  int layers_per_scale = 2;
  std::optional<std::vector<int>> crossing_positions;  // unset: every layer
  StructurePool structure_pool = StructurePool::cluster;
  ReadoutMode readout_mode = ReadoutMode::sum_align;
  int sortpool_k = 30;
  Selector selector = Selector::topk;
  AffinityForm affinity = AffinityForm::concat;
  // When false, scales 0 and S take no crossing input at all.
  bool cross_boundary_scales = true;

  std::vector<int> crossing_layers() const {
    if (!crossing_positions) {
      std::vector<int> all(static_cast<std::size_t>(layers_per_scale));
      for (int l = 0; l < layers_per_scale; ++l) all[static_cast<std::size_t>(l)] = l;
      return all;
    }
    return *crossing_positions;
  }

  void validate() const {
    if (scales < 0) throw std::invalid_argument("config: scales must be >= 0");
    if (static_cast<int>(keep_ratios.size()) != scales)
      throw std::invalid_argument("config: need one keep ratio per coarsening step (" + std::to_string(scales) +
                                  "), got " + std::to_string(keep_ratios.size()));
    for (double r : keep_ratios)
      if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("config: keep ratios must lie in (0, 1)");
    if (hops < 1) throw std::invalid_argument("config: hops must be >= 1");
    if (hidden < 1) throw std::invalid_argument("config: hidden must be >= 1");
    if (layers_per_scale < 1) throw std::invalid_argument("config: layers_per_scale must be >= 1");
    if (sortpool_k < 1) throw std::invalid_argument("config: sortpool_k must be >= 1");
    std::set<int> seen;
    for (int l : crossing_layers()) {
      if (l < 0 || l >= layers_per_scale)
        throw std::invalid_argument("config: crossing position " + std::to_string(l) + " is not a layer index");
      if (!seen.insert(l).second) throw std::invalid_argument("config: duplicate crossing position");
    }
  }
};

// Pool-loss weight decaying linearly per epoch from start to end.
struct AlphaSchedule {
  double start = 2.0;
  double end = 0.0;
  int total_epochs = 1;

  double at(int epoch) const {
    if (total_epochs <= 0) return end;
    const double frac = std::clamp(static_cast<double>(epoch) / total_epochs, 0.0, 1.0);
    return std::max(start + (end - start) * frac, std::min(start, end));
  }
};

struct ScaleLevel {
  Graph graph;
  PropagationOperator op;
  std::vector<Index> ids;  // ascending indices into the previous level; empty at level 0
};

struct ScalePyramid {
  std::vector<ScaleLevel> levels;
  Index size(std::size_t level) const { return levels[level].graph.size(); }
};

inline Index pooled_size(double ratio, Index n) {
  return static_cast<Index>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
}

// Recursive VIPool on frozen estimators. Level 0 takes the graph and
// features as given; level s keeps ceil(ratio_s |V_{s-1}|) vertices.
inline ScalePyramid build_pyramid(const Graph& g, const Matrix& x, std::span<const double> keep_ratios,
                                  std::span<const VipoolEstimator> estimators, Selector selector,
                                  StructurePool structure) {
  if (estimators.size() != keep_ratios.size())
    throw std::invalid_argument("build_pyramid: one estimator per coarsening step required");
  ScalePyramid pyramid;
  pyramid.levels.push_back({g.with_features(Matrix(g.size(), 0)), normalized_operator(g), {}});
  Matrix features = x;
  for (std::size_t s = 0; s < keep_ratios.size(); ++s) {
    const ScaleLevel& prev = pyramid.levels.back();
    const Index n = prev.graph.size();
    const Index k = pooled_size(keep_ratios[s], n);
    if (k < 1) throw std::invalid_argument("build_pyramid: level " + std::to_string(s + 1) + " would be empty");
    if (k >= n)
      throw std::invalid_argument("build_pyramid: level " + std::to_string(s + 1) + " keeps " + std::to_string(k) +
                                  " of " + std::to_string(n) + " vertices (size must strictly decrease)");
    FrozenAffinity affinity(estimators[s], prev.op, features);
    std::vector<Index> ids = select_vertices(affinity, k, selector);
    std::sort(ids.begin(), ids.end());
    Matrix next_features(k, features.cols());
    for (Index i = 0; i < k; ++i) {
      const Index v = ids[static_cast<std::size_t>(i)];
      next_features.row(i) = sigmoid(affinity.logit(v, v)) * features.row(v);
    }
    PooledStructure pooled = pool_structure(prev.graph, ids, structure);
    Graph coarse = Graph::from_dense(pooled.adjacency, Matrix(k, 0));
    PropagationOperator op = normalized_operator(coarse);
    pyramid.levels.push_back({std::move(coarse), std::move(op), std::move(ids)});
    features = std::move(next_features);
  }
  return pyramid;
}

// X' = X + pooled-from-finer + unpooled-from-coarser, absent terms skipped.
inline Tensor feature_crossing(const Tensor& x, const std::optional<Tensor>& pooled_from_finer,
                               const std::optional<Tensor>& unpooled_from_coarser) {
  Tensor out = x;
  if (pooled_from_finer) out = add(out, *pooled_from_finer);
  if (unpooled_from_coarser) out = add(out, *unpooled_from_coarser);
  return out;
}

struct GxnForward {
  Tensor logits;                     // 1 x C (graph task) or n x C (vertex task)
  std::vector<Tensor> pool_losses;   // one per coarsening step
  std::vector<Tensor> scale_features;
};

struct GcnWeights {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
};

class GxnModel {
 public:
  GxnModel(GxnConfig config, Index input_width, Index num_classes, Task task, std::uint64_t seed)
      : config_(std::move(config)), input_width_(input_width), num_classes_(num_classes), task_(task) {
    config_.validate();
    if (input_width < 1) throw std::invalid_argument("GxnModel: input width must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("GxnModel: need at least 2 classes");
    Rng rng = make_rng(seed, "init");
    const Index h = config_.hidden;
    const int scales = config_.scales;
    input_ = gcn("input", input_width, h, rng);
    for (int s = 0; s < scales; ++s)
      estimators_.push_back(VipoolEstimator::create(store_, "pool" + std::to_string(s + 1), h, h, config_.hops,
                                                    config_.affinity, rng));
    layers_.resize(static_cast<std::size_t>(scales + 1));
    for (int s = 0; s <= scales; ++s)
      for (int l = 0; l < config_.layers_per_scale; ++l)
        layers_[static_cast<std::size_t>(s)].push_back(
            gcn("scale" + std::to_string(s) + ".layer" + std::to_string(l), h, h, rng));
    crossing_layers_ = config_.crossing_layers();
    std::sort(crossing_layers_.begin(), crossing_layers_.end());
    for (int l : crossing_layers_) {
      Crossing c;
      c.layer = l;
      for (int s = 1; s <= scales; ++s) {
        const std::string tag = "cross" + std::to_string(l) + "." + std::to_string(s);
        c.down.push_back(VipoolEstimator::create(store_, tag + ".down", h, h, config_.hops, config_.affinity, rng));
        c.up.push_back(&store_.xavier(tag + ".up", h, h, rng));
      }
      crossings_.push_back(std::move(c));
    }
    for (int s = 1; s <= scales; ++s)
      readout_unpool_.push_back(&store_.xavier("readout.unpool" + std::to_string(s), h, h, rng));
    const Index combined = config_.readout_mode == ReadoutMode::sum_align ? h : h * (scales + 1);
    readout_ = gcn("readout", combined, h, rng);
    const Index head_in = (task_ == Task::graph && config_.readout_mode == ReadoutMode::sortpool)
                              ? h * config_.sortpool_k
                              : h;
    head_w_ = &store_.xavier("head.w", head_in, num_classes, rng);
    head_b_ = &store_.zeros("head.b", 1, num_classes);
  }

  GxnModel(const GxnModel&) = delete;
  GxnModel& operator=(const GxnModel&) = delete;

  const GxnConfig& config() const { return config_; }
  Task task() const { return task_; }
  Index input_width() const { return input_width_; }
  Index num_classes() const { return num_classes_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const std::vector<VipoolEstimator>& estimators() const { return estimators_; }

  // Level-0 features: one propagation layer on the input graph.
  Tensor input_layer(Tape& tape, const Graph& g, const PropagationOperator& op) const {
    if (g.feature_width() != input_width_)
      throw std::invalid_argument("GxnModel: graph feature width " + std::to_string(g.feature_width()) +
                                  " does not match model input width " + std::to_string(input_width_));
    return apply_gcn(tape, input_, op, tape.constant(g.features()));
  }

  // Vertex selection and structure pooling with the current parameters,
  // outside any gradient recording.
  ScalePyramid build_pyramid(const Graph& g) const {
    const PropagationOperator op = normalized_operator(g);
    Tape tape;
    Matrix x0 = input_layer(tape, g, op).value();
    return gxn::build_pyramid(g, x0, config_.keep_ratios, estimators_, config_.selector, config_.structure_pool);
  }

  GxnForward forward(Tape& tape, const Graph& g, const ScalePyramid& pyramid, Rng& negatives,
                     int negatives_per_positive = 1) const {
    return forward(tape, g, pyramid, &negatives, negatives_per_positive);
  }

  // Inference pass: pool_losses stays empty.
  GxnForward forward(Tape& tape, const Graph& g, const ScalePyramid& pyramid) const {
    return forward(tape, g, pyramid, nullptr, 1);
  }

  GxnForward forward(Tape& tape, const Graph& g, const ScalePyramid& pyramid, Rng* negatives,
                     int negatives_per_positive) const {
    const int scales = config_.scales;
    if (static_cast<int>(pyramid.levels.size()) != scales + 1)
      throw std::invalid_argument("GxnModel: pyramid depth does not match config");
    if (pyramid.size(0) != g.size()) throw std::invalid_argument("GxnModel: pyramid built for a different graph");
    const auto op = [&](int s) -> const PropagationOperator& { return pyramid.levels[static_cast<std::size_t>(s)].op; };
    const auto ids = [&](int s) -> std::span<const Index> { return pyramid.levels[static_cast<std::size_t>(s)].ids; };
    const auto size = [&](int s) { return pyramid.size(static_cast<std::size_t>(s)); };

    GxnForward out;
    std::vector<Tensor> h;
    h.push_back(input_layer(tape, g, op(0)));
    for (int s = 1; s <= scales; ++s) {
      const VipoolEstimator& est = estimators_[static_cast<std::size_t>(s - 1)];
      const Tensor& finer = h.back();
      Tensor a = affinity_scores(est, op(s - 1), finer, ids(s));
      if (negatives)
        out.pool_losses.push_back(mi_bound_loss(est, op(s - 1), finer, negatives_per_positive, *negatives));
      h.push_back(pool_features(finer, ids(s), a));
    }

    std::size_t next_crossing = 0;
    for (int l = 0; l < config_.layers_per_scale; ++l) {
      for (int s = 0; s <= scales; ++s)
        h[static_cast<std::size_t>(s)] =
            apply_gcn(tape, layers_[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)], op(s),
                      h[static_cast<std::size_t>(s)]);
      if (next_crossing < crossings_.size() && crossings_[next_crossing].layer == l) {
        const Crossing& c = crossings_[next_crossing++];
        std::vector<Tensor> crossed;
        for (int s = 0; s <= scales; ++s) {
          const bool boundary = s == 0 || s == scales;
          std::optional<Tensor> pooled, unpooled;
          if (config_.cross_boundary_scales || !boundary) {
            if (s > 0) {
              const VipoolEstimator& est = c.down[static_cast<std::size_t>(s - 1)];
              const Tensor& finer = h[static_cast<std::size_t>(s - 1)];
              pooled = pool_features(finer, ids(s), affinity_scores(est, op(s - 1), finer, ids(s)));
            }
            if (s < scales)
              unpooled = unpool(h[static_cast<std::size_t>(s + 1)], ids(s + 1), size(s), op(s),
                                tape.parameter(*c.up[static_cast<std::size_t>(s)]));
          }
          crossed.push_back(feature_crossing(h[static_cast<std::size_t>(s)], pooled, unpooled));
        }
        h = std::move(crossed);
      }
    }
    out.scale_features = h;
    out.logits = readout(tape, pyramid, h);
    return out;
  }

  // Every scale is unpooled level by level to scale 0, combined, embedded by
  // one propagation layer and classified.
  Tensor readout(Tape& tape, const ScalePyramid& pyramid, const std::vector<Tensor>& h) const {
    std::vector<Tensor> aligned;
    for (int s = 0; s <= config_.scales; ++s) {
      Tensor z = h[static_cast<std::size_t>(s)];
      for (int t = s; t >= 1; --t) {
        const ScaleLevel& level = pyramid.levels[static_cast<std::size_t>(t)];
        const ScaleLevel& finer = pyramid.levels[static_cast<std::size_t>(t - 1)];
        z = unpool(z, level.ids, finer.graph.size(), finer.op,
                   tape.parameter(*readout_unpool_[static_cast<std::size_t>(t - 1)]));
      }
      aligned.push_back(z);
    }
    Tensor combined = aligned.front();
    if (config_.readout_mode == ReadoutMode::sum_align)
      for (std::size_t s = 1; s < aligned.size(); ++s) combined = add(combined, aligned[s]);
    else
      combined = concat_cols(aligned);
    Tensor embedded = apply_gcn(tape, readout_, pyramid.levels.front().op, combined);

    Tensor features;
    if (task_ == Task::vertex)
      features = embedded;
    else if (config_.readout_mode == ReadoutMode::sum_align)
      features = col_mean(embedded);
    else
      features = sort_pool(embedded, config_.sortpool_k);
    return add_row(matmul(features, tape.parameter(*head_w_)), tape.parameter(*head_b_));
  }

  // Rows sorted by their last channel (descending, ties by index), top k
  // kept, zero-padded to k rows, flattened to 1 x (k * width).
  static Tensor sort_pool(const Tensor& x, int k) {
    const Index n = x.rows();
    const Index width = x.cols();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    const Matrix& v = x.value();
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a, width - 1) > v(b, width - 1); });
    const Index kept = std::min<Index>(n, k);
    order.resize(static_cast<std::size_t>(kept));
    Tensor top = gather_rows(x, order);
    std::vector<Index> slots(static_cast<std::size_t>(kept));
    for (Index i = 0; i < kept; ++i) slots[static_cast<std::size_t>(i)] = i;
    return flatten(scatter_rows(top, slots, k));
  }

 private:
  struct Crossing {
    int layer = 0;
    std::vector<VipoolEstimator> down;  // down[s-1] scores scale s-1 -> s pooling
    std::vector<Parameter*> up;         // up[s] unpools scale s+1 -> s
  };

  GcnWeights gcn(const std::string& name, Index in, Index out, Rng& rng) {
    return {&store_.xavier(name + ".w", in, out, rng), &store_.zeros(name + ".b", 1, out)};
  }

  static Tensor apply_gcn(Tape& tape, const GcnWeights& w, const PropagationOperator& op, const Tensor& x) {
    return relu(add_row(op.apply(matmul(x, tape.parameter(*w.weight))), tape.parameter(*w.bias)));
  }

  GxnConfig config_;
  Index input_width_;
  Index num_classes_;
  Task task_;
  ParameterStore store_;
  GcnWeights input_;
  std::vector<VipoolEstimator> estimators_;
  std::vector<std::vector<GcnWeights>> layers_;
  std::vector<int> crossing_layers_;
  std::vector<Crossing> crossings_;
  std::vector<Parameter*> readout_unpool_;
  GcnWeights readout_;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
};

// Softmax cross-entropy of one graph's 1 x C logits.
inline Tensor cross_entropy(const Tensor& logits, Index label) {
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: expected 1 x C logits, got " + logits.shape());
  if (label < 0 || label >= logits.cols()) throw std::out_of_range("cross_entropy: label out of range");
  Matrix one_hot = Matrix::Zero(1, logits.cols());
  one_hot(0, label) = -1.0;
  return sum(mul(log(row_softmax(logits)), logits.tape().constant(std::move(one_hot))));
}

// Mean softmax cross-entropy over the rows selected by mask.
inline Tensor masked_cross_entropy(const Tensor& logits, std::span<const Index> labels, std::span<const char> mask) {
  if (static_cast<Index>(labels.size()) != logits.rows() || labels.size() != mask.size())
    throw std::invalid_argument("masked_cross_entropy: labels/mask length does not match logits " + logits.shape());
  Matrix weights = Matrix::Zero(logits.rows(), logits.cols());
  double count = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i]) continue;
    if (labels[i] < 0 || labels[i] >= logits.cols()) throw std::out_of_range("masked_cross_entropy: label out of range");
    weights(static_cast<Index>(i), labels[i]) = 1.0;
    count += 1.0;
  }
  if (count == 0.0) throw std::invalid_argument("masked_cross_entropy: empty labeled mask");
  weights *= -1.0 / count;
  return sum(mul(log(row_softmax(logits)), logits.tape().constant(std::move(weights))));
}

// task + alpha * mean of the per-level pool losses.
inline Tensor loss_total(const Tensor& task_loss, std::span<const Tensor> pool_losses, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("loss_total: alpha must be >= 0");
  if (pool_losses.empty()) return task_loss;
  Tensor pooled = pool_losses.front();
  for (std::size_t i = 1; i < pool_losses.size(); ++i) pooled = add(pooled, pool_losses[i]);
  return add(task_loss, scale(pooled, alpha / static_cast<double>(pool_losses.size())));
}

inline Tensor loss_total(const GxnForward& fwd, Index graph_label, double alpha) {
  return loss_total(cross_entropy(fwd.logits, graph_label), fwd.pool_losses, alpha);
}

inline Tensor loss_total(const GxnForward& fwd, std::span<const Index> labels, std::span<const char> mask,
                         double alpha) {
  return loss_total(masked_cross_entropy(fwd.logits, labels, mask), fwd.pool_losses, alpha);
}

inline Index argmax_row(const Matrix& m, Index row) {
  Index best = 0;
  for (Index j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = j;
  return best;
}

}  // namespace gxn
