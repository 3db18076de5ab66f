#pragma once

// Training loops: minibatch graph classification, full-batch vertex
// classification, standalone estimator fitting, and k-fold evaluation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "gxn/autodiff.hpp"
#include "gxn/checkpoint.hpp"
#include "gxn/config.hpp"
#include "gxn/data.hpp"
#include "gxn/model.hpp"
#include "gxn/rng.hpp"
#include "gxn/vipool.hpp"

namespace gxn {

struct EpochRecord {
  int epoch = 0;
  double alpha = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double valid_accuracy = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;  // -1: no validation data or no epochs; final parameters kept
  double best_valid_accuracy = std::numeric_limits<double>::quiet_NaN();
};

using Snapshot = std::vector<Matrix>;

inline Snapshot snapshot(const ParameterStore& store) {
  Snapshot s;
  for (const Parameter* p : store.all()) s.push_back(p->value);
  return s;
}

inline void restore(ParameterStore& store, const Snapshot& s) {
  const auto params = store.all();
  if (params.size() != s.size()) throw std::invalid_argument("restore: snapshot does not match store");
  for (std::size_t i = 0; i < s.size(); ++i) params[i]->value = s[i];
}

inline AlphaSchedule alpha_schedule(const TrainConfig& tc) { return {tc.alpha_start, tc.alpha_end, tc.epochs}; }

inline void check_model_fits(const GxnModel& model, Index feature_width, Index num_classes) {
  if (model.input_width() != feature_width)
    throw std::invalid_argument("model input width " + std::to_string(model.input_width()) +
                                " does not match data feature width " + std::to_string(feature_width));
  if (model.num_classes() < num_classes)
    throw std::invalid_argument("model has " + std::to_string(model.num_classes()) + " classes, data has " +
                                std::to_string(num_classes));
}

// ---- graph task ----------------------------------------------------------

inline Matrix graph_logits(const GxnModel& model, const Graph& g) {
  const ScalePyramid pyramid = model.build_pyramid(g);
  Tape tape;
  return model.forward(tape, g, pyramid).logits.value();
}

inline std::vector<Index> predict_graphs(const GxnModel& model, const GraphDataset& ds, std::span<const Index> ids) {
  std::vector<Index> out;
  out.reserve(ids.size());
  for (Index i : ids) out.push_back(argmax_row(graph_logits(model, ds.graphs[static_cast<std::size_t>(i)]), 0));
  return out;
}

inline double evaluate_graphs(const GxnModel& model, const GraphDataset& ds, std::span<const Index> ids) {
  if (ids.empty()) throw std::invalid_argument("evaluate_graphs: no graphs");
  const std::vector<Index> predicted = predict_graphs(model, ds, ids);
  std::vector<Index> truth;
  for (Index i : ids) truth.push_back(ds.labels[static_cast<std::size_t>(i)]);
  return accuracy(predicted, truth);
}

// Selection is refreshed once per epoch with the current parameters; the
// best-validation parameters (latest on ties) are restored at the end.
inline TrainResult train_graph_model(GxnModel& model, const GraphDataset& ds, std::span<const Index> train_ids,
                                     std::span<const Index> valid_ids, const TrainConfig& tc, std::uint64_t seed,
                                     const EpochCallback& on_epoch = {}) {
  tc.validate();
  check_model_fits(model, ds.feature_width(), ds.num_classes);
  if (train_ids.empty()) throw std::invalid_argument("train_graph_model: empty training set");
  Rng order_rng = make_rng(seed, "order");
  Rng negatives = make_rng(seed, "negatives");
  const AlphaSchedule schedule = alpha_schedule(tc);
  const AdamOptions adam{tc.learning_rate};
  ParameterStore& store = model.parameters();
  const std::vector<Parameter*> params = store.all();
  std::vector<Index> order(train_ids.begin(), train_ids.end());
  std::vector<ScalePyramid> pyramids(ds.size());
  TrainResult result;
  Snapshot best;
  long step = 0;
  store.zero_grad();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double alpha = schedule.at(epoch);
    for (Index i : order) pyramids[static_cast<std::size_t>(i)] = model.build_pyramid(ds.graphs[static_cast<std::size_t>(i)]);
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(tc.batch_size));
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        const auto i = static_cast<std::size_t>(order[b]);
        Tape tape;
        const GxnForward fwd = model.forward(tape, ds.graphs[i], pyramids[i], negatives, tc.negatives_per_positive);
        const Tensor loss = loss_total(fwd, ds.labels[i], alpha);
        tape.backward(scale(loss, weight));
        loss_sum += loss.item();
        correct += argmax_row(fwd.logits.value(), 0) == ds.labels[i];
      }
      adam_step(params, adam, ++step);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = alpha;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!valid_ids.empty()) {
      rec.valid_accuracy = evaluate_graphs(model, ds, valid_ids);
      if (result.best_epoch < 0 || rec.valid_accuracy >= result.best_valid_accuracy) {
        result.best_epoch = epoch;
        result.best_valid_accuracy = rec.valid_accuracy;
        best = snapshot(store);
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (result.best_epoch >= 0) restore(store, best);
  return result;
}

// ---- vertex task ---------------------------------------------------------

inline std::vector<Index> predict_vertices(const GxnModel& model, const Graph& g) {
  const Matrix logits = graph_logits(model, g);
  std::vector<Index> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(logits, i);
  return out;
}

inline bool any(std::span<const char> mask) {
  return std::any_of(mask.begin(), mask.end(), [](char c) { return c != 0; });
}

inline TrainResult train_vertex_model(GxnModel& model, const Graph& g, std::span<const Index> labels,
                                      std::span<const char> train_mask, std::span<const char> valid_mask,
                                      const TrainConfig& tc, std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  tc.validate();
  if (model.task() != Task::vertex) throw std::invalid_argument("train_vertex_model: model is not a vertex model");
  check_model_fits(model, g.feature_width(), *std::max_element(labels.begin(), labels.end()) + 1);
  if (!any(train_mask)) throw std::invalid_argument("train_vertex_model: empty training mask");
  Rng negatives = make_rng(seed, "negatives");
  const AlphaSchedule schedule = alpha_schedule(tc);
  const AdamOptions adam{tc.learning_rate};
  ParameterStore& store = model.parameters();
  const std::vector<Parameter*> params = store.all();
  const bool has_valid = any(valid_mask);
  TrainResult result;
  Snapshot best;
  store.zero_grad();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double alpha = schedule.at(epoch);
    const ScalePyramid pyramid = model.build_pyramid(g);
    Tape tape;
    const GxnForward fwd = model.forward(tape, g, pyramid, negatives, tc.negatives_per_positive);
    const Tensor loss = loss_total(fwd, labels, train_mask, alpha);
    tape.backward(loss);
    adam_step(params, adam, epoch + 1);

    std::vector<Index> predicted(labels.size());
    for (Index i = 0; i < fwd.logits.rows(); ++i) predicted[static_cast<std::size_t>(i)] = argmax_row(fwd.logits.value(), i);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = alpha;
    rec.train_loss = loss.item();
    rec.train_accuracy = accuracy(predicted, labels, train_mask);
    if (has_valid) {
      rec.valid_accuracy = accuracy(predict_vertices(model, g), labels, valid_mask);
      if (result.best_epoch < 0 || rec.valid_accuracy >= result.best_valid_accuracy) {
        result.best_epoch = epoch;
        result.best_valid_accuracy = rec.valid_accuracy;
        best = snapshot(store);
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (result.best_epoch >= 0) restore(store, best);
  return result;
}

// ---- standalone estimator ------------------------------------------------

// Adam on the mutual-information bound alone; returns the loss of the last
// step.
inline double train_estimator(const VipoolEstimator& est, const PropagationOperator& op, const Matrix& x, int steps,
                              double learning_rate, Rng& negatives, int negatives_per_positive = 1) {
  if (steps < 0) throw std::invalid_argument("train_estimator: steps must be >= 0");
  const std::vector<Parameter*> params = est.parameters();
  for (Parameter* p : params) p->zero_grad();
  const AdamOptions adam{learning_rate};
  double last = std::numeric_limits<double>::quiet_NaN();
  for (int step = 1; step <= steps; ++step) {
    Tape tape;
    const Tensor loss = mi_bound_loss(est, op, tape.constant(x), negatives_per_positive, negatives);
    tape.backward(loss);
    adam_step(params, adam, step);
    last = loss.item();
  }
  return last;
}

// ---- k-fold graph classification -----------------------------------------

struct FoldResult {
  int fold = 0;
  double test_accuracy = 0.0;
  TrainResult training;
  nlohmann::json checkpoint;
};

// Holds out validation_fraction of the training ids (deterministic per fold).
inline std::pair<std::vector<Index>, std::vector<Index>> split_validation(std::span<const Index> train, double fraction,
                                                                          std::uint64_t seed) {
  std::vector<Index> ids(train.begin(), train.end());
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ids.size())));
  if (held == 0) return {ids, {}};
  Rng rng = make_rng(seed, "folds");
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<Index> valid(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<Index> rest(ids.begin() + static_cast<std::ptrdiff_t>(held), ids.end());
  std::sort(valid.begin(), valid.end());
  std::sort(rest.begin(), rest.end());
  return {rest, valid};
}

// Runs fn(0..count-1) on up to `threads` workers; fn must only touch its own
// slot of shared output.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (int t = 0; t < std::min(threads, count); ++t) {
    workers.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

// Fold f trains a fresh model seeded with child_seed(seed, f).
inline std::vector<FoldResult> cross_validate(const GxnConfig& cfg, const TrainConfig& tc, const GraphDataset& ds,
                                              std::uint64_t seed, std::ostream* warnings = &std::cerr,
                                              const std::function<void(int, const EpochRecord&)>& on_epoch = {}) {
  ds.validate();
  tc.validate();
  const std::vector<Fold> folds = kfold_splits(ds.labels, tc.folds, seed, warnings);
  const std::string hash = config_hash(cfg);
  std::vector<FoldResult> results(folds.size());
  std::mutex callback_mutex;
  parallel_for(static_cast<int>(folds.size()), tc.threads, [&](int f) {
    const std::uint64_t fold_seed = child_seed(seed, static_cast<std::uint64_t>(f));
    GxnModel model(cfg, ds.feature_width(), ds.num_classes, Task::graph, fold_seed);
    auto [train, valid] = split_validation(folds[static_cast<std::size_t>(f)].train, tc.validation_fraction, fold_seed);
    EpochCallback cb;
    if (on_epoch)
      cb = [&, f](const EpochRecord& r) {
        std::lock_guard<std::mutex> lock(callback_mutex);
        on_epoch(f, r);
      };
    FoldResult& out = results[static_cast<std::size_t>(f)];
    out.fold = f;
    out.training = train_graph_model(model, ds, train, valid, tc, fold_seed, cb);
    out.test_accuracy = evaluate_graphs(model, ds, folds[static_cast<std::size_t>(f)].test);
    out.checkpoint = checkpoint_json(model.parameters(), hash);
  });
  return results;
}

inline double mean_test_accuracy(std::span<const FoldResult> folds) {
  if (folds.empty()) throw std::invalid_argument("mean_test_accuracy: no folds");
  double total = 0.0;
  for (const FoldResult& f : folds) total += f.test_accuracy;
  return total / static_cast<double>(folds.size());
}

}  // namespace gxn
