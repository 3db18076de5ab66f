#pragma once

// Randomized property suites behind the `check` subcommand. Each property
// runs a handful of seeded trials and reports the worst observed deviation.

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gxn/autodiff.hpp"
#include "gxn/data.hpp"
#include "gxn/graph.hpp"
#include "gxn/model.hpp"
#include "gxn/oracles.hpp"
#include "gxn/rng.hpp"
#include "gxn/vipool.hpp"

namespace gxn {

struct PropertyResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace props {

inline Graph random_graph(Index n, double p, Rng& rng, Index feature_width = 0, bool connected = true) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v)
      if ((connected && v == u + 1) || coin(rng) < p) edges.push_back({u, v, 1.0});
  Matrix x(n, feature_width);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < feature_width; ++j) x(i, j) = gauss(rng);
  return Graph::from_edges(n, edges, std::move(x));
}

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

inline std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

inline PropertyResult bound(std::string suite, std::string name, double worst, double limit) {
  return {std::move(suite), std::move(name), worst < limit, "worst " + fmt(worst) + " (limit " + fmt(limit) + ")"};
}

inline PropertyResult holds(std::string suite, std::string name, bool ok, std::string detail) {
  return {std::move(suite), std::move(name), ok, std::move(detail)};
}

// Scalar test function of one 3x4 input per kernel.
inline std::vector<std::pair<std::string, std::function<Tensor(Tape&, Parameter&, const Matrix&)>>> kernels() {
  using F = std::function<Tensor(Tape&, Parameter&, const Matrix&)>;
  std::vector<std::pair<std::string, F>> k;
  // Outputs are contracted with the leading block of a fixed 3x4 weight w.
  const auto contract = [](const Tensor& y, const Matrix& w) { return sum(mul(y, y.tape().constant(w.topLeftCorner(y.rows(), y.cols())))); };
  k.emplace_back("matmul", [=](Tape& t, Parameter& p, const Matrix& w) {
    return contract(matmul(t.parameter(p), t.constant(Matrix(w.transpose()))), w);
  });
  k.emplace_back("add", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(add(t.parameter(p), t.constant(w)), w); });
  k.emplace_back("sub", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(sub(t.constant(w), t.parameter(p)), w); });
  k.emplace_back("mul", [=](Tape& t, Parameter& p, const Matrix& w) {
    Tensor x = t.parameter(p);
    return contract(mul(x, x), w);
  });
  k.emplace_back("add_row", [=](Tape& t, Parameter& p, const Matrix& w) {
    return contract(add_row(t.parameter(p), t.constant(Matrix(w.row(0)))), w);
  });
  k.emplace_back("scale_rows", [=](Tape& t, Parameter& p, const Matrix& w) {
    Tensor x = t.parameter(p);
    return contract(scale_rows(x, row_sum(x)), w);
  });
  k.emplace_back("transpose", [=](Tape& t, Parameter& p, const Matrix& w) {
    return contract(transpose(transpose(t.parameter(p))), w);
  });
  k.emplace_back("relu", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(relu(t.parameter(p)), w); });
  k.emplace_back("sigmoid", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(sigmoid(t.parameter(p)), w); });
  k.emplace_back("log", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(log(sigmoid(t.parameter(p))), w); });
  k.emplace_back("exp", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(exp(t.parameter(p)), w); });
  k.emplace_back("row_softmax", [=](Tape& t, Parameter& p, const Matrix& w) {
    return contract(row_softmax(t.parameter(p)), w);
  });
  k.emplace_back("gather_rows", [=](Tape& t, Parameter& p, const Matrix& w) {
    return contract(gather_rows(t.parameter(p), std::vector<Index>{2, 0, 2}), w);
  });
  k.emplace_back("scatter_rows", [=](Tape& t, Parameter& p, const Matrix& w) {
    return contract(scatter_rows(t.parameter(p), std::vector<Index>{2, 0, 1}, 3), w);
  });
  k.emplace_back("mean", [=](Tape& t, Parameter& p, const Matrix& w) {
    return scale(mean(mul(t.parameter(p), t.constant(w))), 3.0);
  });
  k.emplace_back("row_sum", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(row_sum(t.parameter(p)), w); });
  k.emplace_back("col_mean", [=](Tape& t, Parameter& p, const Matrix& w) { return contract(col_mean(t.parameter(p)), w); });
  k.emplace_back("concat_cols", [=](Tape& t, Parameter& p, const Matrix& w) {
    Tensor x = t.parameter(p);
    return sum(mul(concat_cols({x, sigmoid(x)}), t.constant(Matrix(w.replicate(1, 2)))));
  });
  k.emplace_back("flatten", [=](Tape& t, Parameter& p, const Matrix& w) {
    return sum(mul(flatten(t.parameter(p)), t.constant(Matrix(w.reshaped<Eigen::RowMajor>(1, w.size())))));
  });
  return k;
}

// Zero biases put ReLU inputs exactly on the kink wherever a row is all
// zero; finite differences need a generic point.
inline void randomize_biases(ParameterStore& store, Rng& rng, double spread = 0.5) {
  std::uniform_real_distribution<double> u(-spread, spread);
  for (Parameter* p : store.all())
    if (p->rows() == 1)
      for (Index j = 0; j < p->cols(); ++j) p->value(0, j) = u(rng);
}

}  // namespace props

inline std::vector<PropertyResult> check_graph_core(std::uint64_t seed, int trials = 20) {
  Rng rng = make_rng(seed, "check.graph");
  std::uniform_int_distribution<Index> size(2, 50);
  double worst_formula = 0.0, worst_symmetry = 0.0;
  bool monotone = true, induced_symmetric = true;
  for (int t = 0; t < trials; ++t) {
    const Graph g = props::random_graph(size(rng), 0.15, rng, 0, t % 2 == 0);
    const Matrix p = normalized_operator(g).to_dense();
    worst_formula = std::max(worst_formula, (p - oracle::normalized_operator(g.dense_adjacency())).cwiseAbs().maxCoeff());
    worst_symmetry = std::max(worst_symmetry, (p - p.transpose()).cwiseAbs().maxCoeff());
    for (Index v = 0; v < g.size(); ++v)
      for (int r = 1; r <= 3; ++r) {
        const auto inner = neighborhood(g, v, r).members;
        const auto outer = neighborhood(g, v, r + 1).members;
        monotone = monotone && std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
      }
    std::vector<Index> ids;
    for (Index v = 0; v < g.size(); v += 2) ids.push_back(v);
    const Matrix sub = induced_adjacency(g, ids);
    induced_symmetric = induced_symmetric && sub.isApprox(sub.transpose(), 0.0);
  }
  return {props::bound("graph-core", "operator matches dense formula", worst_formula, 1e-12),
          props::bound("graph-core", "operator symmetric", worst_symmetry, 1e-12),
          props::holds("graph-core", "neighborhood monotone in radius", monotone, "radii 1..4"),
          props::holds("graph-core", "induced adjacency symmetric", induced_symmetric, "even-index subsets")};
}

inline std::vector<PropertyResult> check_autodiff(std::uint64_t seed) {
  Rng rng = make_rng(seed, "check.autodiff");
  std::vector<PropertyResult> out;
  for (const auto& [name, f] : props::kernels()) {
    ParameterStore store;
    Parameter& p = store.add("x", props::random_matrix(3, 4, rng, 0.1, 1.0));
    const Matrix w = props::random_matrix(3, 4, rng);
    Parameter* params[] = {&p};
    const double err = finite_difference_check([&](Tape& t) { return f(t, p, w); }, params, 1e-6);
    out.push_back(props::bound("tensor-autodiff", "gradient of " + name, err, 1e-6));
  }
  {
    Tape tape;
    Tensor x = tape.constant(props::random_matrix(5, 7, rng, -30.0, 30.0));
    const Matrix s = row_softmax(x).value();
    out.push_back(props::bound("tensor-autodiff", "row_softmax rows sum to 1", (s.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12));
  }
  {
    // Diamond: y = sum(a*x) + sum(b*x) reached through two branches.
    ParameterStore store;
    Parameter& p = store.add("x", props::random_matrix(3, 4, rng));
    const Matrix a = props::random_matrix(3, 4, rng), b = props::random_matrix(3, 4, rng);
    const auto run = [&](bool swap) {
      p.zero_grad();
      Tape tape;
      Tensor x = tape.parameter(p);
      Tensor left = sum(mul(x, tape.constant(swap ? b : a)));
      Tensor right = sum(mul(x, tape.constant(swap ? a : b)));
      tape.backward(add(left, right));
      return p.grad;
    };
    const Matrix g1 = run(false), g2 = run(true);
    out.push_back(props::bound("tensor-autodiff", "fan-out accumulation order-independent",
                               std::max((g1 - g2).cwiseAbs().maxCoeff(), (g1 - (a + b)).cwiseAbs().maxCoeff()), 1e-15));
  }
  return out;
}

inline std::vector<PropertyResult> check_vipool(std::uint64_t seed, int trials = 20) {
  Rng rng = make_rng(seed, "check.vipool");
  std::uniform_int_distribution<Index> size(4, 10);
  double worst_rowsum = 0.0, worst_offdiag = 0.0, worst_er = 0.0, worst_cluster = 0.0, worst_scatter = 0.0;
  double worst_zero_loss = 0.0;
  bool topk_ok = true, greedy_ok = true, unit_interval = true;
  for (int t = 0; t < trials; ++t) {
    const Index n = size(rng);
    const Graph g = props::random_graph(n, 0.3, rng, 3);
    ParameterStore store;
    Rng init = make_rng(seed + static_cast<std::uint64_t>(t), "init");
    const auto est = VipoolEstimator::create(store, "est", 3, 4, 1 + t % 2,
                                                 t % 2 ? AffinityForm::bilinear : AffinityForm::concat, init);
    const PropagationOperator op = normalized_operator(g);
    const FrozenAffinity affinity(est, op, g.features());
    Matrix logits(n, n);
    for (Index v = 0; v < n; ++v)
      for (Index u = 0; u < n; ++u) logits(v, u) = affinity.logit(v, u);
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (Index v = 0; v < n; ++v) scores[static_cast<std::size_t>(v)] = oracle::log_sigmoid(logits(v, v));
    for (Index k = 1; k <= std::min<Index>(4, n); ++k)
      topk_ok = topk_ok && select_topk(affinity, k) == oracle::best_subset(scores, k);
    const auto greedy = select_greedy(affinity, std::min<Index>(n, 5));
    for (std::size_t step = 0; step < greedy.size(); ++step)
      greedy_ok = greedy_ok && greedy[step] == oracle::best_addition(logits, std::vector<Index>(greedy.begin(), greedy.begin() + static_cast<std::ptrdiff_t>(step)));

    std::uniform_int_distribution<Index> keep(1, n - 1);
    std::vector<Index> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), Index{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<std::size_t>(keep(rng)));
    std::sort(ids.begin(), ids.end());
    const Matrix reduced = kron_reduced_laplacian(g, ids);
    worst_rowsum = std::max(worst_rowsum, reduced.rowwise().sum().cwiseAbs().maxCoeff());
    for (Index i = 0; i < reduced.rows(); ++i)
      for (Index j = 0; j < reduced.cols(); ++j)
        if (i != j) worst_offdiag = std::max(worst_offdiag, reduced(i, j));
    const Matrix full_pinv = oracle::pseudo_inverse(oracle::laplacian(g.dense_adjacency()));
    const Matrix reduced_pinv = oracle::pseudo_inverse(reduced);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        worst_er = std::max(worst_er, std::abs(oracle::effective_resistance(full_pinv, ids[i], ids[j]) -
                                               oracle::effective_resistance(reduced_pinv, static_cast<Index>(i), static_cast<Index>(j))));

    const PooledStructure cluster = pool_structure(g, ids, StructurePool::cluster);
    worst_cluster = std::max({worst_cluster, (cluster.assignment->rowwise().sum().array() - 1.0).abs().maxCoeff(),
                              (cluster.adjacency - cluster.adjacency.transpose()).cwiseAbs().maxCoeff()});

    Tape tape;
    Tensor x = tape.constant(g.features());
    Tensor a = affinity_scores(est, op, x, ids);
    unit_interval = unit_interval && (a.value().array() > 0.0).all() && (a.value().array() < 1.0).all();
    const Matrix back = scatter_rows(pool_features(x, ids, a), ids, n).value();
    for (std::size_t i = 0; i < ids.size(); ++i)
      worst_scatter = std::max(worst_scatter, (back.row(ids[i]) - a.value()(static_cast<Index>(i), 0) * g.features().row(ids[i])).cwiseAbs().maxCoeff());

    est.set_zero();
    Rng negatives = make_rng(seed + static_cast<std::uint64_t>(t), "negatives");
    Tape zero_tape;
    const double zero_loss = mi_bound_loss(est, op, zero_tape.constant(g.features()), 1, negatives).item();
    worst_zero_loss = std::max(worst_zero_loss, std::abs(zero_loss - 2.0 * std::log(2.0)));
  }
  return {props::holds("vipool", "top-K maximizes the positive term (exhaustive, K<=4)", topk_ok, "n<=10"),
          props::holds("vipool", "greedy step is the exhaustive single-addition argmax", greedy_ok, "n<=10"),
          props::bound("vipool", "Kron Schur rows sum to zero", worst_rowsum, 1e-8),
          props::bound("vipool", "Kron Schur off-diagonals nonpositive (max entry)", std::max(worst_offdiag, 0.0), 1e-12),
          props::bound("vipool", "Kron preserves kept-pair effective resistance", worst_er, 1e-8),
          props::bound("vipool", "cluster rows sum to 1 and A symmetric", worst_cluster, 1e-9),
          props::holds("vipool", "affinity scores in (0, 1)", unit_interval, "all trials"),
          props::bound("vipool", "pool then scatter recovers scaled rows", worst_scatter, 1e-15),
          props::bound("vipool", "zero estimator loss equals 2 ln 2", worst_zero_loss, 1e-12)};
}

inline std::vector<PropertyResult> check_model(std::uint64_t seed) {
  std::vector<PropertyResult> out;
  const AlphaSchedule schedule{2.0, 0.0, 60};
  out.push_back(props::holds("gxn-model", "alpha schedule endpoints",
                             schedule.at(0) == 2.0 && schedule.at(30) == 1.0 && schedule.at(60) == 0.0, "E=60"));

  Rng rng = make_rng(seed, "check.model");
  const Graph g = props::random_graph(6, 0.4, rng, 3);
  GxnConfig cfg;
  cfg.scales = 1;
  cfg.keep_ratios = {0.5};
  cfg.hidden = 4;
  GxnModel model(cfg, 3, 2, Task::graph, seed);
  props::randomize_biases(model.parameters(), rng);
  const ScalePyramid pyramid = model.build_pyramid(g);
  const Rng negatives = make_rng(seed, "negatives");
  const auto params = model.parameters().all();
  const double err = finite_difference_check(
      [&](Tape& tape) {
        Rng r = negatives;
        return loss_total(model.forward(tape, g, pyramid, r), 1, 1.0);
      },
      params);
  out.push_back(props::bound("gxn-model", "end-to-end gradient (6 vertices, 2 scales)", err, 1e-4));

  // Relabeling invariance of the sum-align graph readout.
  GxnConfig inv_cfg;
  inv_cfg.hidden = 8;
  GxnModel inv(inv_cfg, 3, 2, Task::graph, seed + 1);
  const Graph h = props::random_graph(12, 0.3, rng, 3);
  std::vector<Index> perm(12);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pa(12, 12), px(12, 3);
  const Matrix ha = h.dense_adjacency();
  for (Index i = 0; i < 12; ++i) {
    px.row(perm[i]) = h.features().row(i);
    for (Index j = 0; j < 12; ++j) pa(perm[i], perm[j]) = ha(i, j);
  }
  const Graph permuted = Graph::from_dense(pa, px);
  const auto logits = [&](const Graph& graph) {
    Tape tape;
    return Matrix(inv.forward(tape, graph, inv.build_pyramid(graph)).logits.value());
  };
  out.push_back(props::bound("gxn-model", "sum-align readout invariant under relabeling",
                             (logits(h) - logits(permuted)).cwiseAbs().maxCoeff(), 1e-9));
  return out;
}

inline std::vector<PropertyResult> check_data(std::uint64_t seed) {
  std::vector<PropertyResult> out;
  const GraphDataset ds = synth_two_class(12, 9, 0.5, 0.2, seed);
  GraphDataset native = ds;
  native.feature_mode = FeatureMode::native;
  const auto dir = std::filesystem::temp_directory_path() / ("gxn-check-" + std::to_string(seed));
  std::filesystem::remove_all(dir);
  write_tu_like(native, dir, "RT");
  const GraphDataset back = load_tu_like(dir, FeatureMode::native);
  bool same = back.size() == ds.size() && back.labels == ds.labels;
  for (std::size_t i = 0; same && i < ds.size(); ++i)
    same = back.graphs[i].dense_adjacency() == ds.graphs[i].dense_adjacency() &&
           back.graphs[i].features() == ds.graphs[i].features();
  std::filesystem::remove_all(dir);
  out.push_back(props::holds("data-io", "TU-like round trip is bit-exact", same, "12 graphs"));

  std::vector<Index> labels;
  for (int i = 0; i < 97; ++i) labels.push_back(i % 7 == 0 ? 2 : i % 3 == 0 ? 1 : 0);
  std::map<Index, double> totals;
  for (Index l : labels) totals[l] += 1.0;
  const auto folds = kfold_splits(labels, 10, seed, nullptr);
  double worst = 0.0;
  for (const Fold& f : folds)
    for (const auto& [label, total] : totals) {
      double count = 0.0;
      for (Index i : f.test) count += labels[static_cast<std::size_t>(i)] == label;
      worst = std::max(worst, std::abs(count - total / 10.0));
    }
  out.push_back(props::holds("data-io", "stratified folds within +-1 of proportional", worst <= 1.0,
                             "worst deviation " + props::fmt(worst)));
  return out;
}

inline std::vector<PropertyResult> run_property_suites(std::uint64_t seed) {
  std::vector<PropertyResult> all;
  for (auto&& part : {check_graph_core(seed), check_autodiff(seed), check_vipool(seed), check_model(seed), check_data(seed)})
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

}  // namespace gxn
