#pragma once

// Command implementations behind the CLI. Every command writes CSV tables
// and exactly one manifest.json into its output directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gxn/checkpoint.hpp"
#include "gxn/config.hpp"
#include "gxn/data.hpp"
#include "gxn/model.hpp"
#include "gxn/properties.hpp"
#include "gxn/train.hpp"
#include "gxn/vipool.hpp"

namespace gxn {

// ---- output plumbing -----------------------------------------------------

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size())
      throw std::logic_error("csv: row has " + std::to_string(row.size()) + " fields, header has " +
                             std::to_string(header_.size()));
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const {
    std::string out;
    const auto line = [&](const std::vector<std::string>& fields) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += quote(fields[i]);
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << str();
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string csv_number(double x) { return std::isnan(x) ? std::string() : format_double(x); }

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::array();  // one object per metric row
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"command", command},     {"config_hash", config_hash}, {"seed", seed},
            {"wall_seconds", wall_seconds}, {"metrics", metrics},   {"details", details}};
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
  }
};

struct CommonOptions {
  Task task = Task::graph;
  std::string data;
  std::string mask;    // vertex sidecar; defaults to <data>.mask
  std::string config;  // run config JSON (optional)
  std::uint64_t seed = 0;
  std::string out = "out";
  nlohmann::json model_overrides = nlohmann::json::object();
  nlohmann::json train_overrides = nlohmann::json::object();
  std::ostream* log = &std::cerr;
};

inline RunConfig resolve_config(const CommonOptions& o) {
  nlohmann::json doc = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw std::runtime_error("cannot open config " + o.config);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("config " + o.config + ": " + e.what());
    }
  }
  for (const auto& [k, v] : o.model_overrides.items()) doc["model"][k] = v;
  for (const auto& [k, v] : o.train_overrides.items()) doc["train"][k] = v;
  // A scales override without explicit ratios takes the default ratios.
  if (o.model_overrides.contains("scales") && !o.model_overrides.contains("keep_ratios") && doc.contains("model"))
    doc["model"].erase("keep_ratios");
  return run_config_from_json(doc, o.task);
}

inline std::filesystem::path prepare_out(const std::string& out) {
  std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  return dir;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---- data sources --------------------------------------------------------
//
//   synth:two-class[:graphs:vertices:p_a:p_b]     graph task
//   synth:communities[:vertices:communities]      vertex task / single graph
//   <dir>                                         TU-like directory
//   <file>                                        graph text file (+ mask sidecar)

inline std::vector<std::string> split_colon(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ':')) parts.push_back(part);
  return parts;
}

inline GraphDataset load_graph_dataset(const std::string& source, std::uint64_t seed) {
  if (source.rfind("synth:two-class", 0) == 0) {
    const auto p = split_colon(source);
    if (p.size() != 2 && p.size() != 6) throw std::invalid_argument("expected synth:two-class[:graphs:vertices:p_a:p_b]");
    if (p.size() == 2) return synth_two_class(200, 20, 0.5, 0.15, seed);
    return synth_two_class(parse_index(p[2], source), parse_index(p[3], source), parse_double(p[4], source),
                           parse_double(p[5], source), seed);
  }
  if (source.rfind("synth:", 0) == 0) throw std::invalid_argument("unknown graph-task source '" + source + "'");
  return load_tu_like(source);
}

inline constexpr Index kCommunityFeatureWidth = 16;

// Communities of equal size; the first two vertices of each community are
// labeled for training, the next two for validation, the rest for testing.
inline VertexDataset synth_community_dataset(Index n, Index communities, std::uint64_t seed) {
  VertexDataset ds = synth_communities(n, communities, 0.2, 0.01, kCommunityFeatureWidth, 1.0, seed);
  std::vector<Index> seen(static_cast<std::size_t>(communities), 0);
  for (Index v = 0; v < n; ++v) {
    const Index c = ds.labels[static_cast<std::size_t>(v)];
    const Index rank = seen[static_cast<std::size_t>(c)]++;
    ds.split[static_cast<std::size_t>(v)] = rank < 2 ? Split::train : rank < 4 ? Split::valid : Split::test;
  }
  return ds;
}

inline VertexDataset load_vertex_data(const std::string& source, const std::string& mask, std::uint64_t seed) {
  if (source.rfind("synth:communities", 0) == 0) {
    const auto p = split_colon(source);
    if (p.size() != 2 && p.size() != 4) throw std::invalid_argument("expected synth:communities[:vertices:communities]");
    if (p.size() == 2) return synth_community_dataset(200, 4, seed);
    return synth_community_dataset(parse_index(p[2], source), parse_index(p[3], source), seed);
  }
  if (source.rfind("synth:", 0) == 0) throw std::invalid_argument("unknown vertex-task source '" + source + "'");
  return load_vertex_dataset(source, mask.empty() ? source + ".mask" : mask);
}

// A graph without features gets degree one-hot features.
inline Graph with_default_features(Graph g) {
  if (g.feature_width() > 0) return g;
  Index max_degree = 1;
  for (Index d : g.degrees()) max_degree = std::max(max_degree, d);
  return g.with_features(degree_one_hot(g, std::min(max_degree, kMaxDegreeBins)));
}

inline Graph load_single_graph(const std::string& source, std::uint64_t seed) {
  if (source.rfind("synth:", 0) == 0) return load_vertex_data(source, "", seed).graph;
  std::ifstream in(source);
  if (!in) throw std::runtime_error("cannot open graph " + source);
  return with_default_features(read_graph(in));
}

// Rejects a config whose pyramid cannot be built on some graph.
inline void check_config_fits(const GxnConfig& cfg, std::span<const Graph> graphs) {
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    Index n = graphs[i].size();
    for (std::size_t s = 0; s < cfg.keep_ratios.size(); ++s) {
      const Index k = pooled_size(cfg.keep_ratios[s], n);
      if (k < 1 || k >= n)
        throw std::invalid_argument("config does not fit data: graph " + std::to_string(i) + " level " +
                                    std::to_string(s + 1) + " would keep " + std::to_string(k) + " of " +
                                    std::to_string(n) + " vertices");
      n = k;
    }
  }
}

// ---- train ---------------------------------------------------------------

inline void add_epoch_row(CsvTable& t, int fold, const EpochRecord& r) {
  t.add({std::to_string(fold), std::to_string(r.epoch), csv_number(r.alpha), csv_number(r.train_loss),
         csv_number(r.train_accuracy), csv_number(r.valid_accuracy), csv_number(r.seconds)});
}

inline RunManifest cmd_train(const CommonOptions& o) {
  Stopwatch clock;
  const RunConfig rc = resolve_config(o);
  const auto dir = prepare_out(o.out);
  RunManifest m;
  m.command = "train";
  m.seed = o.seed;
  m.config_hash = config_hash(rc.model);
  m.details = {{"task", to_string(o.task)}, {"data", o.data}, {"config", to_json(rc)}};
  CsvTable epochs({"fold", "epoch", "alpha", "train_loss", "train_accuracy", "valid_accuracy", "seconds"});

  if (o.task == Task::graph) {
    const GraphDataset ds = load_graph_dataset(o.data, o.seed);
    check_config_fits(rc.model, ds.graphs);
    const auto folds = cross_validate(rc.model, rc.train, ds, o.seed, o.log);
    CsvTable summary({"fold", "best_epoch", "best_valid_accuracy", "test_accuracy"});
    for (const FoldResult& f : folds) {
      for (const EpochRecord& r : f.training.history) add_epoch_row(epochs, f.fold, r);
      summary.add({std::to_string(f.fold), std::to_string(f.training.best_epoch),
                   csv_number(f.training.best_valid_accuracy), csv_number(f.test_accuracy)});
      m.metrics.push_back({{"fold", f.fold}, {"test_accuracy", f.test_accuracy}, {"best_epoch", f.training.best_epoch}});
      std::ofstream(dir / ("checkpoint-fold" + std::to_string(f.fold) + ".json")) << f.checkpoint.dump(1) << '\n';
    }
    m.metrics.push_back({{"fold", "mean"}, {"test_accuracy", mean_test_accuracy(folds)}});
    summary.save(dir / "folds.csv");
    if (o.log) *o.log << "mean test accuracy " << format_double(mean_test_accuracy(folds)) << '\n';
  } else {
    const VertexDataset ds = load_vertex_data(o.data, o.mask, o.seed);
    check_config_fits(rc.model, std::span<const Graph>(&ds.graph, 1));
    GxnModel model(rc.model, ds.graph.feature_width(), std::max<Index>(ds.num_classes, 2), Task::vertex,
                   child_seed(o.seed, 0));
    const auto train = ds.mask(Split::train), valid = ds.mask(Split::valid), test = ds.mask(Split::test);
    const TrainResult result = train_vertex_model(model, ds.graph, ds.labels, train, valid, rc.train, o.seed);
    for (const EpochRecord& r : result.history) add_epoch_row(epochs, 0, r);
    const double test_accuracy = accuracy(predict_vertices(model, ds.graph), ds.labels, test);
    m.metrics.push_back({{"test_accuracy", test_accuracy}, {"best_epoch", result.best_epoch}});
    save_checkpoint(model.parameters(), (dir / "checkpoint.json").string(), m.config_hash);
    if (o.log) *o.log << "test accuracy " << format_double(test_accuracy) << '\n';
  }
  epochs.save(dir / "epochs.csv");
  m.wall_seconds = clock.seconds();
  m.save(dir / "manifest.json");
  return m;
}

// ---- pool ----------------------------------------------------------------

struct PoolOptions {
  Index k = 0;  // 0: use ratio
  double ratio = 0.5;
  std::string checkpoint;  // estimator parameters; empty: zero estimator unless train_steps > 0
  int train_steps = 0;
  double learning_rate = 0.01;
};

inline constexpr const char* kEstimatorPrefix = "estimator";

inline VipoolEstimator make_estimator(ParameterStore& store, const GxnConfig& cfg, Index input_width, std::uint64_t seed) {
  Rng init = make_rng(seed, "init");
  return VipoolEstimator::create(store, kEstimatorPrefix, input_width, cfg.hidden, cfg.hops, cfg.affinity, init);
}

inline RunManifest cmd_pool(const CommonOptions& o, const PoolOptions& p) {
  Stopwatch clock;
  const RunConfig rc = resolve_config(o);
  const auto dir = prepare_out(o.out);
  const Graph g = load_single_graph(o.data, o.seed);
  const Index k = p.k > 0 ? p.k : pooled_size(p.ratio, g.size());
  check_selection_size("pool", k, g.size());
  ParameterStore store;
  const VipoolEstimator est = make_estimator(store, rc.model, g.feature_width(), o.seed);
  const std::string hash = config_hash(rc.model);
  const PropagationOperator op = normalized_operator(g);
  if (!p.checkpoint.empty()) {
    load_checkpoint(p.checkpoint, store, hash);
  } else if (p.train_steps > 0) {
    Rng negatives = make_rng(o.seed, "negatives");
    train_estimator(est, op, g.features(), p.train_steps, p.learning_rate, negatives);
  } else {
    est.set_zero();
  }
  save_checkpoint(store, (dir / "estimator.json").string(), hash);
  const Selector selector = rc.model.selector;
  const StructurePool structure = rc.model.structure_pool;
  const PoolingResult result = vipool(est, g, g.features(), k, selector, structure);

  std::vector<std::string> header{"id", "a"};
  for (Index j = 0; j < k; ++j) header.push_back("adj_" + std::to_string(j));
  CsvTable table(header);
  for (Index i = 0; i < k; ++i) {
    std::vector<std::string> row{std::to_string(result.ids[static_cast<std::size_t>(i)]), csv_number(result.affinity(i))};
    for (Index j = 0; j < k; ++j) row.push_back(csv_number(result.pooled_adjacency(i, j)));
    table.add(std::move(row));
  }
  table.save(dir / "pool.csv");

  RunManifest m;
  m.command = "pool";
  m.seed = o.seed;
  m.config_hash = hash;
  m.details = {{"data", o.data}, {"k", k}, {"selector", to_string(selector)}, {"structure_pool", to_string(structure)}};
  const FrozenAffinity frozen(est, op, g.features());
  m.metrics.push_back({{"k", k}, {"criterion", criterion_full(frozen, result.ids)}});
  m.wall_seconds = clock.seconds();
  m.save(dir / "manifest.json");
  return m;
}

// ---- compare-selection ---------------------------------------------------

struct CompareOptions {
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int seeds = 1;
  int train_steps = 200;
  double learning_rate = 0.01;
};

struct SelectionComparison {
  double ratio = 0.0;
  Index k = 0;
  double greedy = 0.0;
  double topk = 0.0;
  double relative_gap() const { return std::abs(greedy - topk) / std::abs(greedy); }
};

// Trains one estimator on g (seeded) and evaluates C under both selectors.
inline std::vector<SelectionComparison> compare_selection(const Graph& g, const GxnConfig& cfg,
                                                          std::span<const double> ratios, int train_steps,
                                                          double learning_rate, std::uint64_t seed) {
  ParameterStore store;
  const VipoolEstimator est = make_estimator(store, cfg, g.feature_width(), seed);
  const PropagationOperator op = normalized_operator(g);
  Rng negatives = make_rng(seed, "negatives");
  train_estimator(est, op, g.features(), train_steps, learning_rate, negatives);
  const FrozenAffinity affinity(est, op, g.features());
  std::vector<SelectionComparison> out;
  for (double ratio : ratios) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("compare-selection: ratios must lie in (0, 1]");
    SelectionComparison c;
    c.ratio = ratio;
    c.k = std::clamp<Index>(pooled_size(ratio, g.size()), 1, g.size());
    c.greedy = criterion_full(affinity, select_greedy(affinity, c.k));
    c.topk = criterion_full(affinity, select_topk(affinity, c.k));
    out.push_back(c);
  }
  return out;
}

inline RunManifest cmd_compare_selection(const CommonOptions& o, const CompareOptions& c) {
  Stopwatch clock;
  const RunConfig rc = resolve_config(o);
  const auto dir = prepare_out(o.out);
  const Graph g = load_single_graph(o.data, o.seed);
  CsvTable table({"seed", "ratio", "k", "c_greedy", "c_topk", "relative_gap"});
  std::vector<double> greedy_sum(c.ratios.size(), 0.0), topk_sum(c.ratios.size(), 0.0);
  for (int s = 0; s < c.seeds; ++s) {
    const std::uint64_t seed = child_seed(o.seed, static_cast<std::uint64_t>(s));
    const auto rows = compare_selection(g, rc.model, c.ratios, c.train_steps, c.learning_rate, seed);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      table.add({std::to_string(s), csv_number(r.ratio), std::to_string(r.k), csv_number(r.greedy), csv_number(r.topk),
                 csv_number(r.relative_gap())});
      greedy_sum[i] += r.greedy;
      topk_sum[i] += r.topk;
    }
  }
  table.save(dir / "compare_selection.csv");
  RunManifest m;
  m.command = "compare-selection";
  m.seed = o.seed;
  m.config_hash = config_hash(rc.model);
  m.details = {{"data", o.data}, {"seeds", c.seeds}, {"train_steps", c.train_steps}};
  for (std::size_t i = 0; i < c.ratios.size(); ++i) {
    const double greedy = greedy_sum[i] / c.seeds, topk = topk_sum[i] / c.seeds;
    m.metrics.push_back({{"ratio", c.ratios[i]},
                         {"c_greedy", greedy},
                         {"c_topk", topk},
                         {"relative_gap", std::abs(greedy - topk) / std::abs(greedy)}});
  }
  m.wall_seconds = clock.seconds();
  m.save(dir / "manifest.json");
  return m;
}

// ---- active-label --------------------------------------------------------

enum class LabelMethod { vipool, random };

inline const char* to_string(LabelMethod m) { return m == LabelMethod::vipool ? "vipool" : "random"; }

inline LabelMethod parse_label_method(const std::string& s) {
  if (s == "vipool") return LabelMethod::vipool;
  if (s == "random") return LabelMethod::random;
  throw std::invalid_argument("unknown labeling method '" + s + "' (vipool|random)");
}

struct ActiveLabelOptions {
  std::vector<Index> budgets{4};
  std::vector<LabelMethod> methods{LabelMethod::vipool, LabelMethod::random};
  int seeds = 5;
  int estimator_steps = 200;
  double estimator_learning_rate = 0.01;
  Selector selector = Selector::greedy;
};

// Vertices to label: VIPool selection from an estimator trained on the
// unlabeled graph, or a uniform sample.
inline std::vector<Index> choose_labeled(const VertexDataset& ds, const GxnConfig& cfg, Index budget,
                                         LabelMethod method, const ActiveLabelOptions& a, std::uint64_t seed) {
  const Index n = ds.graph.size();
  if (budget < 1 || budget > n)
    throw std::out_of_range("active-label: budget " + std::to_string(budget) + " outside [1, " + std::to_string(n) + "]");
  std::vector<Index> chosen;
  if (method == LabelMethod::random) {
    Rng rng = make_rng(seed, "active");
    chosen.resize(static_cast<std::size_t>(n));
    std::iota(chosen.begin(), chosen.end(), Index{0});
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(static_cast<std::size_t>(budget));
  } else {
    ParameterStore store;
    const VipoolEstimator est = make_estimator(store, cfg, ds.graph.feature_width(), seed);
    const PropagationOperator op = normalized_operator(ds.graph);
    Rng negatives = make_rng(seed, "negatives");
    train_estimator(est, op, ds.graph.features(), a.estimator_steps, a.estimator_learning_rate, negatives);
    chosen = select_vertices(FrozenAffinity(est, op, ds.graph.features()), budget, a.selector);
  }
  std::sort(chosen.begin(), chosen.end());
  for (Index v : chosen)
    if (ds.labels[static_cast<std::size_t>(v)] < 0)
      throw std::invalid_argument("active-label: selected vertex " + std::to_string(v) + " has no label");
  return chosen;
}

// Trains a vertex model on the chosen labels; accuracy over the test split
// minus the chosen vertices.
inline double active_label_accuracy(const VertexDataset& ds, const RunConfig& rc, std::span<const Index> chosen,
                                    std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(ds.graph.size());
  std::vector<char> train(n, 0), none(n, 0);
  for (Index v : chosen) train[static_cast<std::size_t>(v)] = 1;
  std::vector<char> test = ds.mask(Split::test);
  for (Index v : chosen) test[static_cast<std::size_t>(v)] = 0;
  GxnModel model(rc.model, ds.graph.feature_width(), std::max<Index>(ds.num_classes, 2), Task::vertex, seed);
  train_vertex_model(model, ds.graph, ds.labels, train, none, rc.train, seed);
  return accuracy(predict_vertices(model, ds.graph), ds.labels, test);
}

inline RunManifest cmd_active_label(const CommonOptions& o, const ActiveLabelOptions& a) {
  Stopwatch clock;
  CommonOptions vo = o;
  vo.task = Task::vertex;
  const RunConfig rc = resolve_config(vo);
  const auto dir = prepare_out(o.out);
  const VertexDataset ds = load_vertex_data(o.data, o.mask, o.seed);
  for (Index b : a.budgets)
    if (b < 1 || b > ds.graph.size())
      throw std::out_of_range("active-label: budget " + std::to_string(b) + " outside [1, " +
                              std::to_string(ds.graph.size()) + "]");
  CsvTable table({"budget", "method", "seed", "accuracy"});
  RunManifest m;
  m.command = "active-label";
  m.seed = o.seed;
  m.config_hash = config_hash(rc.model);
  m.details = {{"data", o.data}, {"seeds", a.seeds}, {"selector", to_string(a.selector)}};
  for (Index budget : a.budgets) {
    for (LabelMethod method : a.methods) {
      double total = 0.0;
      for (int s = 0; s < a.seeds; ++s) {
        const std::uint64_t seed = child_seed(o.seed, static_cast<std::uint64_t>(s));
        const auto chosen = choose_labeled(ds, rc.model, budget, method, a, seed);
        const double acc = active_label_accuracy(ds, rc, chosen, seed);
        table.add({std::to_string(budget), to_string(method), std::to_string(s), csv_number(acc)});
        total += acc;
      }
      m.metrics.push_back({{"budget", budget}, {"method", to_string(method)}, {"accuracy", total / a.seeds}});
    }
  }
  table.save(dir / "active_label.csv");
  m.wall_seconds = clock.seconds();
  m.save(dir / "manifest.json");
  return m;
}

// ---- ablate --------------------------------------------------------------

enum class AblationAxis { pooling_variant, crossing_positions, scales, hops };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "pooling-variant") return AblationAxis::pooling_variant;
  if (s == "crossing-positions") return AblationAxis::crossing_positions;
  if (s == "scales") return AblationAxis::scales;
  if (s == "hops") return AblationAxis::hops;
  throw std::invalid_argument("unknown ablation axis '" + s + "' (pooling-variant|crossing-positions|scales|hops)");
}

inline std::vector<std::string> default_axis_values(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::pooling_variant: return {"edge-remove", "cluster", "kron"};
    case AblationAxis::crossing_positions: return {"none", "0", "1", "all"};
    case AblationAxis::scales: return {"1", "2", "3"};
    case AblationAxis::hops: return {"1", "2", "3", "4", "5"};
  }
  return {};
}

// Config for one sweep point. Scales count levels (1 = no coarsening);
// crossing positions are "none", "all" or '+'-joined layer indices.
inline GxnConfig apply_axis(GxnConfig cfg, AblationAxis axis, const std::string& value) {
  switch (axis) {
    case AblationAxis::pooling_variant:
      cfg.structure_pool = parse_structure_pool(value);
      break;
    case AblationAxis::crossing_positions:
      if (value == "all") {
        cfg.crossing_positions.reset();
      } else if (value == "none") {
        cfg.crossing_positions = std::vector<int>{};
      } else {
        std::vector<int> positions;
        std::stringstream in(value);
        std::string part;
        while (std::getline(in, part, '+')) positions.push_back(static_cast<int>(parse_index(part, "crossing value")));
        cfg.crossing_positions = positions;
      }
      break;
    case AblationAxis::scales: {
      const Index levels = parse_index(value, "scales value");
      if (levels < 1) throw std::invalid_argument("scales value must be >= 1");
      const std::vector<double> defaults{0.8, 0.6, 0.5, 0.5, 0.5, 0.5};
      if (levels - 1 > static_cast<Index>(defaults.size())) throw std::invalid_argument("scales value too large");
      cfg.scales = static_cast<int>(levels - 1);
      cfg.keep_ratios.assign(defaults.begin(), defaults.begin() + (levels - 1));
      break;
    }
    case AblationAxis::hops:
      cfg.hops = static_cast<int>(parse_index(value, "hops value"));
      break;
  }
  cfg.validate();
  return cfg;
}

struct AblationPoint {
  std::string value;
  double accuracy = 0.0;
  double seconds_per_epoch = 0.0;
};

inline double mean_epoch_seconds(const TrainResult& r) {
  if (r.history.empty()) return 0.0;
  double total = 0.0;
  for (const EpochRecord& e : r.history) total += e.seconds;
  return total / static_cast<double>(r.history.size());
}

inline RunManifest cmd_ablate(const CommonOptions& o, AblationAxis axis, std::string axis_name,
                              std::vector<std::string> values) {
  Stopwatch clock;
  const RunConfig rc = resolve_config(o);
  const auto dir = prepare_out(o.out);
  if (values.empty()) values = default_axis_values(axis);
  CsvTable table({"axis", "value", "accuracy", "seconds_per_epoch"});
  RunManifest m;
  m.command = "ablate";
  m.seed = o.seed;
  m.config_hash = config_hash(rc.model);
  m.details = {{"axis", axis_name}, {"task", to_string(o.task)}, {"data", o.data}, {"config", to_json(rc)}};

  std::optional<GraphDataset> graphs;
  std::optional<VertexDataset> vertices;
  if (o.task == Task::graph) graphs = load_graph_dataset(o.data, o.seed);
  else vertices = load_vertex_data(o.data, o.mask, o.seed);

  for (const std::string& value : values) {
    const GxnConfig cfg = apply_axis(rc.model, axis, value);
    AblationPoint point{value};
    if (graphs) {
      check_config_fits(cfg, graphs->graphs);
      const auto folds = cross_validate(cfg, rc.train, *graphs, o.seed, o.log);
      point.accuracy = mean_test_accuracy(folds);
      double seconds = 0.0;
      for (const FoldResult& f : folds) seconds += mean_epoch_seconds(f.training);
      point.seconds_per_epoch = seconds / static_cast<double>(folds.size());
    } else {
      check_config_fits(cfg, std::span<const Graph>(&vertices->graph, 1));
      GxnModel model(cfg, vertices->graph.feature_width(), std::max<Index>(vertices->num_classes, 2), Task::vertex,
                     child_seed(o.seed, 0));
      const TrainResult r = train_vertex_model(model, vertices->graph, vertices->labels, vertices->mask(Split::train),
                                               vertices->mask(Split::valid), rc.train, o.seed);
      point.accuracy = accuracy(predict_vertices(model, vertices->graph), vertices->labels, vertices->mask(Split::test));
      point.seconds_per_epoch = mean_epoch_seconds(r);
    }
    table.add({axis_name, value, csv_number(point.accuracy), csv_number(point.seconds_per_epoch)});
    m.metrics.push_back({{"value", value}, {"accuracy", point.accuracy}, {"seconds_per_epoch", point.seconds_per_epoch}});
    if (o.log) *o.log << axis_name << '=' << value << " accuracy " << format_double(point.accuracy) << '\n';
  }
  table.save(dir / "ablate.csv");
  m.wall_seconds = clock.seconds();
  m.save(dir / "manifest.json");
  return m;
}

// ---- check ---------------------------------------------------------------

inline RunManifest cmd_check(const CommonOptions& o, bool& all_passed) {
  Stopwatch clock;
  const auto dir = prepare_out(o.out);
  CsvTable table({"suite", "property", "passed", "detail"});
  RunManifest m;
  m.command = "check";
  m.seed = o.seed;
  all_passed = true;
  for (const PropertyResult& r : run_property_suites(o.seed)) {
    table.add({r.suite, r.name, r.passed ? "true" : "false", r.detail});
    m.metrics.push_back({{"suite", r.suite}, {"property", r.name}, {"passed", r.passed}});
    all_passed = all_passed && r.passed;
    if (o.log) *o.log << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.name << " (" << r.detail << ")\n";
  }
  table.save(dir / "check.csv");
  m.wall_seconds = clock.seconds();
  m.save(dir / "manifest.json");
  return m;
}

}  // namespace gxn
