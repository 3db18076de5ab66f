#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gxn/graph.hpp"
#include "gxn/rng.hpp"

namespace gxn {

enum class FeatureMode { native, degree_one_hot };

inline constexpr Index kMaxDegreeBins = 400;

struct GraphDataset {
  std::vector<Graph> graphs;
  std::vector<Index> labels;
  Index num_classes = 0;
  FeatureMode feature_mode = FeatureMode::native;

  std::size_t size() const { return graphs.size(); }
  Index feature_width() const { return graphs.empty() ? 0 : graphs.front().feature_width(); }

  void validate() const {
    if (graphs.empty()) throw std::invalid_argument("dataset: no graphs");
    if (labels.size() != graphs.size()) throw std::invalid_argument("dataset: label count does not match graph count");
    for (Index l : labels)
      if (l < 0 || l >= num_classes) throw std::invalid_argument("dataset: label " + std::to_string(l) + " out of range");
    for (const Graph& g : graphs)
      if (g.feature_width() != feature_width()) throw std::invalid_argument("dataset: inconsistent feature widths");
  }
};

enum class Split : char { none = 0, train, valid, test };

struct VertexDataset {
  Graph graph;
  std::vector<Index> labels;  // -1 when unlabeled
  std::vector<Split> split;
  Index num_classes = 0;

  std::vector<char> mask(Split which) const {
    std::vector<char> m(split.size(), 0);
    for (std::size_t i = 0; i < split.size(); ++i) m[i] = split[i] == which;
    return m;
  }

  void validate() const {
    const auto n = static_cast<std::size_t>(graph.size());
    if (labels.size() != n || split.size() != n)
      throw std::invalid_argument("vertex dataset: labels/split length does not match vertex count");
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= num_classes) throw std::invalid_argument("vertex dataset: label out of range");
      if ((split[i] == Split::test || split[i] == Split::train || split[i] == Split::valid) && labels[i] < 0)
        throw std::invalid_argument("vertex dataset: vertex " + std::to_string(i) + " in a split has no label");
    }
  }
};

// One-hot degree features; width = min(global max degree, 400) + 1.
inline void apply_degree_features(std::vector<Graph>& graphs, Index max_bins = kMaxDegreeBins) {
  Index max_degree = 1;
  for (const Graph& g : graphs)
    for (Index d : g.degrees()) max_degree = std::max(max_degree, d);
  max_degree = std::min(max_degree, max_bins);
  for (Graph& g : graphs) g = g.with_features(degree_one_hot(g, max_degree));
}

// ---- TU-like layout ------------------------------------------------------
//
//   <name>_A.txt                 "u, v" per line, 1-based global vertex ids
//   <name>_graph_indicator.txt   graph id (1-based) of vertex i on line i
//   <name>_graph_labels.txt      one integer label per graph
//   <name>_node_attributes.txt   optional, comma-separated reals per vertex
//
// Distinct label values are mapped to 0..C-1 in ascending order.

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

inline std::string find_tu_name(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    if (file.size() > 6 && file.ends_with("_A.txt")) names.push_back(file.substr(0, file.size() - 6));
  }
  if (names.size() != 1)
    throw std::runtime_error(dir.string() + ": expected exactly one <name>_A.txt file, found " +
                             std::to_string(names.size()));
  return names.front();
}

}  // namespace detail

inline GraphDataset load_tu_like(const std::filesystem::path& dir, std::optional<FeatureMode> mode = std::nullopt) {
  const std::string name = detail::find_tu_name(dir);
  const auto file = [&](const char* suffix) { return dir / (name + suffix); };

  const auto label_lines = detail::read_lines(file("_graph_labels.txt"));
  const auto num_graphs = static_cast<Index>(label_lines.size());
  if (num_graphs == 0) throw std::runtime_error("graph labels file is empty");
  std::vector<long long> raw_labels;
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const auto tokens = split_tokens(label_lines[i], ',');
    if (tokens.size() != 1) throw std::runtime_error("graph_labels line " + std::to_string(i + 1) + ": expected one label");
    raw_labels.push_back(parse_index(tokens[0], "graph_labels line " + std::to_string(i + 1)));
  }

  const auto indicator_lines = detail::read_lines(file("_graph_indicator.txt"));
  const auto num_vertices = static_cast<Index>(indicator_lines.size());
  std::vector<Index> graph_of(static_cast<std::size_t>(num_vertices));
  std::vector<Index> local(static_cast<std::size_t>(num_vertices));
  std::vector<Index> counts(static_cast<std::size_t>(num_graphs), 0);
  for (Index i = 0; i < num_vertices; ++i) {
    const std::string where = "graph_indicator line " + std::to_string(i + 1);
    const Index gid = parse_index(split_tokens(indicator_lines[static_cast<std::size_t>(i)], ',').at(0), where) - 1;
    if (gid < 0 || gid >= num_graphs)
      throw std::runtime_error(where + ": references graph " + std::to_string(gid + 1) + " of " +
                               std::to_string(num_graphs));
    if (i > 0 && gid < graph_of[static_cast<std::size_t>(i - 1)])
      throw std::runtime_error(where + ": vertices must be grouped by ascending graph id");
    graph_of[static_cast<std::size_t>(i)] = gid;
    local[static_cast<std::size_t>(i)] = counts[static_cast<std::size_t>(gid)]++;
  }
  for (Index g = 0; g < num_graphs; ++g)
    if (counts[static_cast<std::size_t>(g)] == 0)
      throw std::runtime_error("graph " + std::to_string(g + 1) + " has no vertices");

  std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(num_graphs));
  const auto edge_lines = detail::read_lines(file("_A.txt"));
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    const std::string where = name + "_A.txt line " + std::to_string(i + 1);
    const auto tokens = split_tokens(edge_lines[i], ',');
    if (tokens.size() != 2) throw std::runtime_error(where + ": expected 'u, v'");
    const Index u = parse_index(tokens[0], where) - 1;
    const Index v = parse_index(tokens[1], where) - 1;
    if (u < 0 || u >= num_vertices || v < 0 || v >= num_vertices)
      throw std::runtime_error(where + ": dangling edge to a vertex outside 1.." + std::to_string(num_vertices));
    const Index gu = graph_of[static_cast<std::size_t>(u)];
    if (gu != graph_of[static_cast<std::size_t>(v)]) throw std::runtime_error(where + ": edge joins two graphs");
    if (u == v) continue;
    const Index lu = local[static_cast<std::size_t>(u)];
    const Index lv = local[static_cast<std::size_t>(v)];
    if (lu < lv) edges[static_cast<std::size_t>(gu)].push_back({lu, lv, 1.0});
  }
  // Both directions are listed in TU files; keep each undirected edge once.
  for (auto& list : edges) {
    std::sort(list.begin(), list.end(), [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
    list.erase(std::unique(list.begin(), list.end(), [](const Edge& a, const Edge& b) { return a.u == b.u && a.v == b.v; }),
               list.end());
  }

  std::optional<Matrix> attributes;
  if (std::filesystem::exists(file("_node_attributes.txt"))) {
    const auto lines = detail::read_lines(file("_node_attributes.txt"));
    if (static_cast<Index>(lines.size()) != num_vertices)
      throw std::runtime_error("node_attributes has " + std::to_string(lines.size()) + " lines for " +
                               std::to_string(num_vertices) + " vertices");
    Index width = -1;
    Matrix attr;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = "node_attributes line " + std::to_string(i + 1);
      const auto tokens = split_tokens(lines[i], ',');
      if (width < 0) {
        width = static_cast<Index>(tokens.size());
        attr.resize(num_vertices, width);
      }
      if (static_cast<Index>(tokens.size()) != width) throw std::runtime_error(where + ": inconsistent attribute count");
      for (Index j = 0; j < width; ++j) attr(static_cast<Index>(i), j) = parse_double(tokens[static_cast<std::size_t>(j)], where);
    }
    attributes = std::move(attr);
  }
  const FeatureMode feature_mode = mode.value_or(attributes ? FeatureMode::native : FeatureMode::degree_one_hot);
  if (feature_mode == FeatureMode::native && !attributes)
    throw std::runtime_error(name + ": native features requested but " + name + "_node_attributes.txt is missing");

  GraphDataset ds;
  ds.feature_mode = feature_mode;
  Index offset = 0;
  for (Index g = 0; g < num_graphs; ++g) {
    const Index n = counts[static_cast<std::size_t>(g)];
    Matrix features = feature_mode == FeatureMode::native ? Matrix(attributes->middleRows(offset, n)) : Matrix(n, 0);
    ds.graphs.push_back(Graph::from_edges(n, edges[static_cast<std::size_t>(g)], std::move(features)));
    offset += n;
  }
  if (feature_mode == FeatureMode::degree_one_hot) apply_degree_features(ds.graphs);

  std::vector<long long> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (long long l : raw_labels)
    ds.labels.push_back(static_cast<Index>(std::lower_bound(distinct.begin(), distinct.end(), l) - distinct.begin()));
  ds.num_classes = static_cast<Index>(distinct.size());
  ds.validate();
  return ds;
}

// Writes the canonical TU-like layout: both edge directions, ascending by
// global (u, v); attributes only for native features.
inline void write_tu_like(const GraphDataset& ds, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream a(dir / (name + "_A.txt"));
  std::ofstream ind(dir / (name + "_graph_indicator.txt"));
  std::ofstream lab(dir / (name + "_graph_labels.txt"));
  std::optional<std::ofstream> attr;
  if (ds.feature_mode == FeatureMode::native && ds.feature_width() > 0) attr.emplace(dir / (name + "_node_attributes.txt"));
  Index offset = 0;
  for (std::size_t g = 0; g < ds.graphs.size(); ++g) {
    const Graph& graph = ds.graphs[g];
    for (Index i = 0; i < graph.size(); ++i) {
      ind << g + 1 << '\n';
      if (attr) {
        for (Index j = 0; j < graph.feature_width(); ++j) *attr << (j ? ", " : "") << format_double(graph.features()(i, j));
        *attr << '\n';
      }
    }
    for (Index i = 0; i < graph.size(); ++i)
      for (Index v : graph.neighbors(i)) a << offset + i + 1 << ", " << offset + v + 1 << '\n';
    lab << ds.labels[g] << '\n';
    offset += graph.size();
  }
}

// ---- vertex datasets -----------------------------------------------------
//
// Graph in the plain text format plus a sidecar with one line per vertex:
// "<train|valid|test|none> <label|->".

inline VertexDataset load_vertex_dataset(const std::filesystem::path& graph_path, const std::filesystem::path& mask_path) {
  std::ifstream in(graph_path);
  if (!in) throw std::runtime_error("cannot open " + graph_path.string());
  VertexDataset ds;
  ds.graph = read_graph(in);
  const auto lines = detail::read_lines(mask_path);
  if (static_cast<Index>(lines.size()) != ds.graph.size())
    throw std::runtime_error("mask sidecar has " + std::to_string(lines.size()) + " lines for " +
                             std::to_string(ds.graph.size()) + " vertices");
  Index max_label = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = "mask line " + std::to_string(i + 1);
    const auto tokens = split_tokens(lines[i]);
    if (tokens.size() != 2) throw std::runtime_error(where + ": expected '<split> <label|->'");
    const std::string& s = tokens[0];
    Split split = Split::none;
    if (s == "train") split = Split::train;
    else if (s == "valid") split = Split::valid;
    else if (s == "test") split = Split::test;
    else if (s != "none") throw std::runtime_error(where + ": unknown split '" + s + "'");
    const Index label = tokens[1] == "-" ? -1 : parse_index(tokens[1], where);
    if (tokens[1] != "-" && label < 0) throw std::runtime_error(where + ": negative label");
    ds.split.push_back(split);
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  ds.num_classes = max_label + 1;
  ds.validate();
  return ds;
}

inline void write_vertex_dataset(const VertexDataset& ds, const std::filesystem::path& graph_path,
                                 const std::filesystem::path& mask_path) {
  std::ofstream g(graph_path);
  write_graph(g, ds.graph);
  std::ofstream m(mask_path);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    static constexpr const char* kNames[] = {"none", "train", "valid", "test"};
    m << kNames[static_cast<int>(ds.split[i])] << ' ';
    if (ds.labels[i] < 0) m << '-';
    else m << ds.labels[i];
    m << '\n';
  }
}

// ---- synthetic corpora ---------------------------------------------------

// Two-class corpus: every graph is a ring backbone over two equal blocks;
// within-block pairs connect with p_in (class 0: p_in_a, class 1: p_in_b),
// cross-block pairs with p_in / 5. Classes alternate, so they are balanced.
// Features are degree one-hot.
inline GraphDataset synth_two_class(Index n_graphs, Index n_vertices, double p_in_a, double p_in_b, std::uint64_t seed) {
  if (!(p_in_a > 0.0 && p_in_a < 1.0 && p_in_b > 0.0 && p_in_b < 1.0))
    throw std::invalid_argument("synth_two_class: probabilities must lie in (0, 1)");
  if (n_graphs < 2 || n_vertices < 3) throw std::invalid_argument("synth_two_class: need >= 2 graphs of >= 3 vertices");
  Rng rng = make_rng(seed, "synth");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  GraphDataset ds;
  ds.num_classes = 2;
  ds.feature_mode = FeatureMode::degree_one_hot;
  const Index half = n_vertices / 2;
  for (Index g = 0; g < n_graphs; ++g) {
    const Index label = g % 2;
    const double p_in = label == 0 ? p_in_a : p_in_b;
    std::vector<Edge> edges;
    for (Index u = 0; u < n_vertices; ++u) {
      for (Index v = u + 1; v < n_vertices; ++v) {
        const bool ring = v == u + 1 || (u == 0 && v == n_vertices - 1);
        const bool same_block = (u < half) == (v < half);
        const double p = same_block ? p_in : p_in / 5.0;
        if (coin(rng) < p || ring) edges.push_back({u, v, 1.0});
      }
    }
    ds.graphs.push_back(Graph::from_edges(n_vertices, edges));
    ds.labels.push_back(label);
  }
  apply_degree_features(ds.graphs);
  ds.validate();
  return ds;
}

// Planted-partition graph: communities of equal size, edges with p_in inside
// and p_out across; a ring through each community keeps it connected. Each
// vertex carries its community's random center plus Gaussian noise.
inline VertexDataset synth_communities(Index n, Index communities, double p_in, double p_out, Index feature_width,
                                       double noise, std::uint64_t seed) {
  if (communities < 2 || n < 2 * communities) throw std::invalid_argument("synth_communities: too few vertices");
  Rng rng = make_rng(seed, "synth");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VertexDataset ds;
  ds.num_classes = communities;
  std::vector<Index> community(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) community[static_cast<std::size_t>(v)] = v * communities / n;
  std::vector<Edge> edges;
  for (Index u = 0; u < n; ++u) {
    for (Index v = u + 1; v < n; ++v) {
      const bool same = community[static_cast<std::size_t>(u)] == community[static_cast<std::size_t>(v)];
      const bool ring = same && v == u + 1;
      if (ring || coin(rng) < (same ? p_in : p_out)) edges.push_back({u, v, 1.0});
    }
  }
  Matrix centers(communities, feature_width);
  for (Index c = 0; c < communities; ++c)
    for (Index j = 0; j < feature_width; ++j) centers(c, j) = gauss(rng);
  Matrix features(n, feature_width);
  for (Index v = 0; v < n; ++v)
    for (Index j = 0; j < feature_width; ++j)
      features(v, j) = centers(community[static_cast<std::size_t>(v)], j) + noise * gauss(rng);
  ds.graph = Graph::from_edges(n, edges, std::move(features));
  ds.labels = community;
  ds.split.assign(static_cast<std::size_t>(n), Split::test);
  ds.validate();
  return ds;
}

// ---- splits and metrics --------------------------------------------------

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Stratified k folds: each class is shuffled and dealt round-robin, the deal
// continuing across classes so fold sizes stay balanced. Falls back to an
// unstratified deal (with a warning) when a class has fewer than k members.
inline std::vector<Fold> kfold_splits(std::span<const Index> labels, Index k, std::uint64_t seed,
                                      std::ostream* warnings = &std::cerr) {
  const auto n = static_cast<Index>(labels.size());
  if (k < 2 || k > n) throw std::invalid_argument("kfold_splits: need 2 <= k <= " + std::to_string(n));
  Rng rng = make_rng(seed, "folds");
  std::map<Index, std::vector<Index>> by_class;
  for (Index i = 0; i < n; ++i) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);
  bool stratify = true;
  for (const auto& [label, members] : by_class)
    if (static_cast<Index>(members.size()) < k) stratify = false;
  if (!stratify) {
    if (warnings) *warnings << "warning: a class has fewer than " << k << " members; using unstratified folds\n";
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    by_class.clear();
    by_class[0] = std::move(all);
  }
  std::vector<std::vector<Index>> tests(static_cast<std::size_t>(k));
  Index slot = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (Index i : members) tests[static_cast<std::size_t>(slot++ % k)].push_back(i);
  }
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (Index f = 0; f < k; ++f) {
    auto& test = tests[static_cast<std::size_t>(f)];
    std::sort(test.begin(), test.end());
    std::vector<char> in_test(static_cast<std::size_t>(n), 0);
    for (Index i : test) in_test[static_cast<std::size_t>(i)] = 1;
    for (Index i = 0; i < n; ++i)
      if (!in_test[static_cast<std::size_t>(i)]) folds[static_cast<std::size_t>(f)].train.push_back(i);
    folds[static_cast<std::size_t>(f)].test = std::move(test);
  }
  return folds;
}

inline double accuracy(std::span<const Index> predicted, std::span<const Index> truth,
                       std::span<const char> mask = {}) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (!mask.empty() && mask.size() != truth.size()) throw std::invalid_argument("accuracy: mask length mismatch");
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++total;
    correct += predicted[i] == truth[i];
  }
  if (total == 0) throw std::invalid_argument("accuracy: empty mask");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace gxn
