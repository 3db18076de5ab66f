#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gxn/data.hpp"

namespace gxn {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("gxn-test-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  void write(const std::string& file, const std::string& body) const { std::ofstream(path_ / file) << body; }

 private:
  fs::path path_;
};

// Two triangles, graph labels 3 and 7 (remapped to 0 and 1).
void write_two_triangles(const TempDir& d, bool attributes) {
  d.write("TRI_A.txt", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n5, 6\n6, 5\n4, 6\n6, 4\n");
  d.write("TRI_graph_indicator.txt", "1\n1\n1\n2\n2\n2\n");
  d.write("TRI_graph_labels.txt", "3\n7\n");
  if (attributes) d.write("TRI_node_attributes.txt", "1, 0\n0, 1\n1, 1\n2, 0\n0, 2\n2, 2\n");
}

TEST(TuLoader, TwoTriangles) {
  TempDir d("tri");
  write_two_triangles(d, false);
  const GraphDataset ds = load_tu_like(d.path());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.graphs[0].size(), 3);
  EXPECT_EQ(ds.graphs[1].size(), 3);
  EXPECT_EQ(ds.graphs[0].edges().size(), 3u);
  EXPECT_EQ(ds.labels, (std::vector<Index>{0, 1}));
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.feature_mode, FeatureMode::degree_one_hot);
  // Every vertex has degree 2: width max_degree + 1 = 3, hot at position 2.
  EXPECT_EQ(ds.feature_width(), 3);
  EXPECT_EQ(ds.graphs[0].features()(1, 2), 1.0);
}

TEST(TuLoader, NativeAttributes) {
  TempDir d("native");
  write_two_triangles(d, true);
  const GraphDataset ds = load_tu_like(d.path());
  EXPECT_EQ(ds.feature_mode, FeatureMode::native);
  EXPECT_EQ(ds.graphs[1].features()(2, 0), 2.0);
  const GraphDataset forced = load_tu_like(d.path(), FeatureMode::degree_one_hot);
  EXPECT_EQ(forced.feature_width(), 3);
}

TEST(TuLoader, MissingAttributesUnderNativeModeIsAnError) {
  TempDir d("noattr");
  write_two_triangles(d, false);
  EXPECT_THROW(load_tu_like(d.path(), FeatureMode::native), std::runtime_error);
}

TEST(TuLoader, IndicatorOutOfRange) {
  TempDir d("indicator");
  write_two_triangles(d, false);
  d.write("TRI_graph_indicator.txt", "1\n1\n1\n2\n2\n5\n");
  try {
    load_tu_like(d.path());
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("references graph 5 of 2"), std::string::npos) << e.what();
  }
}

TEST(TuLoader, DanglingAndCrossGraphEdges) {
  TempDir d("edges");
  write_two_triangles(d, false);
  d.write("TRI_A.txt", "1, 2\n2, 9\n");
  EXPECT_THROW(load_tu_like(d.path()), std::runtime_error);
  d.write("TRI_A.txt", "1, 4\n");
  EXPECT_THROW(load_tu_like(d.path()), std::runtime_error);
}

TEST(TuLoader, RoundTripIsBitExact) {
  GraphDataset ds = synth_two_class(6, 8, 0.5, 0.2, 3);
  ds.feature_mode = FeatureMode::native;
  TempDir d("roundtrip");
  write_tu_like(ds, d.path(), "RT");
  const GraphDataset back = load_tu_like(d.path(), FeatureMode::native);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.graphs[i].dense_adjacency(), ds.graphs[i].dense_adjacency());
    EXPECT_EQ(back.graphs[i].features(), ds.graphs[i].features());
  }
  EXPECT_EQ(back.labels, ds.labels);
  // Writing again gives the same bytes.
  TempDir d2("roundtrip2");
  write_tu_like(back, d2.path(), "RT");
  for (const char* f : {"RT_A.txt", "RT_graph_indicator.txt", "RT_graph_labels.txt", "RT_node_attributes.txt"}) {
    std::ifstream a(d.path() / f), b(d2.path() / f);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
}

TEST(DegreeFeatures, ClampAtMaximumBins) {
  std::vector<Edge> star;
  for (Index leaf = 1; leaf <= 6; ++leaf) star.push_back({0, leaf});
  std::vector<Graph> graphs{Graph::from_edges(7, star)};
  apply_degree_features(graphs, 4);
  EXPECT_EQ(graphs[0].feature_width(), 5);
  EXPECT_EQ(graphs[0].features()(0, 4), 1.0);
}

TEST(VertexDataset, SidecarRoundTrip) {
  TempDir d("vertex");
  d.write("g.txt", "4 1\n0.5\n1\n-2\n3\n0 1\n1 2\n2 3\n");
  d.write("g.mask", "train 0\nvalid 1\ntest 1\nnone -\n");
  const VertexDataset ds = load_vertex_dataset(d.path() / "g.txt", d.path() / "g.mask");
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.labels, (std::vector<Index>{0, 1, 1, -1}));
  EXPECT_EQ(ds.mask(Split::test), (std::vector<char>{0, 0, 1, 0}));
  write_vertex_dataset(ds, d.path() / "h.txt", d.path() / "h.mask");
  const VertexDataset back = load_vertex_dataset(d.path() / "h.txt", d.path() / "h.mask");
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.split, ds.split);
  EXPECT_EQ(back.graph.features(), ds.graph.features());
}

TEST(VertexDataset, TestVertexWithoutLabelIsAnError) {
  TempDir d("vertexbad");
  d.write("g.txt", "2 0\n0 1\n");
  d.write("g.mask", "train 0\ntest -\n");
  EXPECT_THROW(load_vertex_dataset(d.path() / "g.txt", d.path() / "g.mask"), std::invalid_argument);
  d.write("g.mask", "train 0\n");
  EXPECT_THROW(load_vertex_dataset(d.path() / "g.txt", d.path() / "g.mask"), std::runtime_error);
  d.write("g.mask", "train 0\nholdout 1\n");
  EXPECT_THROW(load_vertex_dataset(d.path() / "g.txt", d.path() / "g.mask"), std::runtime_error);
}

double mean_degree(const GraphDataset& ds, Index label) {
  double total = 0.0, count = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != label) continue;
    total += 2.0 * static_cast<double>(ds.graphs[i].edges().size()) / static_cast<double>(ds.graphs[i].size());
    count += 1.0;
  }
  return total / count;
}

TEST(SynthTwoClass, DeterministicBalancedAndSeparated) {
  const GraphDataset a = synth_two_class(200, 20, 0.5, 0.15, 0);
  const GraphDataset b = synth_two_class(200, 20, 0.5, 0.15, 0);
  ASSERT_EQ(a.size(), 200u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.graphs[i].dense_adjacency(), b.graphs[i].dense_adjacency());
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 0), 100);
  EXPECT_GT(mean_degree(a, 0), mean_degree(a, 1) + 2.0);
}

TEST(SynthTwoClass, EqualProbabilitiesAreIndistinguishableByDensity) {
  const GraphDataset ds = synth_two_class(400, 20, 0.3, 0.3, 1);
  EXPECT_NEAR(mean_degree(ds, 0), mean_degree(ds, 1), 0.3);
  EXPECT_THROW(synth_two_class(10, 10, 0.0, 0.5, 0), std::invalid_argument);
}

TEST(SynthCommunities, LabelsFollowBlocks) {
  const VertexDataset ds = synth_communities(40, 4, 0.3, 0.01, 5, 0.5, 2);
  EXPECT_EQ(ds.num_classes, 4);
  EXPECT_EQ(ds.labels[0], 0);
  EXPECT_EQ(ds.labels[39], 3);
  EXPECT_EQ(ds.graph.feature_width(), 5);
}

TEST(KFold, PartitionDisjointAndDeterministic) {
  std::vector<Index> labels;
  for (int i = 0; i < 53; ++i) labels.push_back(i % 3 == 0 ? 1 : 0);
  const auto folds = kfold_splits(labels, 10, 7, nullptr);
  ASSERT_EQ(folds.size(), 10u);
  std::multiset<Index> seen;
  for (const Fold& f : folds) {
    seen.insert(f.test.begin(), f.test.end());
    EXPECT_EQ(f.train.size() + f.test.size(), labels.size());
    for (Index i : f.test) EXPECT_FALSE(std::binary_search(f.train.begin(), f.train.end(), i));
  }
  ASSERT_EQ(seen.size(), labels.size());
  for (Index i = 0; i < 53; ++i) EXPECT_EQ(seen.count(i), 1u);
  const auto again = kfold_splits(labels, 10, 7, nullptr);
  for (std::size_t f = 0; f < folds.size(); ++f) EXPECT_EQ(folds[f].test, again[f].test);
}

TEST(KFold, StratifiedWithinOne) {
  std::vector<Index> labels;
  for (int i = 0; i < 97; ++i) labels.push_back(i % 7 == 0 ? 2 : i % 3 == 0 ? 1 : 0);
  std::map<Index, double> totals;
  for (Index l : labels) totals[l] += 1.0;
  for (const Fold& f : kfold_splits(labels, 10, 3, nullptr))
    for (const auto& [label, total] : totals) {
      double count = 0.0;
      for (Index i : f.test) count += labels[static_cast<std::size_t>(i)] == label;
      EXPECT_LE(std::abs(count - total / 10.0), 1.0);
    }
}

TEST(KFold, LeaveOneOutAndFallbackWarning) {
  const std::vector<Index> labels{0, 1, 0, 1, 0};
  std::ostringstream warnings;
  const auto folds = kfold_splits(labels, 5, 0, &warnings);
  for (const Fold& f : folds) EXPECT_EQ(f.test.size(), 1u);
  EXPECT_NE(warnings.str().find("unstratified"), std::string::npos);
  EXPECT_THROW(kfold_splits(labels, 6, 0, nullptr), std::invalid_argument);
}

TEST(Accuracy, HandValues) {
  const std::vector<Index> truth{0, 1, 1, 0};
  EXPECT_EQ(accuracy(truth, truth), 1.0);
  const std::vector<Index> flipped{1, 0, 0, 1};
  EXPECT_EQ(accuracy(flipped, truth), 0.0);
  const std::vector<Index> three{0, 1, 1, 1};
  EXPECT_EQ(accuracy(three, truth), 0.75);
  const std::vector<char> mask{1, 0, 0, 1};
  EXPECT_EQ(accuracy(three, truth, mask), 0.5);
  const std::vector<char> empty{0, 0, 0, 0};
  EXPECT_THROW(accuracy(three, truth, empty), std::invalid_argument);
}

}  // namespace
}  // namespace gxn
