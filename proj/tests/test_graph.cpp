#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gxn/graph.hpp"
#include "gxn/oracles.hpp"
#include "gxn/properties.hpp"

namespace gxn {
namespace {

Graph path3() {
  const std::vector<Edge> e{{0, 1}, {1, 2}};
  return Graph::from_edges(3, e);
}

TEST(Graph, RejectsAsymmetricAndNegativeAdjacency) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = 1.0;
  EXPECT_THROW(Graph::from_dense(a, Matrix(2, 0)), std::invalid_argument);
  a(1, 0) = -1.0;
  EXPECT_THROW(Graph::from_dense(a, Matrix(2, 0)), std::invalid_argument);
}

TEST(Graph, RejectsFeatureRowMismatchAndSelfLoops) {
  const std::vector<Edge> e{{0, 1}};
  EXPECT_THROW(Graph::from_edges(2, e, Matrix(3, 1)), std::invalid_argument);
  const std::vector<Edge> loop{{1, 1}};
  EXPECT_THROW(Graph::from_edges(2, loop), std::invalid_argument);
  const std::vector<Edge> outside{{0, 5}};
  EXPECT_THROW(Graph::from_edges(2, outside), std::out_of_range);
}

TEST(NormalizedOperator, SingleVertexIsIdentity) {
  const Graph g = Graph::from_edges(1, std::vector<Edge>{});
  EXPECT_DOUBLE_EQ(normalized_operator(g).to_dense()(0, 0), 1.0);
}

TEST(NormalizedOperator, SingleEdgeIsHalfEverywhere) {
  const Graph g = Graph::from_edges(2, std::vector<Edge>{{0, 1}});
  const Matrix p = normalized_operator(g).to_dense();
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(p(i, j), 0.5);
}

TEST(NormalizedOperator, PathEntryMatchesHandValue) {
  EXPECT_NEAR(normalized_operator(path3()).to_dense()(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
}

TEST(NormalizedOperator, MatchesLoopOracleAndIsSymmetric) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const Graph g = props::random_graph(5 + t * 2, 0.2, rng);
    const Matrix p = normalized_operator(g).to_dense();
    EXPECT_LT((p - oracle::normalized_operator(g.dense_adjacency())).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_LE(p.maxCoeff(), 1.0);
  }
}

TEST(NormalizedOperator, SpectralRadiusAtMostOne) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const Matrix p = normalized_operator(props::random_graph(12, 0.3, rng)).to_dense();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
    EXPECT_LE(eig.eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(NormalizedOperator, SparseAndDenseModesAgree) {
  Rng rng(13);
  const Graph g = props::random_graph(80, 0.03, rng, 4);
  const PropagationOperator op = normalized_operator(g);
  ASSERT_FALSE(op.dense_mode());
  const Matrix dense = oracle::normalized_operator(g.dense_adjacency()) * g.features();
  EXPECT_LT((op.apply(g.features()) - dense).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OperatorPower, ZeroIsIdentity) {
  const Matrix m = operator_power(normalized_operator(path3()), 0);
  EXPECT_TRUE(m.isApprox(Matrix::Identity(3, 3)));
}

TEST(OperatorPower, EdgeSquaredIsIdempotent) {
  const Graph g = Graph::from_edges(2, std::vector<Edge>{{0, 1}});
  const Matrix m = operator_power(normalized_operator(g), 2);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) EXPECT_NEAR(m(i, j), 0.5, 1e-15);
}

TEST(OperatorPower, SingleVertexStaysOne) {
  const Graph g = Graph::from_edges(1, std::vector<Edge>{});
  EXPECT_DOUBLE_EQ(operator_power(normalized_operator(g), 5)(0, 0), 1.0);
  EXPECT_THROW(operator_power(normalized_operator(g), -1), std::invalid_argument);
}

TEST(Neighborhood, PathBalls) {
  EXPECT_EQ(neighborhood(path3(), 0, 1).members, (std::vector<Index>{0, 1}));
  EXPECT_EQ(neighborhood(path3(), 0, 2).members, (std::vector<Index>{0, 1, 2}));
  EXPECT_THROW(neighborhood(path3(), 3, 1), std::out_of_range);
}

TEST(Neighborhood, IsolatedVertexIsItsOwnBall) {
  const Graph g = Graph::from_edges(3, std::vector<Edge>{{0, 1}});
  EXPECT_EQ(neighborhood(g, 2, 4).members, (std::vector<Index>{2}));
}

TEST(Neighborhood, MonotoneInRadius) {
  Rng rng(14);
  const Graph g = props::random_graph(15, 0.1, rng, 0, false);
  for (Index v = 0; v < g.size(); ++v)
    for (int r = 1; r < 4; ++r) {
      const auto inner = neighborhood(g, v, r).members;
      const auto outer = neighborhood(g, v, r + 1).members;
      EXPECT_TRUE(std::includes(outer.begin(), outer.end(), inner.begin(), inner.end()));
      EXPECT_TRUE(std::binary_search(inner.begin(), inner.end(), v));
    }
}

TEST(DegreeOneHot, PathAndClamp) {
  const Matrix p = degree_one_hot(path3(), 3);
  ASSERT_EQ(p.cols(), 4);
  EXPECT_EQ(p(0, 1), 1.0);
  EXPECT_EQ(p(1, 2), 1.0);
  EXPECT_EQ(p(2, 1), 1.0);
  EXPECT_EQ(p.sum(), 3.0);

  std::vector<Edge> star;
  for (Index leaf = 1; leaf <= 5; ++leaf) star.push_back({0, leaf});
  const Matrix s = degree_one_hot(Graph::from_edges(6, star), 3);
  EXPECT_EQ(s(0, 3), 1.0);

  const Matrix iso = degree_one_hot(Graph::from_edges(1, std::vector<Edge>{}), 2);
  EXPECT_EQ(iso(0, 0), 1.0);
}

TEST(InducedAdjacency, PathCases) {
  const Graph g = path3();
  const std::vector<Index> ends{0, 2}, head{0, 1}, all{0, 1, 2}, dup{1, 1};
  EXPECT_TRUE(induced_adjacency(g, ends).isZero());
  const Matrix h = induced_adjacency(g, head);
  EXPECT_EQ(h(0, 1), 1.0);
  EXPECT_EQ(h(1, 0), 1.0);
  EXPECT_EQ(h(0, 0), 0.0);
  EXPECT_EQ(induced_adjacency(g, all), g.dense_adjacency());
  EXPECT_THROW(induced_adjacency(g, dup), std::invalid_argument);
}

TEST(GraphText, RoundTripIsExact) {
  Rng rng(15);
  const Graph g = props::random_graph(9, 0.3, rng, 3);
  std::stringstream s;
  write_graph(s, g);
  const Graph back = read_graph(s);
  EXPECT_EQ(back.dense_adjacency(), g.dense_adjacency());
  EXPECT_EQ(back.features(), g.features());
}

TEST(GraphText, DefaultWeightAndErrors) {
  std::istringstream ok("3 1\n0.5\n1\n2\n0 1\n1 2 2.5\n");
  const Graph g = read_graph(ok);
  EXPECT_EQ(g.dense_adjacency()(0, 1), 1.0);
  EXPECT_EQ(g.dense_adjacency()(2, 1), 2.5);
  std::istringstream bad_edge("2 0\n0 7\n");
  EXPECT_ANY_THROW(read_graph(bad_edge));
  std::istringstream bad_number("1 1\nx\n");
  EXPECT_ANY_THROW(read_graph(bad_number));
}

}  // namespace
}  // namespace gxn
