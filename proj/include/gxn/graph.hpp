#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "gxn/autodiff.hpp"

namespace gxn {

struct Edge {
  Index u = 0;
  Index v = 0;
  double weight = 1.0;
};

inline constexpr double kSymmetryTolerance = 1e-9;

// Undirected graph: symmetric nonnegative sparse adjacency plus an n x d
// feature block (d may be 0 for structure-only levels). Input graphs carry no
// self-loops; coarsened graphs may hold diagonal mass.
class Graph {
 public:
  Graph() = default;

  Graph(SparseMatrix adjacency, Matrix features) : adjacency_(std::move(adjacency)), features_(std::move(features)) {
    adjacency_.makeCompressed();
    validate();
  }

  static Graph from_edges(Index n, std::span<const Edge> edges, Matrix features) {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(edges.size() * 2);
    for (const Edge& e : edges) {
      if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
        throw std::out_of_range("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                ") outside vertex range [0, " + std::to_string(n) + ")");
      if (e.u == e.v) throw std::invalid_argument("self-loop at vertex " + std::to_string(e.u));
      if (!(e.weight >= 0.0)) throw std::invalid_argument("negative edge weight");
      triplets.emplace_back(e.u, e.v, e.weight);
      triplets.emplace_back(e.v, e.u, e.weight);
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(triplets.begin(), triplets.end(), [](double, double) -> double {
      throw std::invalid_argument("duplicate edge");
    });
    return Graph(std::move(a), std::move(features));
  }

  static Graph from_edges(Index n, std::span<const Edge> edges) {
    return from_edges(n, edges, Matrix(n, 0));
  }

  // Entries <= 0 are dropped from the sparse pattern.
  static Graph from_dense(const Matrix& adjacency, Matrix features) {
    std::vector<Eigen::Triplet<double>> triplets;
    for (Index i = 0; i < adjacency.rows(); ++i)
      for (Index j = 0; j < adjacency.cols(); ++j)
        if (adjacency(i, j) > 0.0) triplets.emplace_back(i, j, adjacency(i, j));
        else if (adjacency(i, j) < 0.0) throw std::invalid_argument("negative adjacency weight");
    SparseMatrix a(adjacency.rows(), adjacency.cols());
    a.setFromTriplets(triplets.begin(), triplets.end());
    return Graph(std::move(a), std::move(features));
  }

  Index size() const { return adjacency_.rows(); }
  Index feature_width() const { return features_.cols(); }
  const SparseMatrix& adjacency() const { return adjacency_; }
  const Matrix& features() const { return features_; }
  Matrix dense_adjacency() const { return Matrix(adjacency_); }

  Graph with_features(Matrix features) const { return Graph(adjacency_, std::move(features)); }

  bool has_self_loops() const {
    for (Index i = 0; i < size(); ++i)
      if (adjacency_.coeff(i, i) != 0.0) return true;
    return false;
  }

  // Upper-triangle edges in ascending (u, v) order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (Index i = 0; i < adjacency_.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(adjacency_, i); it; ++it)
        if (it.col() > i) out.push_back({i, it.col(), it.value()});
    return out;
  }

  // Off-diagonal support size of each row.
  std::vector<Index> degrees() const {
    std::vector<Index> deg(static_cast<std::size_t>(size()), 0);
    for (Index i = 0; i < adjacency_.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(adjacency_, i); it; ++it)
        if (it.col() != i && it.value() != 0.0) ++deg[static_cast<std::size_t>(i)];
    return deg;
  }

  std::vector<Index> neighbors(Index v) const {
    std::vector<Index> out;
    for (SparseMatrix::InnerIterator it(adjacency_, v); it; ++it)
      if (it.col() != v && it.value() != 0.0) out.push_back(it.col());
    return out;
  }

 private:
  void validate() const {
    if (adjacency_.rows() != adjacency_.cols())
      throw std::invalid_argument("adjacency must be square, got " +
                                  shape_string(adjacency_.rows(), adjacency_.cols()));
    if (features_.rows() != adjacency_.rows())
      throw std::invalid_argument("feature rows " + std::to_string(features_.rows()) + " != vertex count " +
                                  std::to_string(adjacency_.rows()));
    for (Index k = 0; k < adjacency_.nonZeros(); ++k)
      if (!(adjacency_.valuePtr()[k] >= 0.0)) throw std::invalid_argument("adjacency weights must be >= 0");
    SparseMatrix transposed = adjacency_.transpose();
    SparseMatrix diff = adjacency_ - transposed;
    double worst = 0.0;
    for (Index k = 0; k < diff.nonZeros(); ++k) worst = std::max(worst, std::abs(diff.valuePtr()[k]));
    if (worst > kSymmetryTolerance)
      throw std::invalid_argument("adjacency is not symmetric (max deviation " + std::to_string(worst) + ")");
  }

  SparseMatrix adjacency_;
  Matrix features_;
};

// D^{-1/2} (A + I) D^{-1/2}, held sparse, with a dense copy for small or
// dense graphs.
class PropagationOperator {
 public:
  static constexpr Index kDenseBelow = 64;

  PropagationOperator() = default;
  explicit PropagationOperator(SparseMatrix m) : sparse_(std::move(m)) {
    const auto n = static_cast<double>(sparse_.rows());
    dense_mode_ = sparse_.rows() < kDenseBelow || static_cast<double>(sparse_.nonZeros()) > 0.25 * n * n;
    if (dense_mode_) dense_ = Matrix(sparse_);
  }

  Index size() const { return sparse_.rows(); }
  bool dense_mode() const { return dense_mode_; }
  const SparseMatrix& sparse() const { return sparse_; }
  Matrix to_dense() const { return dense_mode_ ? dense_ : Matrix(sparse_); }

  Matrix apply(const Matrix& x) const { return dense_mode_ ? Matrix(dense_ * x) : Matrix(sparse_ * x); }
  Tensor apply(const Tensor& x) const { return dense_mode_ ? matmul(dense_, x) : matmul(sparse_, x); }

 private:
  SparseMatrix sparse_;
  Matrix dense_;
  bool dense_mode_ = true;
};

// Weighted degrees are used for coarsened graphs; isolated vertices reduce
// to a unit diagonal entry through the self-loop.
inline PropagationOperator normalized_operator(const Graph& g) {
  const Index n = g.size();
  SparseMatrix tilde = g.adjacency();
  SparseMatrix identity(n, n);
  identity.setIdentity();
  tilde = tilde + identity;
  Eigen::VectorXd inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    double d = 0.0;
    for (SparseMatrix::InnerIterator it(tilde, i); it; ++it) d += it.value();
    inv_sqrt(i) = 1.0 / std::sqrt(d);
  }
  for (Index i = 0; i < tilde.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(tilde, i); it; ++it) it.valueRef() *= inv_sqrt(i) * inv_sqrt(it.col());
  return PropagationOperator(std::move(tilde));
}

inline Matrix operator_power(const PropagationOperator& p, int r) {
  if (r < 0) throw std::invalid_argument("operator_power: negative hop count");
  Matrix out = Matrix::Identity(p.size(), p.size());
  for (int i = 0; i < r; ++i) out = p.apply(out);
  return out;
}

struct Neighborhood {
  Index center = 0;
  std::vector<Index> members;  // ascending
  int radius = 0;
};

// Ball of geodesic radius R over the unweighted support of the adjacency.
inline Neighborhood neighborhood(const Graph& g, Index v, int radius) {
  if (v < 0 || v >= g.size())
    throw std::out_of_range("neighborhood: vertex " + std::to_string(v) + " out of range [0, " +
                            std::to_string(g.size()) + ")");
  if (radius < 1) throw std::invalid_argument("neighborhood: radius must be >= 1");
  std::vector<int> dist(static_cast<std::size_t>(g.size()), -1);
  std::deque<Index> queue{v};
  dist[static_cast<std::size_t>(v)] = 0;
  std::vector<Index> members{v};
  while (!queue.empty()) {
    const Index u = queue.front();
    queue.pop_front();
    if (dist[static_cast<std::size_t>(u)] == radius) continue;
    for (Index w : g.neighbors(u)) {
      if (dist[static_cast<std::size_t>(w)] >= 0) continue;
      dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
      members.push_back(w);
      queue.push_back(w);
    }
  }
  std::sort(members.begin(), members.end());
  return {v, std::move(members), radius};
}

// Degrees above max_degree land in the last bin.
inline Matrix degree_one_hot(const Graph& g, Index max_degree) {
  if (max_degree < 1) throw std::invalid_argument("degree_one_hot: max_degree must be >= 1");
  Matrix out = Matrix::Zero(g.size(), max_degree + 1);
  const auto deg = g.degrees();
  for (Index i = 0; i < g.size(); ++i) out(i, std::min(deg[static_cast<std::size_t>(i)], max_degree)) = 1.0;
  return out;
}

inline void check_unique_ids(const char* what, std::span<const Index> ids, Index n) {
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index id : ids) {
    if (id < 0 || id >= n)
      throw std::out_of_range(std::string(what) + ": index " + std::to_string(id) + " out of range [0, " +
                              std::to_string(n) + ")");
    if (seen[static_cast<std::size_t>(id)])
      throw std::invalid_argument(std::string(what) + ": duplicate index " + std::to_string(id));
    seen[static_cast<std::size_t>(id)] = 1;
  }
}

inline Matrix induced_adjacency(const Graph& g, std::span<const Index> ids) {
  check_unique_ids("induced_adjacency", ids, g.size());
  const auto k = static_cast<Index>(ids.size());
  std::vector<Index> position(static_cast<std::size_t>(g.size()), -1);
  for (Index i = 0; i < k; ++i) position[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = i;
  Matrix out = Matrix::Zero(k, k);
  for (Index i = 0; i < k; ++i)
    for (SparseMatrix::InnerIterator it(g.adjacency(), ids[static_cast<std::size_t>(i)]); it; ++it)
      if (const Index j = position[static_cast<std::size_t>(it.col())]; j >= 0) out(i, j) = it.value();
  return out;
}

// ---- text format ---------------------------------------------------------
//
//   n d
//   <n lines of d reals>
//   u v [w]        one line per undirected edge, 0-indexed, weight default 1

inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view token, const std::string& where) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), x);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw std::runtime_error(where + ": cannot parse number '" + std::string(token) + "'");
  return x;
}

inline Index parse_index(std::string_view token, const std::string& where) {
  long long x = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), x);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw std::runtime_error(where + ": cannot parse integer '" + std::string(token) + "'");
  return static_cast<Index>(x);
}

inline std::vector<std::string> split_tokens(const std::string& line, char extra_separator = ' ') {
  std::vector<std::string> out;
  std::string current;
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == '\r' || c == extra_separator) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

inline Graph read_graph(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](std::vector<std::string>& tokens) {
    while (std::getline(in, line)) {
      ++line_no;
      tokens = split_tokens(line);
      if (!tokens.empty()) return true;
    }
    return false;
  };
  std::vector<std::string> tokens;
  if (!next_line(tokens) || tokens.size() != 2) throw std::runtime_error("graph: expected header 'n d'");
  const Index n = parse_index(tokens[0], "graph header");
  const Index d = parse_index(tokens[1], "graph header");
  if (n < 0 || d < 0) throw std::runtime_error("graph: negative header value");
  Matrix features(n, d);
  for (Index i = 0; i < n; ++i) {
    const std::string where = "graph line " + std::to_string(line_no + 1);
    if (d == 0) break;
    if (!next_line(tokens)) throw std::runtime_error("graph: expected " + std::to_string(n) + " feature lines");
    if (static_cast<Index>(tokens.size()) != d)
      throw std::runtime_error("graph line " + std::to_string(line_no) + ": expected " + std::to_string(d) +
                               " features, got " + std::to_string(tokens.size()));
    for (Index j = 0; j < d; ++j) features(i, j) = parse_double(tokens[static_cast<std::size_t>(j)], where);
  }
  std::vector<Edge> edges;
  while (next_line(tokens)) {
    const std::string where = "graph line " + std::to_string(line_no);
    if (tokens.size() != 2 && tokens.size() != 3) throw std::runtime_error(where + ": expected 'u v [w]'");
    Edge e{parse_index(tokens[0], where), parse_index(tokens[1], where), 1.0};
    if (tokens.size() == 3) e.weight = parse_double(tokens[2], where);
    edges.push_back(e);
  }
  return Graph::from_edges(n, edges, std::move(features));
}

inline void write_graph(std::ostream& out, const Graph& g) {
  out << g.size() << ' ' << g.feature_width() << '\n';
  for (Index i = 0; i < g.size() && g.feature_width() > 0; ++i) {
    for (Index j = 0; j < g.feature_width(); ++j) out << (j ? " " : "") << format_double(g.features()(i, j));
    out << '\n';
  }
  for (const Edge& e : g.edges()) {
    out << e.u << ' ' << e.v;
    if (e.weight != 1.0) out << ' ' << format_double(e.weight);
    out << '\n';
  }
}

}  // namespace gxn
