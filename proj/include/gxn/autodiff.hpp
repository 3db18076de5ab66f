#pragma once

// Minimal define-by-run reverse-mode differentiation over dense row-major
// double matrices. A Tape records nodes in creation order, which is already a
// topological order, so backward() is a single reverse sweep.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gxn/rng.hpp"

namespace gxn {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline std::string shape_string(Index rows, Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

// A trainable matrix plus its gradient accumulator and Adam moment buffers.
class Parameter {
 public:
  Parameter(std::string name, Matrix init)
      : value(std::move(init)),
        first_moment(Matrix::Zero(value.rows(), value.cols())),
        second_moment(Matrix::Zero(value.rows(), value.cols())),
        name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }

  // Gradients are allocated on first accumulation; an empty grad means no
  // backward pass has reached this parameter yet.
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;

 private:
  std::string name_;
};

inline Matrix xavier_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Owns parameters at stable addresses; modules keep raw Parameter pointers.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    return *params_.back();
  }

  Parameter& xavier(const std::string& name, Index rows, Index cols, Rng& rng) {
    return add(name, xavier_uniform(rows, cols, rng));
  }

  Parameter& zeros(const std::string& name, Index rows, Index cols) {
    return add(name, Matrix::Zero(rows, cols));
  }

  Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::vector<Parameter*> all() const {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::string shape() const { return shape_string(rows(), cols()); }
  double item() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr, false});
    return Tensor(this, nodes_.size() - 1);
  }

  // One leaf per parameter per tape; reuse keeps fan-out accumulation on a
  // single node.
  Tensor parameter(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Tensor(this, it->second);
    nodes_.push_back(Node{p.value, Matrix(), nullptr, &p, true});
    param_nodes_[&p] = nodes_.size() - 1;
    return Tensor(this, nodes_.size() - 1);
  }

  Tensor record(Matrix value, std::initializer_list<Tensor> parents, Backward backward) {
    bool needs = false;
    for (const Tensor& t : parents) {
      if (&t.tape() != this) throw std::invalid_argument("tensor belongs to a different tape");
      needs = needs || nodes_[t.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : Backward(),
                          nullptr, needs});
    return Tensor(this, nodes_.size() - 1);
  }

  Tensor record(Matrix value, const std::vector<Tensor>& parents, Backward backward) {
    bool needs = false;
    for (const Tensor& t : parents) {
      if (&t.tape() != this) throw std::invalid_argument("tensor belongs to a different tape");
      needs = needs || nodes_[t.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : Backward(),
                          nullptr, needs});
    return Tensor(this, nodes_.size() - 1);
  }

  const Matrix& value(const Tensor& t) const { return nodes_[t.id()].value; }
  const Matrix& grad(const Tensor& t) const { return nodes_[t.id()].grad; }
  bool requires_grad(const Tensor& t) const { return nodes_[t.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(const Tensor& t, const Matrix& g) {
    Node& node = nodes_[t.id()];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }

  // Reverse sweep from a scalar loss. Parameter gradients are added to
  // Parameter::grad, so repeated calls accumulate.
  void backward(const Tensor& loss) {
    if (&loss.tape() != this) throw std::invalid_argument("backward: loss belongs to a different tape");
    const Matrix& v = value(loss);
    if (v.rows() != 1 || v.cols() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " + shape_string(v.rows(), v.cols()));
    for (Node& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.requires_grad || node.grad.size() == 0) continue;
      if (node.param != nullptr) {
        if (node.param->has_grad())
          node.param->grad += node.grad;
        else
          node.param->grad = node.grad;
      } else if (node.backward) {
        node.backward(*this, node.grad);
      }
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Matrix& Tensor::value() const { return tape_->value(*this); }
inline const Matrix& Tensor::grad() const { return tape_->grad(*this); }
inline double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("item: tensor is not scalar " + shape());
  return v(0, 0);
}

namespace detail {

[[noreturn]] inline void shape_error(const char* kernel, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(kernel) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

inline void check_ids(const char* kernel, std::span<const Index> ids, Index limit) {
  for (Index id : ids)
    if (id < 0 || id >= limit)
      throw std::out_of_range(std::string(kernel) + ": index " + std::to_string(id) +
                              " out of range [0, " + std::to_string(limit) + ")");
}

}  // namespace detail

// ---- kernels -------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
  Matrix out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

// Constant left operand (propagation operators, assignment matrices).
inline Tensor matmul(const Matrix& left, const Tensor& b) {
  if (left.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " + shape_string(left.rows(), left.cols()) +
                                " vs " + b.shape());
  Matrix out = left * b.value();
  return b.tape().record(std::move(out), {b}, [left, b](Tape& t, const Matrix& g) {
    t.accumulate(b, left.transpose() * g);
  });
}

inline Tensor matmul(const SparseMatrix& left, const Tensor& b) {
  if (left.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " + shape_string(left.rows(), left.cols()) +
                                " vs " + b.shape());
  Matrix out = left * b.value();
  return b.tape().record(std::move(out), {b}, [left, b](Tape& t, const Matrix& g) {
    t.accumulate(b, Matrix(left.transpose() * g));
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("add", a, b);
  Matrix out = a.value() + b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("sub", a, b);
  Matrix out = a.value() - b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

// a (n x c) + row (1 x c) broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) detail::shape_error("add_row", a, row);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

inline Tensor scale(const Tensor& a, double factor) {
  Matrix out = a.value() * factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Matrix& g) {
    t.accumulate(a, g * factor);
  });
}

// Row i of a (n x c) multiplied by column(i) (n x 1).
inline Tensor scale_rows(const Tensor& a, const Tensor& column) {
  if (column.cols() != 1 || column.rows() != a.rows()) detail::shape_error("scale_rows", a, column);
  Matrix out = column.value().col(0).asDiagonal() * a.value();
  return a.tape().record(std::move(out), {a, column}, [a, column](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, t.value(column).col(0).asDiagonal() * g);
    if (t.requires_grad(column)) t.accumulate(column, g.cwiseProduct(t.value(a)).rowwise().sum());
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.transpose());
  });
}

inline Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    t.accumulate(a, (x.array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid(x); });
  const std::size_t self = a.tape().size();
  return a.tape().record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(Tensor(&t, self));
    t.accumulate(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

inline constexpr double kLogFloor = 1e-12;

// Natural log with the argument clamped to >= 1e-12; clamped entries pass no
// gradient.
inline Tensor log(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) { return std::log(std::max(x, kLogFloor)); });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    t.accumulate(a, (x.array() >= kLogFloor).select(g.array() / x.array(), 0.0).matrix());
  });
}

inline Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp().matrix();
  const std::size_t self = a.tape().size();
  return a.tape().record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(Tensor(&t, self))));
  });
}

inline Matrix row_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

inline Tensor row_softmax(const Tensor& a) {
  Matrix out = row_softmax(a.value());
  const std::size_t self = a.tape().size();
  return a.tape().record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(Tensor(&t, self));
    Matrix dot = g.cwiseProduct(s).rowwise().sum();
    Matrix gi = s.cwiseProduct((g.colwise() - dot.col(0)));
    t.accumulate(a, gi);
  });
}

inline Tensor gather_rows(const Tensor& a, std::span<const Index> ids) {
  detail::check_ids("gather_rows", ids, a.rows());
  std::vector<Index> rows(ids.begin(), ids.end());
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  return a.tape().record(std::move(out), {a}, [a, rows = std::move(rows)](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<Index>(k));
    t.accumulate(a, ga);
  });
}

// Places row k of a at row ids[k] of an n-row zero matrix; ids must be unique.
inline Tensor scatter_rows(const Tensor& a, std::span<const Index> ids, Index n) {
  if (static_cast<Index>(ids.size()) != a.rows())
    throw std::invalid_argument("scatter_rows: " + std::to_string(ids.size()) + " ids for " + a.shape());
  detail::check_ids("scatter_rows", ids, n);
  std::vector<Index> rows(ids.begin(), ids.end());
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index r : rows) {
    if (seen[static_cast<std::size_t>(r)]) throw std::invalid_argument("scatter_rows: duplicate index " + std::to_string(r));
    seen[static_cast<std::size_t>(r)] = 1;
  }
  Matrix out = Matrix::Zero(n, a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(rows[k]) = a.value().row(static_cast<Index>(k));
  return a.tape().record(std::move(out), {a}, [a, rows = std::move(rows)](Tape& t, const Matrix& g) {
    Matrix ga(static_cast<Index>(rows.size()), g.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(static_cast<Index>(k)) = g.row(rows[k]);
    t.accumulate(a, ga);
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty tensor");
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape().record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0) / n));
  });
}

// n x c -> n x 1
inline Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix ga = g.col(0).replicate(1, t.value(a).cols());
    t.accumulate(a, ga);
  });
}

// n x c -> 1 x c
inline Tensor col_mean(const Tensor& a) {
  if (a.rows() == 0) throw std::invalid_argument("col_mean: no rows");
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return a.tape().record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, g.row(0).replicate(t.value(a).rows(), 1) / n);
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != parts.front().rows()) detail::shape_error("concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix out(parts.front().rows(), cols);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const Tensor& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offsets.push_back(offset);
    offset += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [parts, offsets](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < parts.size(); ++i)
      if (t.requires_grad(parts[i])) t.accumulate(parts[i], g.middleCols(offsets[i], t.value(parts[i]).cols()));
  });
}

// Row-major reshape of a (r x c) into 1 x (r * c).
inline Tensor flatten(const Tensor& a) {
  const Index rows = a.rows();
  const Index cols = a.cols();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), 1, rows * cols);
  return a.tape().record(std::move(out), {a}, [a, rows, cols](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), rows, cols));
  });
}

// ---- optimizer -----------------------------------------------------------

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam, applied in place; gradients are zeroed afterwards.
inline void adam_step(std::span<Parameter* const> params, const AdamOptions& opt, long step) {
  if (step < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  for (const Parameter* p : params)
    if (!p->has_grad()) throw std::logic_error("adam_step: parameter '" + p->name() + "' has no gradient");
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (Parameter* p : params) {
    p->first_moment = opt.beta1 * p->first_moment + (1.0 - opt.beta1) * p->grad;
    p->second_moment = opt.beta2 * p->second_moment + (1.0 - opt.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= opt.learning_rate * (p->first_moment.array() / c1) /
                        ((p->second_moment.array() / c2).sqrt() + opt.epsilon);
    p->zero_grad();
  }
}

// ---- gradient check ------------------------------------------------------

using ScalarFunction = std::function<Tensor(Tape&)>;

// Worst relative error between backward() and central differences over all
// coordinates of params; denominator max(|a|, |b|, 1e-8).
inline double finite_difference_check(const ScalarFunction& f, std::span<Parameter* const> params,
                                      double h = 1e-5) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Index i = 0; i < p->rows(); ++i) {
      for (Index j = 0; j < p->cols(); ++j) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + h;
        double plus = 0.0;
        {
          Tape tape;
          plus = f(tape).item();
        }
        p->value(i, j) = saved - h;
        double minus = 0.0;
        {
          Tape tape;
          minus = f(tape).item();
        }
        p->value(i, j) = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double a = analytic(i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
    p->zero_grad();
  }
  return worst;
}

}  // namespace gxn
