#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "molllama/rng.hpp"

// Reverse-mode automatic differentiation over dense double matrices.
// Activations are row-major in the modelling sense: one token per row.
namespace molllama::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;  // Empty until a gradient reaches this node.
  bool requires_grad = false;
  bool retain_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
  bool is_leaf() const { return !backward; }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Direct write access, for optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void retain_grad() { node_->retain_grad = true; }
  void zero_grad() { node_->grad.resize(0, 0); }

  // Back-propagates from a 1x1 tensor. Gradients accumulate into leaves.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Tensor constant(Matrix value);

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Adds a 1 x cols row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);

// Row-wise layer normalization with learned gain and bias (both 1 x cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Row-wise softmax. Disallowed entries get exactly zero weight and do not
// participate in the max or the normalizer. Every row needs an allowed entry.
Tensor masked_softmax(const Tensor& x, const BoolMatrix* allow = nullptr);

Tensor rows(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor cols(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
// Row reordering: output row k is input row order[k].
Tensor select_rows(const Tensor& x, std::span<const int> order);

Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);
// Column-wise maximum over rows (1 x cols). Ties go to the first row.
Tensor max_over_rows(const Tensor& x);
// Throws std::domain_error on a zero-norm row.
Tensor l2_normalize_rows(const Tensor& x);

// Weighted mean of per-row cross-entropy of logits against target ids.
// Rows with zero weight contribute nothing; at least one weight must be > 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> weights = {});

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

}  // namespace molllama::ag
