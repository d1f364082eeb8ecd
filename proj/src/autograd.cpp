#include "molllama/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace molllama::ag {
namespace {

thread_local bool g_grad_enabled = true;

// Creates the output node; records parents and the backward closure only when
// recording is on and some input needs a gradient.
Tensor make(Matrix value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    if (needs) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on a non-scalar tensor");
  return node_->value(0, 0);
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("backward() needs a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.size() == 0) continue;
    n->backward(*n);
    if (!n->retain_grad) n->grad.resize(0, 0);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor constant(Matrix value) { return Tensor(std::move(value), false); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()));
  }
  return make(a.value() * b.value(), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.cols()));
  }
  return make(a.value() * b.value().transpose(), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value);
    if (pb.requires_grad) pb.accumulate(self.grad.transpose() * pa.value);
  });
}

Tensor transpose(const Tensor& a) {
  return make(a.value().transpose(), {a.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make(a.value() * s, {a.node()}, [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a.node(), row.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

namespace {
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  constexpr double k = kGeluK;
  constexpr double c = kGeluC;
  const Matrix& x = a.value();
  Matrix t = (k * (x.array() + c * x.array().cube())).tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return make(std::move(out), {a.node()}, [t = std::move(t)](Node& self) {
    const Matrix& x = self.parents[0]->value;
    const auto dt = (1.0 - t.array().square()) * kGeluK * (1.0 + 3.0 * kGeluC * x.array().square());
    const auto d = 0.5 * (1.0 + t.array()) + 0.5 * x.array() * dt;
    self.parents[0]->accumulate((self.grad.array() * d).matrix());
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make(out, {a.node()}, [out](Node& self) {
    self.parents[0]->accumulate((self.grad.array() * (1.0 - out.array().square())).matrix());
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw std::invalid_argument("layer_norm: parameter shape mismatch");
  }
  const Matrix& v = x.value();
  Eigen::VectorXd inv_std(v.rows());
  Matrix xhat(v.rows(), d);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mean = v.row(r).mean();
    const double var = (v.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    out.row(r) = xhat.row(r).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  }
  return make(std::move(out), {x.node(), gain.node(), bias.node()},
              [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                Node& px = *self.parents[0];
                Node& pg = *self.parents[1];
                Node& pb = *self.parents[2];
                if (pg.requires_grad) pg.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
                if (px.requires_grad) {
                  Matrix dx(self.grad.rows(), self.grad.cols());
                  for (Eigen::Index r = 0; r < dx.rows(); ++r) {
                    const RowVector dxhat = self.grad.row(r).cwiseProduct(pg.value.row(0));
                    const double m1 = dxhat.mean();
                    const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                    dx.row(r) = inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                  }
                  px.accumulate(dx);
                }
              });
}

Tensor masked_softmax(const Tensor& x, const BoolMatrix* allow) {
  const Matrix& v = x.value();
  if (allow && (allow->rows() != v.rows() || allow->cols() != v.cols())) {
    throw std::invalid_argument("masked_softmax: mask shape mismatch");
  }
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (!allow || (*allow)(r, c)) mx = std::max(mx, v(r, c));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("masked_softmax: row " + std::to_string(r) + " has no allowed entry");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (!allow || (*allow)(r, c)) {
        out(r, c) = std::exp(v(r, c) - mx);
        total += out(r, c);
      }
    }
    out.row(r) /= total;
  }
  return make(out, {x.node()}, [out](Node& self) {
    const Eigen::VectorXd inner = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix dx = out.cwiseProduct(self.grad - inner.replicate(1, out.cols()));
    self.parents[0]->accumulate(dx);
  });
}

Tensor rows(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw std::out_of_range("rows: range out of bounds");
  return make(x.value().middleRows(begin, count), {x.node()}, [begin, count](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, count) = self.grad;
    p.accumulate(g);
  });
}

Tensor cols(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) throw std::out_of_range("cols: range out of bounds");
  return make(x.value().middleCols(begin, count), {x.node()}, [begin, count](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(begin, count) = self.grad;
    p.accumulate(g);
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index total = 0;
  const Eigen::Index c = parts[0].cols();
  std::vector<std::shared_ptr<Node>> parents;
  for (const Tensor& t : parts) {
    if (t.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    total += t.rows();
    parents.push_back(t.node());
  }
  Matrix out(total, c);
  Eigen::Index at = 0;
  for (const Tensor& t : parts) {
    out.middleRows(at, t.rows()) = t.value();
    at += t.rows();
  }
  return make(std::move(out), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index n = p->value.rows();
      if (p->requires_grad) p->accumulate(self.grad.middleRows(at, n));
      at += n;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index total = 0;
  const Eigen::Index r = parts[0].rows();
  std::vector<std::shared_ptr<Node>> parents;
  for (const Tensor& t : parts) {
    if (t.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    total += t.cols();
    parents.push_back(t.node());
  }
  Matrix out(r, total);
  Eigen::Index at = 0;
  for (const Tensor& t : parts) {
    out.middleCols(at, t.cols()) = t.value();
    at += t.cols();
  }
  return make(std::move(out), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index n = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, n));
      at += n;
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= table.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[k]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(k)) = table.value().row(ids[k]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make(std::move(out), {table.node()}, [idx = std::move(idx)](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += self.grad.row(static_cast<Eigen::Index>(k));
    p.accumulate(g);
  });
}

Tensor select_rows(const Tensor& x, std::span<const int> order) { return gather_rows(x, order); }

Tensor mean_rows(const Tensor& x) {
  const double n = static_cast<double>(x.rows());
  return make(x.value().colwise().mean(), {x.node()}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(self.grad.replicate(p.value.rows(), 1) / n);
  });
}

Tensor sum(const Tensor& x) {
  return make(Matrix::Constant(1, 1, x.value().sum()), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Tensor max_over_rows(const Tensor& x) {
  if (x.rows() == 0) throw std::invalid_argument("max_over_rows: empty input");
  const Matrix& v = x.value();
  std::vector<Eigen::Index> arg(v.cols());
  Matrix out(1, v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < v.rows(); ++r) {
      if (v(r, c) > v(best, c)) best = r;
    }
    arg[c] = best;
    out(0, c) = v(best, c);
  }
  return make(std::move(out), {x.node()}, [arg = std::move(arg)](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t c = 0; c < arg.size(); ++c) {
      g(arg[c], static_cast<Eigen::Index>(c)) = self.grad(0, static_cast<Eigen::Index>(c));
    }
    p.accumulate(g);
  });
}

Tensor l2_normalize_rows(const Tensor& x) {
  const Matrix& v = x.value();
  Eigen::VectorXd norms = v.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (norms(r) == 0.0) throw std::domain_error("l2_normalize_rows: zero-norm row " + std::to_string(r));
  }
  Matrix out = norms.cwiseInverse().asDiagonal() * v;
  return make(out, {x.node()}, [out, norms = std::move(norms)](Node& self) {
    const Eigen::VectorXd dots = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix dx = norms.cwiseInverse().asDiagonal() * (self.grad - dots.asDiagonal() * out);
    self.parents[0]->accumulate(dx);
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> weights) {
  const Matrix& v = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != v.rows()) {
    throw std::invalid_argument("cross_entropy: target count does not match rows");
  }
  if (!weights.empty() && weights.size() != targets.size()) {
    throw std::invalid_argument("cross_entropy: weight count does not match rows");
  }
  Matrix probs(v.rows(), v.cols());
  std::vector<double> w(targets.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double total_w = 0.0;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mx = v.row(r).maxCoeff();
    const RowVector e = (v.row(r).array() - mx).exp().matrix();
    const double z = e.sum();
    probs.row(r) = e / z;
    if (w[r] == 0.0) continue;
    const int t = targets[r];
    if (t < 0 || t >= v.cols()) throw std::out_of_range("cross_entropy: target out of range");
    loss += w[r] * (std::log(z) + mx - v(r, t));
    total_w += w[r];
  }
  if (total_w <= 0.0) throw std::invalid_argument("cross_entropy: no row carries weight");
  std::vector<int> tg(targets.begin(), targets.end());
  return make(Matrix::Constant(1, 1, loss / total_w), {logits.node()},
              [probs = std::move(probs), tg = std::move(tg), w = std::move(w), total_w](Node& self) {
                Matrix g = Matrix::Zero(probs.rows(), probs.cols());
                const double s = self.grad(0, 0) / total_w;
                for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                  if (w[r] == 0.0) continue;
                  g.row(r) = probs.row(r) * (w[r] * s);
                  g(r, tg[r]) -= w[r] * s;
                }
                self.parents[0]->accumulate(g);
              });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < mask.cols(); ++c) {
    for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng.uniform() < p ? 0.0 : keep;
  }
  Matrix out = x.value().cwiseProduct(mask);
  return make(std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(mask));
  });
}

}  // namespace molllama::ag
