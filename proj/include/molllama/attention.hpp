#pragma once

#include <vector>

#include "molllama/autograd.hpp"

namespace molllama {

// allow(q, k) == true lets query row q attend to key row k.
struct AttentionMask {
  ag::BoolMatrix allow;

  static AttentionMask full(Eigen::Index n_query, Eigen::Index n_key);
  static AttentionMask causal(Eigen::Index n);

  Eigen::Index rows() const { return allow.rows(); }
  Eigen::Index cols() const { return allow.cols(); }
  // Throws std::invalid_argument if some query row allows no key.
  void validate() const;
};

// Collects per-head attention weight matrices when passed to a forward call.
struct AttentionTrace {
  std::vector<ag::Matrix> weights;
};

// Scaled dot-product attention with the columns of queries/keys/values split
// evenly over `heads`. Masked keys receive exactly zero weight. `head_bias`
// (one n_query x n_key matrix per head) is added to the scores when given.
ag::Tensor multi_head_attention(const ag::Tensor& queries, const ag::Tensor& keys, const ag::Tensor& values,
                                const AttentionMask* mask, int heads,
                                const std::vector<ag::Matrix>* head_bias = nullptr,
                                AttentionTrace* trace = nullptr);

}  // namespace molllama
