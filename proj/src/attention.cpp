#include "molllama/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace molllama {

AttentionMask AttentionMask::full(Eigen::Index n_query, Eigen::Index n_key) {
  return {ag::BoolMatrix::Constant(n_query, n_key, true)};
}

AttentionMask AttentionMask::causal(Eigen::Index n) {
  AttentionMask m{ag::BoolMatrix::Constant(n, n, false)};
  for (Eigen::Index q = 0; q < n; ++q) {
    for (Eigen::Index k = 0; k <= q; ++k) m.allow(q, k) = true;
  }
  return m;
}

void AttentionMask::validate() const {
  for (Eigen::Index r = 0; r < allow.rows(); ++r) {
    if (!allow.row(r).any()) throw std::invalid_argument("attention mask row " + std::to_string(r) + " allows no key");
  }
}

ag::Tensor multi_head_attention(const ag::Tensor& queries, const ag::Tensor& keys, const ag::Tensor& values,
                                const AttentionMask* mask, int heads, const std::vector<ag::Matrix>* head_bias,
                                AttentionTrace* trace) {
  if (heads <= 0) throw std::invalid_argument("multi_head_attention: heads must be positive");
  if (keys.rows() != values.rows()) throw std::invalid_argument("multi_head_attention: key/value row counts differ");
  if (queries.cols() != keys.cols()) throw std::invalid_argument("multi_head_attention: query/key widths differ");
  if (queries.cols() % heads != 0 || values.cols() % heads != 0) {
    throw std::invalid_argument("multi_head_attention: width not divisible by heads");
  }
  if (mask) {
    if (mask->rows() != queries.rows() || mask->cols() != keys.rows()) {
      throw std::invalid_argument("multi_head_attention: mask is " + std::to_string(mask->rows()) + "x" +
                                  std::to_string(mask->cols()) + ", expected " + std::to_string(queries.rows()) +
                                  "x" + std::to_string(keys.rows()));
    }
    mask->validate();
  }
  if (head_bias && static_cast<int>(head_bias->size()) != heads) {
    throw std::invalid_argument("multi_head_attention: need one bias matrix per head");
  }
  const Eigen::Index dh = queries.cols() / heads;
  const Eigen::Index dv = values.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const ag::BoolMatrix* allow = mask ? &mask->allow : nullptr;

  std::vector<ag::Tensor> outputs;
  outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const ag::Tensor qh = heads == 1 ? queries : ag::cols(queries, h * dh, dh);
    const ag::Tensor kh = heads == 1 ? keys : ag::cols(keys, h * dh, dh);
    const ag::Tensor vh = heads == 1 ? values : ag::cols(values, h * dv, dv);
    ag::Tensor scores = ag::scale(ag::matmul_nt(qh, kh), inv_sqrt);
    if (head_bias) scores = ag::add(scores, ag::constant((*head_bias)[h]));
    const ag::Tensor weights = ag::masked_softmax(scores, allow);
    if (trace) trace->weights.push_back(weights.value());
    outputs.push_back(ag::matmul(weights, vh));
  }
  return heads == 1 ? outputs[0] : ag::concat_cols(outputs);
}

}  // namespace molllama
