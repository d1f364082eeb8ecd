#include "molllama/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace molllama {

Linear Linear::create(ParameterStore& store, std::string_view group, const std::string& name, Eigen::Index in,
                      Eigen::Index out, Rng& rng, double stddev, bool with_bias) {
  if (stddev < 0.0) stddev = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = store.normal(group, name + ".weight", in, out, stddev, rng);
  if (with_bias) l.bias = store.zeros(group, name + ".bias", 1, out);
  return l;
}

ag::Tensor Linear::operator()(const ag::Tensor& x) const {
  ag::Tensor y = ag::matmul(x, weight);
  return bias.defined() ? ag::add_row(y, bias) : y;
}

LoRAAdapter LoRAAdapter::create(ParameterStore& store, const std::string& target, Eigen::Index d_in,
                                Eigen::Index d_out, int rank, double alpha, double dropout, Rng& rng) {
  if (rank <= 0) throw std::invalid_argument("LoRA rank must be positive");
  LoRAAdapter adapter;
  adapter.target = target;
  adapter.rank = rank;
  adapter.alpha = alpha;
  adapter.dropout = dropout;
  adapter.a = store.normal(groups::kLora, target + ".lora_a", rank, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)),
                           rng);
  adapter.b = store.zeros(groups::kLora, target + ".lora_b", d_out, rank);
  return adapter;
}

ag::Tensor lora_apply(const ag::Tensor& base_out, const LoRAAdapter& adapter, const ag::Tensor& input, bool training,
                      Rng* rng) {
  if (input.cols() != adapter.a.cols()) throw std::invalid_argument("lora_apply: input width does not match A");
  if (base_out.cols() != adapter.b.rows() || base_out.rows() != input.rows()) {
    throw std::invalid_argument("lora_apply: base output shape does not match B");
  }
  ag::Tensor x = input;
  if (training && adapter.dropout > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("lora_apply: training dropout needs an rng");
    x = ag::dropout(x, adapter.dropout, *rng);
  }
  const ag::Tensor delta = ag::matmul_nt(ag::matmul_nt(x, adapter.a), adapter.b);
  return ag::add(base_out, ag::scale(delta, adapter.scale()));
}

LayerNorm LayerNorm::create(ParameterStore& store, std::string_view group, const std::string& name,
                            Eigen::Index dim) {
  return {store.ones(group, name + ".gain", 1, dim), store.zeros(group, name + ".bias", 1, dim)};
}

FeedForward FeedForward::create(ParameterStore& store, std::string_view group, const std::string& name,
                                Eigen::Index dim, Eigen::Index hidden, Rng& rng) {
  return {Linear::create(store, group, name + ".up", dim, hidden, rng),
          Linear::create(store, group, name + ".down", hidden, dim, rng)};
}

AttentionLayer AttentionLayer::create(ParameterStore& store, std::string_view group, const std::string& name,
                                      Eigen::Index dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) throw std::invalid_argument("attention width must be divisible by heads");
  AttentionLayer layer;
  layer.heads = heads;
  static constexpr const char* kNames[] = {".q", ".k", ".v", ".o"};
  for (int p = 0; p < 4; ++p) layer.proj[p] = Linear::create(store, group, name + kNames[p], dim, dim, rng);
  return layer;
}

void AttentionLayer::attach_lora(ParameterStore& store, const std::string& name, int rank, double alpha,
                                 double dropout, Rng& rng) {
  static constexpr const char* kNames[] = {".q", ".k", ".v", ".o"};
  for (int p = 0; p < 4; ++p) {
    lora[p] = LoRAAdapter::create(store, name + kNames[p], proj[p].in_dim(), proj[p].out_dim(), rank, alpha, dropout,
                                  rng);
  }
}

ag::Tensor AttentionLayer::project(Projection which, const ag::Tensor& x, const ForwardContext& ctx) const {
  ag::Tensor y = proj[which](x);
  if (ctx.use_lora && lora[which]) y = lora_apply(y, *lora[which], x, ctx.training, ctx.rng);
  return y;
}

ag::Tensor AttentionLayer::operator()(const ag::Tensor& query_in, const ag::Tensor& kv_in, const AttentionMask* mask,
                                      const ForwardContext& ctx, const std::vector<ag::Matrix>* bias) const {
  const ag::Tensor q = project(kQuery, query_in, ctx);
  const ag::Tensor k = project(kKey, kv_in, ctx);
  const ag::Tensor v = project(kValue, kv_in, ctx);
  return project(kOutput, multi_head_attention(q, k, v, mask, heads, bias, ctx.trace), ctx);
}

std::vector<ag::Tensor> joint_self_attention(std::span<const AttentionLayer* const> layers,
                                             std::span<const ag::Tensor> inputs, const AttentionMask* mask,
                                             const ForwardContext& ctx) {
  if (layers.size() != inputs.size() || inputs.empty()) {
    throw std::invalid_argument("joint_self_attention: need one layer per input group");
  }
  if (inputs.size() == 1) return {(*layers[0])(inputs[0], inputs[0], mask, ctx)};
  std::vector<ag::Tensor> qs, ks, vs;
  for (std::size_t g = 0; g < inputs.size(); ++g) {
    qs.push_back(layers[g]->project(AttentionLayer::kQuery, inputs[g], ctx));
    ks.push_back(layers[g]->project(AttentionLayer::kKey, inputs[g], ctx));
    vs.push_back(layers[g]->project(AttentionLayer::kValue, inputs[g], ctx));
  }
  const ag::Tensor mixed = multi_head_attention(ag::concat_rows(qs), ag::concat_rows(ks), ag::concat_rows(vs), mask,
                                                layers[0]->heads, nullptr, ctx.trace);
  std::vector<ag::Tensor> out;
  Eigen::Index at = 0;
  for (std::size_t g = 0; g < inputs.size(); ++g) {
    const Eigen::Index n = inputs[g].rows();
    out.push_back(layers[g]->project(AttentionLayer::kOutput, ag::rows(mixed, at, n), ctx));
    at += n;
  }
  return out;
}

}  // namespace molllama
