#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "molllama/attention.hpp"
#include "molllama/autograd.hpp"
#include "molllama/params.hpp"

namespace molllama {

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // Dropout source; required when training with dropout.
  bool use_lora = true;
  AttentionTrace* trace = nullptr;
};

// y = x W + b with W stored in x out.
struct Linear {
  ag::Tensor weight;
  ag::Tensor bias;  // Undefined when created without bias.

  static Linear create(ParameterStore& store, std::string_view group, const std::string& name, Eigen::Index in,
                       Eigen::Index out, Rng& rng, double stddev = -1.0, bool with_bias = true);
  ag::Tensor operator()(const ag::Tensor& x) const;
  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }
};

// Low-rank delta on a frozen projection: out += (alpha / rank) * dropout(x) A^T B^T.
struct LoRAAdapter {
  std::string target;
  ag::Tensor a;  // rank x d_in, random init
  ag::Tensor b;  // d_out x rank, zero init
  int rank = 8;
  double alpha = 32.0;
  double dropout = 0.1;

  double scale() const { return alpha / static_cast<double>(rank); }
  static LoRAAdapter create(ParameterStore& store, const std::string& target, Eigen::Index d_in, Eigen::Index d_out,
                            int rank, double alpha, double dropout, Rng& rng);
};

ag::Tensor lora_apply(const ag::Tensor& base_out, const LoRAAdapter& adapter, const ag::Tensor& input, bool training,
                      Rng* rng = nullptr);

struct LayerNorm {
  ag::Tensor gain;
  ag::Tensor bias;

  static LayerNorm create(ParameterStore& store, std::string_view group, const std::string& name, Eigen::Index dim);
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::layer_norm(x, gain, bias); }
};

struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward create(ParameterStore& store, std::string_view group, const std::string& name, Eigen::Index dim,
                            Eigen::Index hidden, Rng& rng);
  ag::Tensor operator()(const ag::Tensor& x) const { return down(ag::gelu(up(x))); }
};

// Query/key/value/output projections around multi_head_attention, with
// optional LoRA adapters on each projection.
struct AttentionLayer {
  enum Projection { kQuery = 0, kKey = 1, kValue = 2, kOutput = 3 };

  std::array<Linear, 4> proj;
  std::array<std::optional<LoRAAdapter>, 4> lora;
  int heads = 1;

  static AttentionLayer create(ParameterStore& store, std::string_view group, const std::string& name,
                               Eigen::Index dim, int heads, Rng& rng);
  void attach_lora(ParameterStore& store, const std::string& name, int rank, double alpha, double dropout, Rng& rng);

  ag::Tensor project(Projection which, const ag::Tensor& x, const ForwardContext& ctx) const;
  ag::Tensor operator()(const ag::Tensor& query_in, const ag::Tensor& kv_in, const AttentionMask* mask,
                        const ForwardContext& ctx = {}, const std::vector<ag::Matrix>* bias = nullptr) const;
};

// Self-attention over the row-concatenation of several token groups, where
// group g is projected with layers[g]. Passing the same layer for every group
// gives ordinary shared-weight attention. Returns one output per group.
std::vector<ag::Tensor> joint_self_attention(std::span<const AttentionLayer* const> layers,
                                             std::span<const ag::Tensor> inputs, const AttentionMask* mask,
                                             const ForwardContext& ctx = {});

}  // namespace molllama
