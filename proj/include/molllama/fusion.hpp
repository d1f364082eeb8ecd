#pragma once

#include <optional>
#include <span>
#include <vector>

#include "molllama/encoders.hpp"
#include "molllama/masks.hpp"
#include "molllama/nn.hpp"

namespace molllama {

struct BlendingConfig {
  int blocks = 4;
  int heads = 8;
  int hidden_dim = 32;

  void validate() const;
};

// Paired self-/cross-attention blocks over the 2D and 3D token streams.
// Within a block each stream runs self-attention, then cross-attention with
// keys/values taken from the other stream's block-input state (both streams
// update in parallel), then a feed-forward layer. Blocks do not share weights.
class BlendingModule {
 public:
  BlendingModule() = default;
  BlendingModule(ParameterStore& store, const BlendingConfig& cfg, Rng& rng);

  // Returns [blended 2D tokens; blended 3D tokens].
  ag::Tensor operator()(const TokenSequence& seq2d, const TokenSequence& seq3d, const ForwardContext& ctx = {}) const;

  const BlendingConfig& config() const { return cfg_; }

 private:
  struct Stream {
    LayerNorm ln_self, ln_cross, ln_kv, ln_ffn;
    AttentionLayer self_attn, cross_attn;
    FeedForward ffn;
  };
  struct Block {
    Stream s2d, s3d;
  };

  BlendingConfig cfg_;
  ag::Tensor modality_emb_;  // 2 x hidden: row 0 for 2D tokens, row 1 for 3D tokens.
  std::vector<Block> blocks_;
  LayerNorm final_2d_, final_3d_;
};

TokenSequence blend(const TokenSequence& seq2d, const TokenSequence& seq3d, const BlendingModule& module);

struct QFormerConfig {
  int hidden_dim = 32;
  int layers = 2;
  int heads = 4;
  int n_queries = 8;
  int ffn_mult = 2;
  int vocab_size = 262;
  int max_text_len = 256;
  // The molecular and text transformers share self-attention weights.
  bool shared_self_attention = true;

  void validate() const;
};

struct QFormerOutput {
  ag::Tensor queries;  // n_queries x hidden
  ag::Tensor text;     // n_text x hidden, undefined when no text was given
};

// Learnable query tokens that cross-attend into molecular tokens in every
// layer, run jointly with a text transformer under a mode-dependent
// self-attention mask.
class QFormer {
 public:
  QFormer() = default;
  QFormer(ParameterStore& store, const QFormerConfig& cfg, Rng& rng);

  QFormerOutput forward(const ag::Tensor& unified, std::span<const int> text_ids, MaskMode mode,
                        const ForwardContext& ctx = {}) const;

  // Query outputs without text: the fixed-length molecule representation.
  ag::Tensor embed(const ag::Tensor& unified, const ForwardContext& ctx = {}) const;

  // Next-token logits for text outputs.
  ag::Tensor text_logits(const ag::Tensor& text_states) const { return lm_head_(text_states); }

  const QFormerConfig& config() const { return cfg_; }

 private:
  struct Layer {
    LayerNorm ln_self_q, ln_self_t, ln_cross, ln_ffn_q, ln_ffn_t;
    AttentionLayer self_attn;
    std::optional<AttentionLayer> text_self_attn;  // Only when weights are not shared.
    AttentionLayer cross_attn;
    FeedForward ffn_q, ffn_t;
  };

  QFormerConfig cfg_;
  ag::Tensor query_tokens_;
  ag::Tensor token_emb_, pos_emb_;
  std::vector<Layer> layers_;
  LayerNorm final_q_, final_t_;
  Linear lm_head_;
};

ag::Tensor qformer_embed(const TokenSequence& unified, const QFormer& qformer);

// Projections used only by the stage-1 objectives.
struct Stage1Heads {
  Linear mol_proj;
  Linear text_proj;
  Linear itm;  // 2-way matching classifier

  static Stage1Heads create(ParameterStore& store, int hidden_dim, int proj_dim, Rng& rng);
};

}  // namespace molllama
