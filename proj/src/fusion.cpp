#include "molllama/fusion.hpp"

#include <stdexcept>

namespace molllama {

void BlendingConfig::validate() const {
  if (blocks < 1) throw std::invalid_argument("blending needs at least one block");
  if (hidden_dim <= 0 || heads <= 0 || hidden_dim % heads != 0) {
    throw std::invalid_argument("blending hidden_dim must be a positive multiple of heads");
  }
}

BlendingModule::BlendingModule(ParameterStore& store, const BlendingConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto g = groups::kBlending;
  const Eigen::Index d = cfg.hidden_dim;
  modality_emb_ = store.normal(g, "blend.modality", 2, d, 0.1, rng);
  auto make_stream = [&](const std::string& p) {
    return Stream{LayerNorm::create(store, g, p + ".ln_self", d),
                  LayerNorm::create(store, g, p + ".ln_cross", d),
                  LayerNorm::create(store, g, p + ".ln_kv", d),
                  LayerNorm::create(store, g, p + ".ln_ffn", d),
                  AttentionLayer::create(store, g, p + ".self", d, cfg.heads, rng),
                  AttentionLayer::create(store, g, p + ".cross", d, cfg.heads, rng),
                  FeedForward::create(store, g, p + ".ffn", d, 2 * d, rng)};
  };
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "blend.block" + std::to_string(b);
    blocks_.push_back({make_stream(p + ".2d"), make_stream(p + ".3d")});
  }
  final_2d_ = LayerNorm::create(store, g, "blend.final_2d", d);
  final_3d_ = LayerNorm::create(store, g, "blend.final_3d", d);
}

ag::Tensor BlendingModule::operator()(const TokenSequence& seq2d, const TokenSequence& seq3d,
                                      const ForwardContext& ctx) const {
  if (seq2d.dim() != cfg_.hidden_dim || seq3d.dim() != cfg_.hidden_dim) {
    throw std::invalid_argument("blend: token width " + std::to_string(seq2d.dim()) + "/" +
                                std::to_string(seq3d.dim()) + " does not match hidden_dim " +
                                std::to_string(cfg_.hidden_dim));
  }
  if (seq2d.modality != Modality::k2d || seq3d.modality != Modality::k3d) {
    throw std::invalid_argument("blend: expected a 2D stream and a 3D stream");
  }
  ag::Tensor x2 = ag::add_row(ag::constant(seq2d.embeddings), ag::rows(modality_emb_, 0, 1));
  ag::Tensor x3 = ag::add_row(ag::constant(seq3d.embeddings), ag::rows(modality_emb_, 1, 1));
  for (const auto& block : blocks_) {
    const ag::Tensor in2 = x2;
    const ag::Tensor in3 = x3;
    const ag::Tensor n2 = block.s2d.ln_self(in2);
    const ag::Tensor n3 = block.s3d.ln_self(in3);
    ag::Tensor y2 = in2 + block.s2d.self_attn(n2, n2, nullptr, ctx);
    ag::Tensor y3 = in3 + block.s3d.self_attn(n3, n3, nullptr, ctx);
    y2 = y2 + block.s2d.cross_attn(block.s2d.ln_cross(y2), block.s2d.ln_kv(in3), nullptr, ctx);
    y3 = y3 + block.s3d.cross_attn(block.s3d.ln_cross(y3), block.s3d.ln_kv(in2), nullptr, ctx);
    x2 = y2 + block.s2d.ffn(block.s2d.ln_ffn(y2));
    x3 = y3 + block.s3d.ffn(block.s3d.ln_ffn(y3));
  }
  const std::array<ag::Tensor, 2> parts{final_2d_(x2), final_3d_(x3)};
  return ag::concat_rows(parts);
}

TokenSequence blend(const TokenSequence& seq2d, const TokenSequence& seq3d, const BlendingModule& module) {
  ag::NoGradGuard no_grad;
  TokenSequence out;
  out.embeddings = module(seq2d, seq3d).value();
  out.roles = seq2d.roles;
  out.roles.insert(out.roles.end(), seq3d.roles.begin(), seq3d.roles.end());
  out.modality = Modality::k2d;
  return out;
}

void QFormerConfig::validate() const {
  if (hidden_dim <= 0 || heads <= 0 || hidden_dim % heads != 0) {
    throw std::invalid_argument("Q-Former hidden_dim must be a positive multiple of heads");
  }
  if (layers < 1 || n_queries < 1 || ffn_mult < 1 || vocab_size < 1 || max_text_len < 1) {
    throw std::invalid_argument("Q-Former sizes must be positive");
  }
}

QFormer::QFormer(ParameterStore& store, const QFormerConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto gq = groups::kQFormer;
  const auto gt = groups::kQFormerText;
  const Eigen::Index d = cfg.hidden_dim;
  query_tokens_ = store.normal(gq, "qformer.query_tokens", cfg.n_queries, d, 1.0, rng);
  token_emb_ = store.normal(gt, "qformer.token_emb", cfg.vocab_size, d, 1.0, rng);
  pos_emb_ = store.normal(gt, "qformer.pos_emb", cfg.max_text_len, d, 0.1, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "qformer.layer" + std::to_string(l);
    Layer layer{LayerNorm::create(store, gq, p + ".ln_self_q", d),
                LayerNorm::create(store, gt, p + ".ln_self_t", d),
                LayerNorm::create(store, gq, p + ".ln_cross", d),
                LayerNorm::create(store, gq, p + ".ln_ffn_q", d),
                LayerNorm::create(store, gt, p + ".ln_ffn_t", d),
                AttentionLayer::create(store, gq, p + ".self", d, cfg.heads, rng),
                std::nullopt,
                AttentionLayer::create(store, gq, p + ".cross", d, cfg.heads, rng),
                FeedForward::create(store, gq, p + ".ffn_q", d, cfg.ffn_mult * d, rng),
                FeedForward::create(store, gt, p + ".ffn_t", d, cfg.ffn_mult * d, rng)};
    if (!cfg.shared_self_attention) {
      layer.text_self_attn = AttentionLayer::create(store, gt, p + ".self_t", d, cfg.heads, rng);
    }
    layers_.push_back(std::move(layer));
  }
  final_q_ = LayerNorm::create(store, gq, "qformer.final_q", d);
  final_t_ = LayerNorm::create(store, gt, "qformer.final_t", d);
  lm_head_ = Linear::create(store, gt, "qformer.lm_head", d, cfg.vocab_size, rng);
}

QFormerOutput QFormer::forward(const ag::Tensor& unified, std::span<const int> text_ids, MaskMode mode,
                               const ForwardContext& ctx) const {
  if (unified.cols() != cfg_.hidden_dim) {
    throw std::invalid_argument("Q-Former: molecular token width " + std::to_string(unified.cols()) +
                                " does not match hidden_dim " + std::to_string(cfg_.hidden_dim));
  }
  if (static_cast<int>(text_ids.size()) > cfg_.max_text_len) {
    throw std::invalid_argument("Q-Former: text of " + std::to_string(text_ids.size()) + " tokens exceeds " +
                                std::to_string(cfg_.max_text_len));
  }
  const bool has_text = !text_ids.empty();
  ag::Tensor q = query_tokens_;
  ag::Tensor t;
  if (has_text) {
    for (int id : text_ids) {
      if (id < 0 || id >= cfg_.vocab_size) throw std::invalid_argument("Q-Former: token id out of range");
    }
    t = ag::gather_rows(token_emb_, text_ids) + ag::rows(pos_emb_, 0, static_cast<Eigen::Index>(text_ids.size()));
  }
  const auto n_text = static_cast<Eigen::Index>(text_ids.size());
  const AttentionMask mask = build_attention_mask(mode, cfg_.n_queries, n_text);
  for (const auto& layer : layers_) {
    if (has_text) {
      const AttentionLayer* text_layer = layer.text_self_attn ? &*layer.text_self_attn : &layer.self_attn;
      const std::array<const AttentionLayer*, 2> attn{&layer.self_attn, text_layer};
      const std::array<ag::Tensor, 2> inputs{layer.ln_self_q(q), layer.ln_self_t(t)};
      const auto out = joint_self_attention(attn, inputs, &mask, ctx);
      q = q + out[0];
      t = t + out[1];
    } else {
      const ag::Tensor nq = layer.ln_self_q(q);
      q = q + layer.self_attn(nq, nq, &mask, ctx);
    }
    q = q + layer.cross_attn(layer.ln_cross(q), unified, nullptr, ctx);
    q = q + layer.ffn_q(layer.ln_ffn_q(q));
    if (has_text) t = t + layer.ffn_t(layer.ln_ffn_t(t));
  }
  QFormerOutput out;
  out.queries = final_q_(q);
  if (has_text) out.text = final_t_(t);
  return out;
}

ag::Tensor QFormer::embed(const ag::Tensor& unified, const ForwardContext& ctx) const {
  return forward(unified, {}, MaskMode::kContrastive, ctx).queries;
}

ag::Tensor qformer_embed(const TokenSequence& unified, const QFormer& qformer) {
  return qformer.embed(ag::constant(unified.embeddings));
}

Stage1Heads Stage1Heads::create(ParameterStore& store, int hidden_dim, int proj_dim, Rng& rng) {
  const auto g = groups::kStage1Heads;
  return {Linear::create(store, g, "stage1.mol_proj", hidden_dim, proj_dim, rng),
          Linear::create(store, g, "stage1.text_proj", hidden_dim, proj_dim, rng),
          Linear::create(store, g, "stage1.itm", hidden_dim, 2, rng)};
}

}  // namespace molllama
