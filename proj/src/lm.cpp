#include "molllama/lm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molllama {

namespace {

void append_text(RenderedChat& out, std::string_view text, bool loss) {
  for (int id : tok::tokenize(text)) {
    out.ids.push_back(id);
    out.loss_mask.push_back(loss);
  }
}

void append_token(RenderedChat& out, int id, bool loss) {
  out.ids.push_back(id);
  out.loss_mask.push_back(loss);
}

}  // namespace

void LMConfig::validate() const {
  if (vocab_size <= 0 || n_layers <= 0 || hidden_dim <= 0 || heads <= 0 || max_seq_len <= 0 || ffn_mult <= 0) {
    throw std::invalid_argument("LM sizes must be positive");
  }
  if (hidden_dim % heads != 0) throw std::invalid_argument("LM hidden_dim must be a multiple of heads");
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

Role role_from_name(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw std::invalid_argument("unknown chat role '" + std::string(name) + "'");
}

RenderedChat render_chat(const ChatSequence& seq, int n_queries, bool add_generation_prompt) {
  RenderedChat out;
  append_token(out, tok::kBos, false);
  for (const auto& msg : seq.messages) {
    if (msg.molecule) {
      out.molecule_slots.push_back(static_cast<int>(out.ids.size()));
      out.slot_molecules.push_back(*msg.molecule);
      for (int k = 0; k < n_queries; ++k) append_token(out, tok::kMol, false);
    }
    switch (msg.role) {
      case Role::kSystem:
        append_text(out, "System: " + msg.text + "\n", false);
        break;
      case Role::kUser:
        append_text(out, "User: " + msg.text + "\n", false);
        break;
      case Role::kAssistant:
        append_text(out, "Assistant: ", false);
        append_text(out, msg.text, true);
        append_token(out, tok::kEos, true);
        append_text(out, "\n", false);
        break;
    }
  }
  if (add_generation_prompt) append_text(out, "Assistant: ", false);
  return out;
}

ChatSequence single_molecule_chat(const std::string& system, const std::string& user, const std::string& assistant) {
  ChatSequence seq;
  seq.messages.push_back({Role::kSystem, system, std::nullopt});
  seq.messages.push_back({Role::kUser, user, 0});
  if (!assistant.empty()) seq.messages.push_back({Role::kAssistant, assistant, std::nullopt});
  return seq;
}

DecoderLM::DecoderLM(ParameterStore& store, const LMConfig& cfg, const LoraConfig& lora, Rng& rng)
    : cfg_(cfg), lora_(lora) {
  cfg.validate();
  const auto g = groups::kLmBase;
  const Eigen::Index d = cfg.hidden_dim;
  token_emb_ = store.normal(g, "lm.token_emb", cfg.vocab_size, d, 1.0, rng);
  pos_emb_ = store.normal(g, "lm.pos_emb", cfg.max_seq_len, d, 1.0, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "lm.layer" + std::to_string(l);
    Block block{LayerNorm::create(store, g, p + ".ln1", d), LayerNorm::create(store, g, p + ".ln2", d),
                AttentionLayer::create(store, g, p + ".attn", d, cfg.heads, rng),
                FeedForward::create(store, g, p + ".ffn", d, cfg.ffn_mult * d, rng)};
    block.attn.attach_lora(store, p + ".attn", lora.rank, lora.alpha, lora.dropout, rng);
    blocks_.push_back(std::move(block));
  }
  final_ln_ = LayerNorm::create(store, g, "lm.final_ln", d);
  head_ = Linear::create(store, g, "lm.head", d, cfg.vocab_size, rng, 1.0 / std::sqrt(static_cast<double>(d)), false);
}

void DecoderLM::reset_lora() {
  for (auto& block : blocks_) {
    for (auto& adapter : block.attn.lora) {
      if (adapter) adapter->b.mutable_value().setZero();
    }
  }
}

ag::Tensor DecoderLM::hidden(const RenderedChat& chat, std::span<const ag::Tensor> query_embeds,
                             const ForwardContext& ctx) const {
  const auto n = static_cast<Eigen::Index>(chat.ids.size());
  if (n == 0) throw std::invalid_argument("LM forward: empty sequence");
  if (n > cfg_.max_seq_len) {
    throw std::length_error("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                            std::to_string(cfg_.max_seq_len));
  }
  for (int id : chat.ids) {
    if (id < 0 || id >= cfg_.vocab_size) throw std::invalid_argument("LM forward: token id out of range");
  }
  // Split the sequence into text runs and molecule blocks.
  std::vector<ag::Tensor> parts;
  Eigen::Index at = 0;
  for (std::size_t s = 0; s < chat.molecule_slots.size(); ++s) {
    const int slot = chat.molecule_slots[s];
    const int mol = chat.slot_molecules[s];
    if (mol < 0 || mol >= static_cast<int>(query_embeds.size())) {
      throw std::invalid_argument("LM forward: molecule " + std::to_string(mol) + " has no query embeddings");
    }
    const ag::Tensor& q = query_embeds[mol];
    if (q.cols() != cfg_.hidden_dim) throw std::invalid_argument("LM forward: query embedding width mismatch");
    if (slot < at || slot + q.rows() > n) throw std::invalid_argument("LM forward: molecule slot out of range");
    if (slot > at) parts.push_back(ag::gather_rows(token_emb_, std::span<const int>(chat.ids).subspan(at, slot - at)));
    parts.push_back(q);
    at = slot + q.rows();
  }
  if (at < n) parts.push_back(ag::gather_rows(token_emb_, std::span<const int>(chat.ids).subspan(at, n - at)));
  ag::Tensor x = (parts.size() == 1 ? parts[0] : ag::concat_rows(parts)) + ag::rows(pos_emb_, 0, n);

  const AttentionMask causal = AttentionMask::causal(n);
  for (const auto& block : blocks_) {
    const ag::Tensor normed = block.ln1(x);
    x = x + block.attn(normed, normed, &causal, ctx);
    x = x + block.ffn(block.ln2(x));
  }
  return final_ln_(x);
}

ag::Tensor forward_with_molecule(const DecoderLM& lm, const RenderedChat& chat, std::span<const ag::Tensor> query_embeds,
                                 const ForwardContext& ctx) {
  return lm.logits(lm.hidden(chat, query_embeds, ctx));
}

ag::Tensor instruction_loss_from_logits(const ag::Tensor& logits, const RenderedChat& chat) {
  const auto n = static_cast<Eigen::Index>(chat.ids.size());
  if (logits.rows() != n) throw std::invalid_argument("instruction_loss: logits/sequence length mismatch");
  std::vector<int> targets;
  std::vector<double> weights;
  bool any = false;
  for (Eigen::Index t = 0; t + 1 < n; ++t) {
    const bool on = chat.loss_mask[t + 1];
    targets.push_back(chat.ids[t + 1]);
    weights.push_back(on ? 1.0 : 0.0);
    any = any || on;
  }
  if (!any) throw std::invalid_argument("instruction_loss: empty loss mask");
  return ag::cross_entropy(ag::rows(logits, 0, n - 1), targets, weights);
}

ag::Tensor instruction_loss(const DecoderLM& lm, const RenderedChat& chat, std::span<const ag::Tensor> query_embeds,
                            const ForwardContext& ctx) {
  // Only rows that predict a masked token reach the head; the result equals
  // instruction_loss_from_logits on the full logits.
  const auto n = static_cast<Eigen::Index>(chat.ids.size());
  std::vector<int> rows;
  std::vector<int> targets;
  for (Eigen::Index t = 0; t + 1 < n; ++t) {
    if (!chat.loss_mask[t + 1]) continue;
    rows.push_back(static_cast<int>(t));
    targets.push_back(chat.ids[t + 1]);
  }
  if (rows.empty()) throw std::invalid_argument("instruction_loss: empty loss mask");
  const ag::Tensor h = lm.hidden(chat, query_embeds, ctx);
  return ag::cross_entropy(lm.logits(ag::select_rows(h, rows)), targets);
}

std::string generate(const DecoderLM& lm, const RenderedChat& prompt, std::span<const ag::Tensor> query_embeds,
                     const DecodeOptions& options) {
  if (static_cast<int>(prompt.ids.size()) + options.max_new > lm.config().max_seq_len) {
    throw std::length_error("prompt of " + std::to_string(prompt.ids.size()) + " tokens plus max_new " +
                            std::to_string(options.max_new) + " exceeds max_seq_len");
  }
  if (!options.greedy && options.temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  ag::NoGradGuard no_grad;
  ForwardContext ctx;
  ctx.use_lora = options.use_lora;
  Rng rng(options.seed);
  RenderedChat seq = prompt;
  std::vector<int> produced;
  for (int step = 0; step < options.max_new; ++step) {
    const ag::Tensor h = lm.hidden(seq, query_embeds, ctx);
    const ag::RowVector logits = lm.logits(ag::rows(h, h.rows() - 1, 1)).value().row(0);
    int next = 0;
    if (options.greedy) {
      logits.maxCoeff(&next);
    } else {
      const ag::RowVector scaled = logits / options.temperature;
      const ag::RowVector p = (scaled.array() - scaled.maxCoeff()).exp().matrix();
      const double total = p.sum();
      double u = rng.uniform() * total;
      next = static_cast<int>(p.size()) - 1;
      for (Eigen::Index v = 0; v < p.size(); ++v) {
        u -= p[v];
        if (u < 0.0) {
          next = static_cast<int>(v);
          break;
        }
      }
    }
    if (next == tok::kEos) break;
    produced.push_back(next);
    seq.ids.push_back(next);
    seq.loss_mask.push_back(false);
  }
  return tok::detokenize(produced);
}

}  // namespace molllama
