#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "molllama/nn.hpp"
#include "molllama/tokenizer.hpp"

namespace molllama {

struct LMConfig {
  int vocab_size = tok::kVocabSize;
  int n_layers = 2;
  int hidden_dim = 64;
  int heads = 4;
  int max_seq_len = 768;
  int ffn_mult = 4;

  void validate() const;
};

struct LoraConfig {
  int rank = 8;
  double alpha = 32.0;
  double dropout = 0.1;
};

enum class Role { kSystem, kUser, kAssistant };
std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct Message {
  Role role = Role::kUser;
  std::string text;
  // Index into the query-embedding list; molecule tokens are placed
  // immediately before this message.
  std::optional<int> molecule;
};

struct ChatSequence {
  std::vector<Message> messages;
};

// Token-level rendering of a chat:
//   <BOS>System: ...\n  [MOL x n_queries]  User: ...\n  Assistant: ...<EOS>\n
// loss_mask is true exactly on assistant text bytes and their end token.
struct RenderedChat {
  std::vector<int> ids;
  std::vector<bool> loss_mask;
  std::vector<int> molecule_slots;   // First position of each molecule block.
  std::vector<int> slot_molecules;   // Molecule index per block.
};

// With add_generation_prompt, the rendering ends with "Assistant: " so the
// model continues with the response.
RenderedChat render_chat(const ChatSequence& seq, int n_queries, bool add_generation_prompt = false);

// Default chat for a single molecule: system prompt, molecule, user turn.
ChatSequence single_molecule_chat(const std::string& system, const std::string& user,
                                  const std::string& assistant = {});

// Decoder-only transformer with learned positions and LoRA adapters on every
// attention projection.
class DecoderLM {
 public:
  DecoderLM() = default;
  DecoderLM(ParameterStore& store, const LMConfig& cfg, const LoraConfig& lora, Rng& rng);

  // Final hidden states. Each molecule block of the chat is replaced by the
  // rows of its query embedding matrix.
  ag::Tensor hidden(const RenderedChat& chat, std::span<const ag::Tensor> query_embeds,
                    const ForwardContext& ctx) const;
  ag::Tensor logits(const ag::Tensor& hidden_states) const { return head_(hidden_states); }

  const LMConfig& config() const { return cfg_; }
  const LoraConfig& lora_config() const { return lora_; }
  // Resets every LoRA B matrix to zero.
  void reset_lora();

 private:
  struct Block {
    LayerNorm ln1, ln2;
    AttentionLayer attn;
    FeedForward ffn;
  };

  LMConfig cfg_;
  LoraConfig lora_;
  ag::Tensor token_emb_, pos_emb_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
  Linear head_;
};

// Logits at every position for a rendered chat with molecule embeddings
// spliced in. Throws std::length_error past max_seq_len.
ag::Tensor forward_with_molecule(const DecoderLM& lm, const RenderedChat& chat, std::span<const ag::Tensor> query_embeds,
                                 const ForwardContext& ctx = {});

// Mean next-token cross-entropy over loss-masked positions.
ag::Tensor instruction_loss(const DecoderLM& lm, const RenderedChat& chat, std::span<const ag::Tensor> query_embeds,
                            const ForwardContext& ctx = {});
// The same loss from precomputed logits.
ag::Tensor instruction_loss_from_logits(const ag::Tensor& logits, const RenderedChat& chat);

struct DecodeOptions {
  bool greedy = true;
  double temperature = 0.5;
  int max_new = 128;
  std::uint64_t seed = 0;
  bool use_lora = true;
};

// Continues the rendered prompt until the end token or max_new tokens.
std::string generate(const DecoderLM& lm, const RenderedChat& prompt, std::span<const ag::Tensor> query_embeds,
                     const DecodeOptions& options);

}  // namespace molllama
