#pragma once

#include <cstdint>
#include <vector>

#include "molllama/chem/conformer.hpp"
#include "molllama/chem/molecule.hpp"
#include "molllama/nn.hpp"
#include "molllama/params.hpp"

namespace molllama {

struct EncoderConfig {
  int hidden_dim = 32;
  int mp_layers = 2;
  int attn_layers = 2;
  int heads = 4;
  int rbf_bins = 16;
  double rbf_cutoff = 8.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class TokenRole : std::uint8_t { kGraph, kNode };
enum class Modality : std::uint8_t { k2d = 0, k3d = 1 };

// [graph token; node tokens], one row per token.
struct TokenSequence {
  ag::Matrix embeddings;
  std::vector<TokenRole> roles;
  Modality modality = Modality::k2d;

  Eigen::Index size() const { return embeddings.rows(); }
  Eigen::Index dim() const { return embeddings.cols(); }
};

// Elements the encoders have embedding rows for.
const std::vector<std::string>& encoder_elements();

// Bond-graph message passing. Node and graph computations are done row by row
// with sums taken in a canonical (sorted) order, so relabeling atoms permutes
// node tokens exactly and leaves the graph token bit-identical.
class Encoder2D {
 public:
  Encoder2D() = default;
  Encoder2D(ParameterStore& store, const EncoderConfig& cfg);

  TokenSequence operator()(const chem::MolGraph& graph) const;

 private:
  EncoderConfig cfg_;
  ag::Tensor element_emb_, charge_emb_, aromatic_emb_;
  std::vector<ag::Tensor> self_w_, self_b_;
  std::vector<std::vector<ag::Tensor>> bond_w_;  // [layer][bond order - 1]
  ag::Tensor graph_w_, graph_b_;
};

// Distance-biased self-attention over atoms.
class Encoder3D {
 public:
  Encoder3D() = default;
  Encoder3D(ParameterStore& store, const EncoderConfig& cfg);

  TokenSequence operator()(const chem::MolGraph& graph, const chem::Conformer& conf) const;

  // Per-head additive attention bias from pairwise distances.
  std::vector<ag::Matrix> distance_bias(const chem::Conformer& conf) const;

 private:
  struct Block {
    LayerNorm ln1, ln2;
    AttentionLayer attn;
    FeedForward ffn;
  };

  EncoderConfig cfg_;
  ag::Tensor element_emb_;
  ag::Tensor rbf_w_, rbf_b_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
  Linear graph_proj_;
};

TokenSequence encode_2d(const chem::MolGraph& graph, const Encoder2D& encoder);
TokenSequence encode_3d(const chem::MolGraph& graph, const chem::Conformer& conf, const Encoder3D& encoder);

}  // namespace molllama
