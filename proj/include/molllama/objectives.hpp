#pragma once

#include <span>
#include <vector>

#include "molllama/fusion.hpp"
#include "molllama/masks.hpp"

namespace molllama {

// Pair i (unified[i], texts[i]) is a positive molecule/IUPAC pair. Texts are
// raw byte token ids without special tokens.
struct Stage1Batch {
  std::vector<ag::Tensor> unified;
  std::vector<std::vector<int>> texts;

  std::size_t size() const { return unified.size(); }
  void validate() const;
};

struct Stage1Model {
  const QFormer* qformer = nullptr;
  const Stage1Heads* heads = nullptr;
};

struct Stage1Weights {
  double contrastive = 1.0;
  double matching = 1.0;
  double generation = 1.0;
};

// sim(i, j) = max_k cos(mol_proj(q_k(mol_i)), text_proj(text_cls_j)).
// Throws std::domain_error on a zero-norm embedding.
ag::Tensor similarity_matrix(std::span<const ag::Tensor> query_outputs, std::span<const ag::Tensor> text_cls,
                             const Stage1Heads& heads);

// Symmetric InfoNCE on a B x B similarity matrix against the diagonal.
ag::Tensor info_nce(const ag::Tensor& sim, double temperature);

// Fraction of rows whose argmax is the diagonal entry.
double retrieval_at_1(const ag::Matrix& sim);

ag::Tensor contrastive_loss(const Stage1Model& model, const Stage1Batch& batch, double temperature,
                            const ForwardContext& ctx = {}, ag::Matrix* sim_out = nullptr);

// One uniformly drawn in-batch negative text per positive pair. Needs B >= 2.
ag::Tensor matching_loss(const Stage1Model& model, const Stage1Batch& batch, Rng& rng,
                         const ForwardContext& ctx = {});

ag::Tensor generation_loss(const Stage1Model& model, const Stage1Batch& batch, const ForwardContext& ctx = {});

struct Stage1Losses {
  ag::Tensor contrastive;
  ag::Tensor matching;
  ag::Tensor generation;
  ag::Tensor total;
  ag::Matrix similarity;
};

Stage1Losses stage1_loss(const Stage1Model& model, const Stage1Batch& batch, double temperature, Rng& rng,
                         const Stage1Weights& weights = {}, const ForwardContext& ctx = {});

// Text layouts per mode: [CLS] + text for contrastive/matching,
// [DEC] + text + [EOS] for generation.
std::vector<int> qformer_text_ids(std::span<const int> text, MaskMode mode);

}  // namespace molllama
