#include "molllama/objectives.hpp"

#include <stdexcept>

#include "molllama/tokenizer.hpp"

namespace molllama {

void Stage1Batch::validate() const {
  if (unified.empty()) throw std::invalid_argument("stage-1 batch is empty");
  if (unified.size() != texts.size()) throw std::invalid_argument("stage-1 batch: molecules and texts misaligned");
  for (const auto& t : texts) {
    if (t.empty()) throw std::invalid_argument("stage-1 batch: empty text");
  }
}

std::vector<int> qformer_text_ids(std::span<const int> text, MaskMode mode) {
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(mode == MaskMode::kGeneration ? tok::kDec : tok::kCls);
  ids.insert(ids.end(), text.begin(), text.end());
  if (mode == MaskMode::kGeneration) ids.push_back(tok::kEos);
  return ids;
}

ag::Tensor similarity_matrix(std::span<const ag::Tensor> query_outputs, std::span<const ag::Tensor> text_cls,
                             const Stage1Heads& heads) {
  if (query_outputs.size() != text_cls.size() || query_outputs.empty()) {
    throw std::invalid_argument("similarity_matrix: need equal, non-zero molecule and text counts");
  }
  const ag::Tensor texts = ag::l2_normalize_rows(heads.text_proj(ag::concat_rows(text_cls)));
  std::vector<ag::Tensor> rows;
  rows.reserve(query_outputs.size());
  for (const auto& q : query_outputs) {
    const ag::Tensor mol = ag::l2_normalize_rows(heads.mol_proj(q));
    rows.push_back(ag::max_over_rows(ag::matmul_nt(mol, texts)));
  }
  return ag::concat_rows(rows);
}

ag::Tensor info_nce(const ag::Tensor& sim, double temperature) {
  if (sim.rows() != sim.cols() || sim.rows() == 0) throw std::invalid_argument("info_nce: need a square matrix");
  if (temperature <= 0.0) throw std::invalid_argument("info_nce: temperature must be positive");
  std::vector<int> diag(static_cast<std::size_t>(sim.rows()));
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);
  const ag::Tensor logits = ag::scale(sim, 1.0 / temperature);
  const ag::Tensor mol_to_text = ag::cross_entropy(logits, diag);
  const ag::Tensor text_to_mol = ag::cross_entropy(ag::transpose(logits), diag);
  return ag::scale(mol_to_text + text_to_mol, 0.5);
}

double retrieval_at_1(const ag::Matrix& sim) {
  if (sim.rows() == 0) return 0.0;
  int hits = 0;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    sim.row(i).maxCoeff(&best);
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

ag::Tensor contrastive_loss(const Stage1Model& model, const Stage1Batch& batch, double temperature,
                            const ForwardContext& ctx, ag::Matrix* sim_out) {
  batch.validate();
  std::vector<ag::Tensor> queries, cls;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto ids = qformer_text_ids(batch.texts[i], MaskMode::kContrastive);
    const QFormerOutput out = model.qformer->forward(batch.unified[i], ids, MaskMode::kContrastive, ctx);
    queries.push_back(out.queries);
    cls.push_back(ag::rows(out.text, 0, 1));
  }
  const ag::Tensor sim = similarity_matrix(queries, cls, *model.heads);
  if (sim_out) *sim_out = sim.value();
  return info_nce(sim, temperature);
}

ag::Tensor matching_loss(const Stage1Model& model, const Stage1Batch& batch, Rng& rng, const ForwardContext& ctx) {
  batch.validate();
  const std::size_t b = batch.size();
  if (b < 2) throw std::invalid_argument("matching_loss needs at least two pairs");
  std::vector<ag::Tensor> pooled;
  std::vector<int> labels;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t neg = rng.below(b - 1);
    if (neg >= i) ++neg;
    for (const auto& [text, label] : {std::pair{i, 1}, std::pair{neg, 0}}) {
      const auto ids = qformer_text_ids(batch.texts[text], MaskMode::kMatching);
      const QFormerOutput out = model.qformer->forward(batch.unified[i], ids, MaskMode::kMatching, ctx);
      pooled.push_back(ag::mean_rows(out.queries));
      labels.push_back(label);
    }
  }
  return ag::cross_entropy(model.heads->itm(ag::concat_rows(pooled)), labels);
}

ag::Tensor generation_loss(const Stage1Model& model, const Stage1Batch& batch, const ForwardContext& ctx) {
  batch.validate();
  std::vector<ag::Tensor> logits;
  std::vector<int> targets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto ids = qformer_text_ids(batch.texts[i], MaskMode::kGeneration);
    const QFormerOutput out = model.qformer->forward(batch.unified[i], ids, MaskMode::kGeneration, ctx);
    const auto n = static_cast<Eigen::Index>(ids.size());
    logits.push_back(model.qformer->text_logits(ag::rows(out.text, 0, n - 1)));
    targets.insert(targets.end(), ids.begin() + 1, ids.end());
  }
  return ag::cross_entropy(ag::concat_rows(logits), targets);
}

Stage1Losses stage1_loss(const Stage1Model& model, const Stage1Batch& batch, double temperature, Rng& rng,
                         const Stage1Weights& weights, const ForwardContext& ctx) {
  Stage1Losses out;
  out.contrastive = contrastive_loss(model, batch, temperature, ctx, &out.similarity);
  out.matching = matching_loss(model, batch, rng, ctx);
  out.generation = generation_loss(model, batch, ctx);
  out.total = ag::scale(out.contrastive, weights.contrastive) + ag::scale(out.matching, weights.matching) +
              ag::scale(out.generation, weights.generation);
  return out;
}

}  // namespace molllama
