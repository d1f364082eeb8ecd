#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "molllama/chem/molecule.hpp"
#include "molllama/config.hpp"
#include "molllama/encoders.hpp"
#include "molllama/fusion.hpp"
#include "molllama/lm.hpp"
#include "molllama/objectives.hpp"

namespace molllama {

struct ModelConfig {
  EncoderConfig encoder;
  BlendingConfig blending;
  QFormerConfig qformer;
  LMConfig lm;
  LoraConfig lora;
  int proj_dim = 32;
  double temperature = 0.07;
  std::uint64_t seed = 0;

  // Copies encoder.hidden_dim into the blending and Q-Former configs and
  // checks every sub-config.
  void finalize();

  static ModelConfig from_flat(const FlatConfig& flat);
  void to_flat(FlatConfig& flat) const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Frozen encoder outputs for one molecule, computed once and reused.
struct MoleculeInput {
  std::string id;
  chem::MolGraph graph;
  TokenSequence seq2d;
  TokenSequence seq3d;
};

class MolLlama {
 public:
  explicit MolLlama(ModelConfig cfg);
  MolLlama(const MolLlama&) = delete;
  MolLlama& operator=(const MolLlama&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  MoleculeInput encode(const chem::MoleculeRecord& record) const;
  MoleculeInput encode(const chem::MolGraph& graph, const chem::Conformer& conf, std::string id = {}) const;

  ag::Tensor unified(const MoleculeInput& mol, const ForwardContext& ctx = {}) const;
  // Q-Former query outputs projected to the LM width.
  ag::Tensor lm_queries(const MoleculeInput& mol, const ForwardContext& ctx = {}) const;

  Stage1Model stage1_model() const { return {&qformer_, &heads_}; }

  const Encoder2D& encoder2d() const { return enc2d_; }
  const Encoder3D& encoder3d() const { return enc3d_; }
  const BlendingModule& blending() const { return blending_; }
  const QFormer& qformer() const { return qformer_; }
  const Stage1Heads& stage1_heads() const { return heads_; }
  const DecoderLM& lm() const { return lm_; }
  DecoderLM& lm() { return lm_; }
  const Linear& query_projection() const { return query_proj_; }

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<MolLlama> load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  Encoder2D enc2d_;
  Encoder3D enc3d_;
  BlendingModule blending_;
  QFormer qformer_;
  Stage1Heads heads_;
  DecoderLM lm_;
  Linear query_proj_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace molllama
