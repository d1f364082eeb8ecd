#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "molllama/chem/molecule.hpp"
#include "molllama/lm.hpp"
#include "molllama/model.hpp"

namespace molllama::eval {

// A chat to answer. Message::molecule indexes `molecules`. A non-empty
// assistant_prefix is a partial response the model must continue.
struct ModelQuery {
  ChatSequence chat;
  std::vector<chem::MoleculeRecord> molecules;
  std::string assistant_prefix;
};

class ResponseModel {
 public:
  virtual ~ResponseModel() = default;
  // Returns only the newly generated text.
  virtual std::string generate(const ModelQuery& query) = 0;
};

class ScriptedResponder : public ResponseModel {
 public:
  using Fn = std::function<std::string(const ModelQuery&)>;
  explicit ScriptedResponder(Fn fn) : fn_(std::move(fn)) {}
  std::string generate(const ModelQuery& query) override { return fn_(query); }

 private:
  Fn fn_;
};

// Greedy (or sampled) decoding with a trained model. max_new is clamped so
// prompt plus continuation fits the context window.
class MolLlamaResponder : public ResponseModel {
 public:
  MolLlamaResponder(const MolLlama& model, DecodeOptions options) : model_(model), options_(options) {}
  std::string generate(const ModelQuery& query) override;

 private:
  const MolLlama& model_;
  DecodeOptions options_;
  std::map<std::string, ag::Tensor> cache_;
};

}  // namespace molllama::eval
