#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "molllama/config.hpp"
#include "molllama/model.hpp"
#include "molllama/samples.hpp"

namespace molllama {

enum class Stage { kStage1, kStage2, kFinetuneQa };
std::string_view stage_name(Stage s);

struct TrainConfig {
  Stage stage = Stage::kStage1;
  int epochs = 1;
  int batch_size = 8;
  // Samples per backward pass; gradients accumulate up to batch_size.
  // 0 means no accumulation. Not used by stage 1 (in-batch negatives).
  int micro_batch = 0;
  double peak_lr = 1e-4;
  double min_lr = 5e-6;
  int warmup_steps = 10;  // Desk-scale; full_scale(stage) restores 1000.
  double weight_decay = 0.05;
  bool fixed_lr = false;
  // Caps the number of optimizer steps; 0 runs all epochs.
  int max_steps = 0;
  std::uint64_t seed = 0;

  // Values from the published training recipe for each stage.
  static TrainConfig full_scale(Stage stage);
  static TrainConfig from_flat(const FlatConfig& flat, Stage stage);
  void validate() const;
};

// Linear warmup 0 -> peak over warmup_steps, then cosine peak -> min over the
// remaining steps. Returns peak exactly at step == warmup_steps and min
// exactly at step == total_steps. Fixed-lr configs return peak_lr.
double lr_schedule(long step, long total_steps, const TrainConfig& cfg);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Decoupled weight decay Adam over an explicit parameter list. Parameters
// without a gradient in a step are skipped.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);
  void step(double lr);
  void zero_grad();
  long steps() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<ag::Matrix> m_, v_;
  AdamWOptions opt_;
  std::vector<long> counts_;
  long t_ = 0;
};

// Trainable groups per stage.
std::set<std::string> trainable_groups(Stage stage);

struct StepLog {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<StepLog> log;
  long total_steps = 0;
  std::size_t skipped = 0;  // Samples dropped for exceeding max_seq_len.
  double final_loss = 0.0;
  // Stage 1 only: last-step components and in-batch retrieval.
  double contrastive = 0.0, matching = 0.0, generation = 0.0, retrieval_r1 = 0.0;
};

// Metrics sink: one JSON line {step, loss, lr} per optimizer step.
using MetricsSink = std::function<void(const StepLog&)>;
MetricsSink jsonl_sink(std::ostream& out);

struct Stage1Data {
  std::vector<MoleculeInput> molecules;
  std::vector<std::vector<int>> texts;  // IUPAC bytes
};
Stage1Data prepare_stage1(const MolLlama& model, const std::vector<chem::MoleculeRecord>& records);

TrainResult run_stage1(MolLlama& model, const Stage1Data& data, const TrainConfig& cfg,
                       const MetricsSink& sink = {});

// One training conversation bound to a molecule.
struct ChatExample {
  std::size_t molecule = 0;  // Index into the molecule list.
  RenderedChat chat;
};

struct InstructionData {
  std::vector<MoleculeInput> molecules;
  std::vector<ChatExample> examples;
  std::size_t skipped = 0;
};

// Builds training chats (system prompt for the data type, instruction or
// conversation turns, response) and drops samples longer than max_seq_len.
InstructionData prepare_instruction_data(const MolLlama& model, const std::vector<InstructionSample>& samples,
                                         const std::vector<chem::MoleculeRecord>& records);
InstructionData prepare_mcq_data(const MolLlama& model, const std::vector<McqItem>& items,
                                 const std::vector<chem::MoleculeRecord>& records);

TrainResult run_stage2(MolLlama& model, const InstructionData& data, const TrainConfig& cfg,
                       const MetricsSink& sink = {});
TrainResult finetune_qa(MolLlama& model, const InstructionData& data, const TrainConfig& cfg,
                        const MetricsSink& sink = {});

// Mean instruction loss of one batch, with gradients accumulated into the
// parameters in micro-batches. Exposed for the accumulation equivalence test.
double accumulate_instruction_batch(MolLlama& model, const InstructionData& data, std::span<const std::size_t> batch,
                                    int micro_batch, Rng& dropout_rng);

}  // namespace molllama
