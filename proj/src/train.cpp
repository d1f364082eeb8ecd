#include "molllama/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "molllama/chem/corpus.hpp"
#include "molllama/hash.hpp"
#include "molllama/prompts.hpp"

namespace molllama {
namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  return order;
}

// Splits an epoch order into batches of at most `size`. With min_last = 2 a
// trailing singleton is folded into the previous batch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t size,
                                                   std::size_t min_last) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    out.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
  }
  if (out.size() > 1 && out.back().size() < min_last) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

long planned_steps(std::size_t n_items, const TrainConfig& cfg, std::size_t min_last) {
  std::vector<std::size_t> order(n_items);
  const long per_epoch = static_cast<long>(make_batches(order, static_cast<std::size_t>(cfg.batch_size), min_last).size());
  long total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min<long>(total, cfg.max_steps);
  return total;
}

double step_lr(long step, long total, const TrainConfig& cfg) {
  // Optimizer step k (0-based) uses the schedule at k + 1, so the first update
  // has a nonzero rate and the last one lands on min_lr.
  return cfg.fixed_lr ? cfg.peak_lr : lr_schedule(step + 1, total, cfg);
}

std::vector<MoleculeInput> encode_all(const MolLlama& model, const std::vector<const chem::MoleculeRecord*>& recs) {
  std::vector<MoleculeInput> out;
  out.reserve(recs.size());
  for (const auto* r : recs) out.push_back(model.encode(*r));
  return out;
}

// Encodes each referenced molecule once and maps ids to indices.
class MoleculeIndex {
 public:
  MoleculeIndex(const MolLlama& model, const std::vector<chem::MoleculeRecord>& records)
      : model_(model), records_(records) {
    for (std::size_t k = 0; k < records.size(); ++k) by_id_.emplace(records[k].id, k);
  }

  std::size_t get(const std::string& id) {
    const auto seen = slot_.find(id);
    if (seen != slot_.end()) return seen->second;
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) throw DataError("unknown molecule id " + id);
    molecules_.push_back(model_.encode(records_[it->second]));
    slot_.emplace(id, molecules_.size() - 1);
    return molecules_.size() - 1;
  }

  std::vector<MoleculeInput> take() { return std::move(molecules_); }

 private:
  const MolLlama& model_;
  const std::vector<chem::MoleculeRecord>& records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> slot_;
  std::vector<MoleculeInput> molecules_;
};

TrainResult run_instruction(MolLlama& model, const InstructionData& data, TrainConfig cfg, const MetricsSink& sink) {
  cfg.validate();
  if (data.examples.empty()) throw std::invalid_argument("instruction training needs at least one example");
  const long total = planned_steps(data.examples.size(), cfg, 1);
  if (!cfg.fixed_lr && total <= cfg.warmup_steps) {
    throw std::invalid_argument("total steps must exceed warmup_steps");
  }

  ParameterStore& store = model.store();
  store.set_trainable(trainable_groups(cfg.stage));
  AdamW opt(store.in_groups(trainable_groups(cfg.stage)), {0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng order_rng(mix64(cfg.seed ^ 0x5e9));
  Rng dropout_rng(mix64(cfg.seed ^ 0xd50));

  TrainResult result;
  result.total_steps = total;
  result.skipped = data.skipped;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    const auto batches = make_batches(shuffled(data.examples.size(), order_rng),
                                      static_cast<std::size_t>(cfg.batch_size), 1);
    for (const auto& batch : batches) {
      if (step >= total) break;
      opt.zero_grad();
      const double loss = accumulate_instruction_batch(model, data, batch, cfg.micro_batch, dropout_rng);
      const double lr = step_lr(step, total, cfg);
      opt.step(lr);
      StepLog entry{step, loss, lr};
      result.log.push_back(entry);
      if (sink) sink(entry);
      result.final_loss = loss;
      ++step;
    }
  }
  store.zero_grad();
  store.set_trainable({});
  return result;
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kStage1:
      return "stage1";
    case Stage::kStage2:
      return "stage2";
    case Stage::kFinetuneQa:
      return "finetune_qa";
  }
  return "stage1";
}

TrainConfig TrainConfig::full_scale(Stage stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  cfg.peak_lr = 1e-4;
  cfg.min_lr = 5e-6;
  cfg.warmup_steps = 1000;
  cfg.weight_decay = 0.05;
  switch (stage) {
    case Stage::kStage1:
      cfg.epochs = 50;
      cfg.batch_size = 256;
      break;
    case Stage::kStage2:
      cfg.epochs = 10;
      cfg.batch_size = 128;
      break;
    case Stage::kFinetuneQa:
      cfg.epochs = 20;
      cfg.batch_size = 256;
      cfg.fixed_lr = true;
      break;
  }
  return cfg;
}

TrainConfig TrainConfig::from_flat(const FlatConfig& flat, Stage stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  cfg.fixed_lr = stage == Stage::kFinetuneQa;
  cfg.epochs = flat.get_int("epochs", cfg.epochs);
  cfg.batch_size = flat.get_int("batch_size", cfg.batch_size);
  cfg.micro_batch = flat.get_int("micro_batch", cfg.micro_batch);
  cfg.peak_lr = flat.get_double("peak_lr", cfg.peak_lr);
  cfg.min_lr = flat.get_double("min_lr", cfg.min_lr);
  cfg.warmup_steps = flat.get_int("warmup_steps", cfg.warmup_steps);
  cfg.weight_decay = flat.get_double("weight_decay", cfg.weight_decay);
  cfg.fixed_lr = flat.get_bool("fixed_lr", cfg.fixed_lr);
  cfg.max_steps = flat.get_int("max_steps", cfg.max_steps);
  cfg.seed = static_cast<std::uint64_t>(flat.get_int64("seed", static_cast<long long>(cfg.seed)));
  cfg.validate();
  return cfg;
}

void TrainConfig::validate() const {
  if (!(min_lr > 0.0) || !(min_lr <= peak_lr)) throw std::invalid_argument("need 0 < min_lr <= peak_lr");
  if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (micro_batch < 0) throw std::invalid_argument("micro_batch must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

double lr_schedule(long step, long total_steps, const TrainConfig& cfg) {
  if (cfg.fixed_lr) return cfg.peak_lr;
  if (total_steps <= cfg.warmup_steps) throw std::invalid_argument("total_steps must exceed warmup_steps");
  if (step < 0 || step > total_steps) throw std::out_of_range("lr_schedule step outside [0, total_steps]");
  if (step == cfg.warmup_steps) return cfg.peak_lr;
  if (step == total_steps) return cfg.min_lr;
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(total_steps - cfg.warmup_steps);
  return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(ag::Matrix::Zero(p->tensor.rows(), p->tensor.cols()));
    v_.push_back(ag::Matrix::Zero(p->tensor.rows(), p->tensor.cols()));
  }
  counts_.assign(params_.size(), 0);
}

void AdamW::step(double lr) {
  ++t_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ag::Tensor& w = params_[k]->tensor;
    if (!w.has_grad()) continue;
    const ag::Matrix& g = w.grad();
    const long t = ++counts_[k];
    m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * g;
    v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t));
    ag::Matrix& value = w.mutable_value();
    value *= 1.0 - lr * opt_.weight_decay;
    value.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + opt_.eps);
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->tensor.zero_grad();
}

std::set<std::string> trainable_groups(Stage stage) {
  const auto g = [](std::string_view s) { return std::string(s); };
  if (stage == Stage::kStage1) {
    return {g(groups::kBlending), g(groups::kQFormer), g(groups::kQFormerText), g(groups::kStage1Heads)};
  }
  return {g(groups::kBlending), g(groups::kQFormer), g(groups::kLora), g(groups::kQueryProjection)};
}

MetricsSink jsonl_sink(std::ostream& out) {
  return [&out](const StepLog& s) {
    nlohmann::json j{{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}};
    out << j.dump() << '\n';
    out.flush();
  };
}

Stage1Data prepare_stage1(const MolLlama& model, const std::vector<chem::MoleculeRecord>& records) {
  if (records.empty()) throw DataError("stage 1 corpus is empty");
  Stage1Data data;
  // [CLS]/[DEC] and [EOS] share the Q-Former text positions with the name.
  const std::size_t max_bytes = static_cast<std::size_t>(model.config().qformer.max_text_len) - 2;
  std::vector<const chem::MoleculeRecord*> recs;
  for (const auto& r : records) {
    if (r.iupac.empty()) throw DataError("record " + r.id + " has no IUPAC name");
    recs.push_back(&r);
    auto ids = tok::tokenize(r.iupac);
    if (ids.size() > max_bytes) ids.resize(max_bytes);
    data.texts.push_back(std::move(ids));
  }
  data.molecules = encode_all(model, recs);
  return data;
}

TrainResult run_stage1(MolLlama& model, const Stage1Data& data, const TrainConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  const std::size_t n = data.molecules.size();
  if (n == 0) throw DataError("stage 1 corpus is empty");
  if (n < 2) throw std::invalid_argument("stage 1 needs at least two pairs for in-batch negatives");
  if (data.texts.size() != n) throw std::invalid_argument("stage 1 texts and molecules differ in length");
  const long total = planned_steps(n, cfg, 2);
  if (!cfg.fixed_lr && total <= cfg.warmup_steps) throw std::invalid_argument("total steps must exceed warmup_steps");

  ParameterStore& store = model.store();
  store.set_trainable(trainable_groups(Stage::kStage1));
  AdamW opt(store.in_groups(trainable_groups(Stage::kStage1)), {0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng order_rng(mix64(cfg.seed ^ 0x5e9));
  Rng loss_rng(mix64(cfg.seed ^ 0x17e));
  Rng dropout_rng(mix64(cfg.seed ^ 0xd50));
  const Stage1Model heads = model.stage1_model();
  const double temperature = model.config().temperature;

  auto make_batch = [&](const std::vector<std::size_t>& idx, const ForwardContext& ctx) {
    Stage1Batch b;
    for (std::size_t k : idx) {
      b.unified.push_back(model.unified(data.molecules[k], ctx));
      b.texts.push_back(data.texts[k]);
    }
    return b;
  };

  TrainResult result;
  result.total_steps = total;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    const auto batches = make_batches(shuffled(n, order_rng), static_cast<std::size_t>(cfg.batch_size), 2);
    for (const auto& idx : batches) {
      if (step >= total) break;
      ForwardContext ctx;
      ctx.training = true;
      ctx.rng = &dropout_rng;
      opt.zero_grad();
      const Stage1Batch batch = make_batch(idx, ctx);
      const Stage1Losses losses = stage1_loss(heads, batch, temperature, loss_rng, {}, ctx);
      losses.total.backward();
      const double lr = step_lr(step, total, cfg);
      opt.step(lr);
      StepLog entry{step, losses.total.item(), lr};
      result.log.push_back(entry);
      if (sink) sink(entry);
      result.final_loss = entry.loss;
      ++step;
    }
  }
  store.zero_grad();
  store.set_trainable({});

  // Post-training evaluation pass in corpus order.
  ag::NoGradGuard no_grad;
  Rng eval_rng(mix64(cfg.seed ^ 0xe7a1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batches = make_batches(order, static_cast<std::size_t>(cfg.batch_size), 2);
  for (const auto& idx : batches) {
    const Stage1Losses l = stage1_loss(heads, make_batch(idx, {}), temperature, eval_rng);
    const double w = static_cast<double>(idx.size()) / static_cast<double>(n);
    result.contrastive += w * l.contrastive.item();
    result.matching += w * l.matching.item();
    result.generation += w * l.generation.item();
    result.retrieval_r1 += w * retrieval_at_1(l.similarity);
  }
  return result;
}

InstructionData prepare_instruction_data(const MolLlama& model, const std::vector<InstructionSample>& samples,
                                         const std::vector<chem::MoleculeRecord>& records) {
  InstructionData data;
  MoleculeIndex index(model, records);
  const int nq = model.config().qformer.n_queries;
  const auto max_len = static_cast<std::size_t>(model.config().lm.max_seq_len);
  for (const auto& s : samples) {
    if (!s.error.empty() || s.malformed) continue;
    RenderedChat chat = render_chat(to_chat(prompts::training_messages(s)), nq);
    if (chat.ids.size() > max_len) {
      ++data.skipped;
      continue;
    }
    if (std::find(chat.loss_mask.begin(), chat.loss_mask.end(), true) == chat.loss_mask.end()) {
      throw DataError("sample for " + s.molecule_id + " has no assistant turn");
    }
    data.examples.push_back({index.get(s.molecule_id), std::move(chat)});
  }
  data.molecules = index.take();
  return data;
}

InstructionData prepare_mcq_data(const MolLlama& model, const std::vector<McqItem>& items,
                                 const std::vector<chem::MoleculeRecord>& records) {
  InstructionData data;
  MoleculeIndex index(model, records);
  const int nq = model.config().qformer.n_queries;
  const auto max_len = static_cast<std::size_t>(model.config().lm.max_seq_len);
  for (const auto& item : items) {
    RenderedChat chat = render_chat(
        single_molecule_chat(prompts::conversation_system(), mcq_prompt(item), std::string(1, item.answer)), nq);
    if (chat.ids.size() > max_len) {
      ++data.skipped;
      continue;
    }
    data.examples.push_back({index.get(item.molecule_id), std::move(chat)});
  }
  data.molecules = index.take();
  return data;
}

double accumulate_instruction_batch(MolLlama& model, const InstructionData& data, std::span<const std::size_t> batch,
                                    int micro_batch, Rng& dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t chunk = micro_batch > 0 ? static_cast<std::size_t>(micro_batch) : batch.size();
  const double inv = 1.0 / static_cast<double>(batch.size());
  ForwardContext ctx;
  ctx.training = true;
  ctx.rng = &dropout_rng;
  double total = 0.0;
  for (std::size_t start = 0; start < batch.size(); start += chunk) {
    const std::size_t end = std::min(batch.size(), start + chunk);
    std::vector<ag::Tensor> terms;
    for (std::size_t k = start; k < end; ++k) {
      const ChatExample& ex = data.examples.at(batch[k]);
      const ag::Tensor queries = model.lm_queries(data.molecules.at(ex.molecule), ctx);
      const ag::Tensor loss = instruction_loss(model.lm(), ex.chat, std::span<const ag::Tensor>(&queries, 1), ctx);
      total += loss.item();
      terms.push_back(loss);
    }
    ag::Tensor micro = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) micro = micro + terms[k];
    ag::scale(micro, inv).backward();
  }
  return total * inv;
}

TrainResult run_stage2(MolLlama& model, const InstructionData& data, const TrainConfig& cfg, const MetricsSink& sink) {
  TrainConfig c = cfg;
  c.stage = Stage::kStage2;
  return run_instruction(model, data, c, sink);
}

TrainResult finetune_qa(MolLlama& model, const InstructionData& data, const TrainConfig& cfg, const MetricsSink& sink) {
  TrainConfig c = cfg;
  c.stage = Stage::kFinetuneQa;
  c.fixed_lr = true;
  return run_instruction(model, data, c, sink);
}

}  // namespace molllama
