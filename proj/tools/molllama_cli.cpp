// Command-line entry point. Exit codes: 0 success, 1 usage error, 2 data
// error, 3 remote-client failure.
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "molllama/chem/conformer.hpp"
#include "molllama/chem/corpus.hpp"
#include "molllama/chem/fingerprint.hpp"
#include "molllama/chem/smiles.hpp"
#include "molllama/datagen/pipeline.hpp"
#include "molllama/eval/judge.hpp"
#include "molllama/eval/moleculeqa.hpp"
#include "molllama/eval/pampa.hpp"
#include "molllama/eval/selection.hpp"
#include "molllama/hash.hpp"
#include "molllama/prompts.hpp"
#include "molllama/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace molllama;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kRemote = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string manifest;

  std::string smiles, corpus, samples, dataset, mcq, items, examples, reference;
  std::string init, model, metrics, ledger, dropped;
  std::string provider, provider_model, type = "all", mode = "default", level = "structural";
  std::string prompt, system;
  int k = 0, shots = 0, limit = 0, radius = 2, nbits = 2048, max_new = 128, max_parallel = 0;
  double temperature = 0.0;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), o_(o) {
    if (!o.config.empty()) {
      cfg_ = FlatConfig::load(o.config);
      inputs_.push_back(o.config);
    }
    for (const auto& kv : o.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg_.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) {
      cfg_.set("seed", std::to_string(*o.seed));
      cfg_.set("model.seed", std::to_string(*o.seed));
    }
  }

  const FlatConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg_.get_int64("seed", 0)); }

  void input(const std::string& path) {
    if (!path.empty()) inputs_.push_back(path);
  }
  void output(const std::string& path) { outputs_.push_back(path); }

  std::string provider_endpoint() const { return o_.provider.empty() ? cfg_.get("provider.endpoint", "mock:") : o_.provider; }

  datagen::LLMClient client() const {
    datagen::LLMClient c;
    const std::string model = o_.provider_model.empty() ? cfg_.get("provider.model", "gpt-4o-2024-08-06") : o_.provider_model;
    c.provider = datagen::make_provider(provider_endpoint(), model, cfg_.get("provider.api_key_env", "OPENAI_API_KEY"));
    c.max_parallel = o_.max_parallel > 0 ? o_.max_parallel : cfg_.get_int("provider.max_parallel", 4);
    c.retry.max_attempts = cfg_.get_int("provider.max_attempts", 3);
    c.retry.backoff_ms = cfg_.get_int("provider.backoff_ms", 500);
    return c;
  }

  // Written next to the primary output, or to ./molllama-<command>.manifest.json.
  void write_manifest() const {
    json j;
    j["command"] = command_;
    j["timestamp"] = utc_now();
    j["seed"] = seed();
    j["config"] = cfg_.values();
    json ins = json::object();
    for (const auto& p : inputs_) ins[p] = git_blob_sha1(read_file(p));
    j["inputs"] = ins;
    j["outputs"] = outputs_;
    fs::path where = !o_.manifest.empty() ? fs::path(o_.manifest)
                     : !o_.out.empty()    ? fs::path(o_.out + ".manifest.json")
                                          : fs::path("molllama-" + command_ + ".manifest.json");
    std::ofstream out(where);
    if (!out) throw DataError("cannot write manifest " + where.string());
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  const Options& o_;
  FlatConfig cfg_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::vector<chem::MoleculeRecord> load_corpus(Run& run, const std::string& path) {
  require(path, "--corpus");
  run.input(path);
  auto records = chem::read_corpus(fs::path(path));
  chem::validate_corpus(records);
  return records;
}

std::unique_ptr<MolLlama> load_or_build(Run& run, const std::string& init) {
  if (!init.empty()) {
    run.input(init);
    return MolLlama::load(init);
  }
  ModelConfig mc = ModelConfig::from_flat(run.config());
  return std::make_unique<MolLlama>(mc);
}

// Offline stand-in model for the eval commands ("--model mock:").
std::string mock_answer(const eval::ModelQuery& q) {
  const std::string& smiles = q.molecules.empty() ? std::string() : q.molecules.back().smiles;
  const std::uint64_t h = mix64(fnv1a(smiles));
  const std::string& system = q.chat.messages.empty() ? std::string() : q.chat.messages.front().text;
  if (system.find("drug discovery assistant") != std::string::npos) {
    const std::string label = h % 2 == 0 ? "High permeability." : "Low-to-moderate permeability.";
    if (!q.assistant_prefix.empty()) return label;
    if (h % 5 == 0) return "The molecule has a balanced polarity profile.";
    return "Considering lipophilicity and size of " + smiles + ".\nFinal answer: " + label;
  }
  if (!q.chat.messages.empty() && q.chat.messages.back().text.find("Answer with the letter") != std::string::npos) {
    return std::string(1, static_cast<char>('A' + h % 4));
  }
  return "The molecule " + smiles + " is described by its structure.";
}

std::unique_ptr<eval::ResponseModel> make_responder(Run& run, const Options& o,
                                                    std::unique_ptr<MolLlama>& holder) {
  require(o.model, "--model");
  if (o.model.rfind("mock:", 0) == 0) return std::make_unique<eval::ScriptedResponder>(mock_answer);
  run.input(o.model);
  holder = MolLlama::load(o.model);
  DecodeOptions d;
  d.max_new = o.max_new;
  d.greedy = o.temperature <= 0.0;
  if (!d.greedy) d.temperature = o.temperature;
  d.seed = run.seed();
  return std::make_unique<eval::MolLlamaResponder>(*holder, d);
}

int cmd_parse(const Options& o) {
  Run run("parse", o);
  std::vector<std::pair<std::string, std::string>> inputs;
  if (!o.smiles.empty()) inputs.push_back({"", o.smiles});
  if (!o.corpus.empty()) {
    for (const auto& r : load_corpus(run, o.corpus)) inputs.push_back({r.id, r.smiles});
  }
  if (inputs.empty()) throw UsageError("parse needs --smiles or --corpus");
  std::ostringstream text;
  for (const auto& [id, smiles] : inputs) {
    const chem::MolGraph g = chem::parse_smiles(smiles);
    if (!id.empty()) text << id << '\t';
    text << "atoms " << g.atom_count() << " bonds " << g.bonds().size() << " formula " << g.formula()
         << " smiles " << chem::write_smiles(g) << '\n';
  }
  std::cout << text.str();
  if (!o.out.empty()) {
    write_text(o.out, text.str());
    run.output(o.out);
  }
  run.write_manifest();
  return 0;
}

int cmd_fingerprint(const Options& o) {
  Run run("fingerprint", o);
  require(o.smiles, "--smiles");
  const auto fp = chem::morgan_fingerprint(chem::parse_smiles(o.smiles), o.radius, o.nbits);
  json j{{"smiles", o.smiles}, {"radius", o.radius}, {"nbits", o.nbits}, {"on_bits", fp.on_bits()}};
  std::cout << j.dump() << '\n';
  if (!o.out.empty()) {
    write_text(o.out, j.dump() + "\n");
    run.output(o.out);
  }
  run.write_manifest();
  return 0;
}

int cmd_select(const Options& o) {
  Run run("select-reps", o);
  const auto records = load_corpus(run, o.corpus);
  if (o.k <= 0) throw UsageError("--k must be positive");
  const auto reps = eval::select_representatives(records, o.k, run.seed());
  std::ostringstream text;
  chem::write_corpus(text, reps);
  if (o.out.empty()) {
    std::cout << text.str();
  } else {
    write_text(o.out, text.str());
    run.output(o.out);
  }
  run.write_manifest();
  return 0;
}

std::vector<DataType> requested_types(const std::string& type) {
  if (type == "all") {
    return {DataType::kStructural, DataType::kChemFeature, DataType::kBioFeature, DataType::kConversation};
  }
  try {
    return {data_type_from_name(type)};
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

int cmd_datagen(const Options& o) {
  Run run("datagen", o);
  require(o.out, "--out");
  auto records = load_corpus(run, o.corpus);
  if (o.limit > 0 && static_cast<std::size_t>(o.limit) < records.size()) {
    // Seeded uniform subset, kept in corpus order.
    Rng rng(run.seed());
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    idx.resize(static_cast<std::size_t>(o.limit));
    std::sort(idx.begin(), idx.end());
    std::vector<chem::MoleculeRecord> subset;
    for (std::size_t i : idx) subset.push_back(records[i]);
    records = std::move(subset);
  }
  const auto client = run.client();
  datagen::GenerationOptions gen;
  gen.temperature = run.config().get_double("provider.temperature", 1.0);
  gen.ledger = o.ledger.empty() ? fs::path(o.out + ".ledger.jsonl") : fs::path(o.ledger);
  std::vector<InstructionSample> all;
  std::size_t failed = 0, malformed = 0;
  for (DataType t : requested_types(o.type)) {
    for (auto& s : datagen::generate_samples(client, records, t, gen)) {
      failed += !s.error.empty();
      malformed += s.malformed;
      all.push_back(std::move(s));
    }
  }
  datagen::write_raw_samples(all, o.out);
  run.output(o.out);
  run.write_manifest();
  std::cout << json{{"generated", all.size()}, {"failed", failed}, {"malformed", malformed}}.dump() << '\n';
  return failed > 0 ? kRemote : 0;
}

int cmd_filter(const Options& o) {
  Run run("filter", o);
  require(o.samples, "--samples");
  require(o.out, "--out");
  const auto records = load_corpus(run, o.corpus);
  run.input(o.samples);
  const auto samples = datagen::read_raw_samples(o.samples);
  datagen::FilterOptions fo;
  fo.temperature = run.config().get_double("provider.judge_temperature", 0.0);
  const auto result = datagen::judge_filter(run.client(), samples, records, fo);
  datagen::write_raw_samples(result.kept, o.out);
  const std::string dropped_path = o.dropped.empty() ? o.out + ".dropped.jsonl" : o.dropped;
  std::ofstream dropped(dropped_path);
  if (!dropped) throw DataError("cannot write " + dropped_path);
  std::size_t judge_failures = 0;
  for (const auto& d : result.dropped) {
    json j = json::parse(datagen::raw_sample_line(d.sample));
    j["reason"] = d.reason;
    dropped << j.dump() << '\n';
    judge_failures += d.reason.rfind("judge failed", 0) == 0;
  }
  run.output(o.out);
  run.output(dropped_path);
  run.write_manifest();
  std::cout << json{{"input", samples.size()},
                    {"kept", result.kept.size()},
                    {"dropped", result.dropped.size()},
                    {"unscored", result.unscored}}
                   .dump()
            << '\n';
  return judge_failures > 0 ? kRemote : 0;
}

int cmd_assemble(const Options& o) {
  Run run("assemble", o);
  require(o.samples, "--samples");
  require(o.out, "--out");
  run.input(o.samples);
  const auto kept = datagen::read_raw_samples(o.samples);
  const auto report = datagen::assemble_dataset(kept, run.seed(), fs::path(o.out));
  json counts = json::object();
  for (const auto& [t, n] : report.counts) counts[std::string(data_type_name(t))] = n;
  run.output(o.out);
  run.write_manifest();
  std::cout << json{{"total", report.total}, {"rejected", report.rejected}, {"counts", counts}}.dump() << '\n';
  return 0;
}

int finish_training(Run& run, const Options& o, MolLlama& model, const TrainResult& r) {
  model.save(o.out);
  run.output(o.out);
  run.write_manifest();
  json j{{"steps", r.total_steps}, {"final_loss", r.final_loss}, {"skipped", r.skipped}};
  if (r.retrieval_r1 > 0.0 || r.generation > 0.0) {
    j["contrastive"] = r.contrastive;
    j["matching"] = r.matching;
    j["generation"] = r.generation;
    j["retrieval_r1"] = r.retrieval_r1;
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_train(const Options& o, Stage stage) {
  Run run(std::string(stage == Stage::kStage1 ? "train-stage1" : stage == Stage::kStage2 ? "train-stage2" : "finetune-qa"), o);
  require(o.out, "--out");
  const auto records = load_corpus(run, o.corpus);
  auto model = load_or_build(run, o.init);
  TrainConfig tc = TrainConfig::from_flat(run.config(), stage);
  const std::string metrics_path = o.metrics.empty() ? o.out + ".metrics.jsonl" : o.metrics;
  std::ofstream metrics(metrics_path);
  if (!metrics) throw DataError("cannot write " + metrics_path);
  run.output(metrics_path);
  const MetricsSink sink = jsonl_sink(metrics);
  TrainResult r;
  if (stage == Stage::kStage1) {
    r = run_stage1(*model, prepare_stage1(*model, records), tc, sink);
  } else if (stage == Stage::kStage2) {
    require(o.dataset, "--dataset");
    run.input(o.dataset);
    r = run_stage2(*model, prepare_instruction_data(*model, read_samples(o.dataset), records), tc, sink);
  } else {
    require(o.mcq, "--mcq");
    run.input(o.mcq);
    r = finetune_qa(*model, prepare_mcq_data(*model, read_mcq(o.mcq), records), tc, sink);
  }
  return finish_training(run, o, *model, r);
}

json scores_json(const eval::JudgeScores& s) {
  return {{"helpfulness", s.helpfulness}, {"relevance", s.relevance}, {"accuracy", s.accuracy},
          {"level_of_detail", s.detail}, {"overall", s.overall}};
}

int cmd_eval_judge(const Options& o) {
  Run run("eval-judge", o);
  require(o.out, "--out");
  auto records = load_corpus(run, o.corpus);
  if (o.k > 0) records = eval::select_representatives(records, o.k, run.seed());
  std::unique_ptr<MolLlama> holder;
  auto candidate = make_responder(run, o, holder);
  const auto client = run.client();
  eval::JudgeOptions jo;
  jo.repeats = run.config().get_int("judge.repeats", 1);
  std::vector<std::string> levels;
  if (o.level == "all") levels = {"structural", "chemical", "biological"};
  else if (o.level == "structural" || o.level == "chemical" || o.level == "biological") levels = {o.level};
  else throw UsageError("--level must be structural, chemical, biological or all");

  std::ofstream out(o.out);
  if (!out) throw DataError("cannot write " + o.out);
  json summary = json::object();
  for (const auto& level : levels) {
    std::vector<eval::JudgeScores> cand, ref;
    for (const auto& rec : records) {
      const std::string question = eval::eval_question(level);
      eval::ModelQuery q;
      q.chat = single_molecule_chat(prompts::conversation_system(), question);
      q.molecules = {rec};
      const std::string a = candidate->generate(q);
      const std::string b = client.complete(
          {{{Role::kSystem, prompts::conversation_system()}, {Role::kUser, "Molecule SMILES: " + rec.smiles + "\n" + question}},
           run.config().get_double("provider.temperature", 1.0)});
      const auto v = eval::judge_pairwise(client, rec, level, a.empty() ? std::string("(empty)") : a,
                                          b.empty() ? std::string("(empty)") : b, jo);
      cand.push_back(v.a);
      ref.push_back(v.b);
      out << json{{"item_id", rec.id}, {"mode", level}, {"scores", {{"candidate", scores_json(v.a)}, {"reference", scores_json(v.b)}}}}.dump()
          << '\n';
    }
    summary[level] = scores_json(eval::relative_score(cand, ref));
  }
  run.output(o.out);
  write_text(o.out + ".summary.json", summary.dump(2) + "\n");
  run.output(o.out + ".summary.json");
  run.write_manifest();
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_eval_pampa(const Options& o) {
  Run run("eval-pampa", o);
  require(o.items, "--items");
  run.input(o.items);
  const auto items = eval::read_pampa(o.items);
  eval::PampaMode mode;
  try {
    mode = eval::pampa_mode_from_name(o.mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::vector<eval::PampaItem> pool;
  if (mode == eval::PampaMode::kFewShot) {
    require(o.examples, "--examples");
    if (o.shots <= 0) throw UsageError("few_shot mode needs --shots > 0");
    run.input(o.examples);
    pool = eval::read_pampa(o.examples);
  }
  std::unique_ptr<MolLlama> holder;
  auto model = make_responder(run, o, holder);

  std::map<std::string, std::string> references;
  if (!o.reference.empty()) {
    run.input(o.reference);
    std::ifstream in(o.reference);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const json j = json::parse(line);
      references[j.at("id").get<std::string>()] = j.at("response").get<std::string>();
    }
  }

  std::ostringstream lines;
  std::vector<eval::PampaItem> done;
  std::vector<eval::ReasoningScores> cand, ref;
  std::optional<datagen::LLMClient> judge;
  if (!references.empty()) judge = run.client();
  for (const auto& item : items) {
    std::vector<eval::PampaItem> examples;
    for (const auto& ex : pool) {
      if (static_cast<int>(examples.size()) == o.shots) break;
      if (ex.id != item.id) examples.push_back(ex);
    }
    auto p = eval::pampa_predict(*model, item, mode, examples);
    json j{{"item_id", p.id},
           {"mode", o.mode},
           {"prediction", p.prediction ? json(std::string(eval::pampa_label_name(*p.prediction))) : json(nullptr)},
           {"label", std::string(eval::pampa_label_name(p.label))},
           {"retried", p.retried}};
    if (judge && references.count(item.id) && !p.response_text.empty()) {
      const auto v = eval::judge_reasoning(*judge, item.molecule, p.response_text, references[item.id]);
      cand.push_back(v.a);
      ref.push_back(v.b);
      j["scores"] = {{"fidelity", v.a.fidelity}, {"helpfulness", v.a.helpfulness}};
    }
    lines << j.dump() << '\n';
    done.push_back(std::move(p));
  }
  const auto m = eval::pampa_metrics(done);
  json summary{{"mode", o.mode},
               {"total", m.total},
               {"predicted", m.predicted},
               {"nonconforming", m.nonconforming},
               {"accuracy", m.accuracy},
               {"ratio_high", m.ratio_high},
               {"ratio_low_to_moderate", m.ratio_low},
               {"minority_label", std::string(eval::pampa_label_name(m.minority))},
               {"label_ratio", m.label_ratio},
               {"all_same_label", m.all_same},
               {"not_applicable", m.not_applicable}};
  if (!cand.empty()) {
    const auto rel = eval::relative_score(cand, ref);
    summary["relative_fidelity"] = rel.fidelity;
    summary["relative_helpfulness"] = rel.helpfulness;
  }
  if (!o.out.empty()) {
    write_text(o.out, lines.str());
    write_text(o.out + ".summary.json", summary.dump(2) + "\n");
    run.output(o.out);
    run.output(o.out + ".summary.json");
  }
  run.write_manifest();
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_eval_mqa(const Options& o) {
  Run run("eval-mqa", o);
  require(o.mcq, "--mcq");
  const auto records = load_corpus(run, o.corpus);
  run.input(o.mcq);
  const auto items = read_mcq(o.mcq);
  std::unique_ptr<MolLlama> holder;
  auto model = make_responder(run, o, holder);
  const auto report = eval::moleculeqa_eval(*model, items, records);
  json cats = json::object();
  for (const auto& [c, s] : report.categories) {
    cats[std::string(mcq_category_name(c))] = {{"accuracy", s.accuracy()}, {"correct", s.correct}, {"total", s.total}};
  }
  json summary{{"accuracy", report.overall.accuracy()}, {"total", report.overall.total}, {"categories", cats}};
  if (!o.out.empty()) {
    std::ostringstream lines;
    for (const auto& p : report.predictions) {
      lines << json{{"item_id", p.id},
                    {"mode", "mcq"},
                    {"prediction", p.predicted ? json(std::string(1, *p.predicted)) : json(nullptr)},
                    {"label", std::string(1, p.gold)}}
                   .dump()
            << '\n';
    }
    write_text(o.out, lines.str());
    write_text(o.out + ".summary.json", summary.dump(2) + "\n");
    run.output(o.out);
    run.output(o.out + ".summary.json");
  }
  run.write_manifest();
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_generate(const Options& o) {
  Run run("generate", o);
  require(o.smiles, "--smiles");
  require(o.prompt, "--prompt");
  std::unique_ptr<MolLlama> holder;
  auto model = make_responder(run, o, holder);
  chem::MoleculeRecord rec;
  rec.id = "input";
  rec.smiles = o.smiles;
  chem::parse_smiles(o.smiles);  // Reject bad input before decoding.
  eval::ModelQuery q;
  q.chat = single_molecule_chat(o.system.empty() ? prompts::conversation_system() : o.system, o.prompt);
  q.molecules = {rec};
  const std::string text = model->generate(q);
  std::cout << text << '\n';
  if (!o.out.empty()) {
    write_text(o.out, text + "\n");
    run.output(o.out);
  }
  run.write_manifest();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molllama: molecular instruction-tuning toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Flat key=value config file");
    sub->add_option("--set", o.sets, "Override a config key (key=value)");
    sub->add_option("--seed", o.seed, "Seed for every random choice");
    sub->add_option("--out", o.out, "Primary output path");
    sub->add_option("--manifest", o.manifest, "Manifest path (default: next to --out)");
  };
  auto provider = [&](CLI::App* sub) {
    sub->add_option("--provider", o.provider, "mock: or a chat-completions URL");
    sub->add_option("--provider-model", o.provider_model, "Remote model name");
    sub->add_option("--max-parallel", o.max_parallel, "Concurrent requests");
  };
  auto responder = [&](CLI::App* sub) {
    sub->add_option("--model", o.model, "Checkpoint path or mock:");
    sub->add_option("--max-new", o.max_new, "Maximum generated tokens");
    sub->add_option("--temperature", o.temperature, "Sampling temperature (0 = greedy)");
  };

  auto* parse = app.add_subcommand("parse", "Parse SMILES and print atom/bond counts");
  common(parse);
  parse->add_option("--smiles", o.smiles, "SMILES string");
  parse->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");

  auto* fp = app.add_subcommand("fingerprint", "Morgan fingerprint of a SMILES string");
  common(fp);
  fp->add_option("--smiles", o.smiles, "SMILES string");
  fp->add_option("--radius", o.radius, "Morgan radius");
  fp->add_option("--nbits", o.nbits, "Fingerprint length in bits");

  auto* sel = app.add_subcommand("select-reps", "k-means representative molecules");
  common(sel);
  sel->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");
  sel->add_option("--k", o.k, "Number of representatives");

  auto* gen = app.add_subcommand("datagen", "Generate instruction samples");
  common(gen);
  provider(gen);
  gen->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");
  gen->add_option("--type", o.type, "structural|chem_feature|bio_feature|conversation|all");
  gen->add_option("--limit", o.limit, "Seeded random subset size");
  gen->add_option("--ledger", o.ledger, "Job ledger (default: <out>.ledger.jsonl)");

  auto* flt = app.add_subcommand("filter", "Judge-filter generated samples");
  common(flt);
  provider(flt);
  flt->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");
  flt->add_option("--samples", o.samples, "Generated samples (JSONL)");
  flt->add_option("--dropped", o.dropped, "Dropped samples (default: <out>.dropped.jsonl)");

  auto* asm_ = app.add_subcommand("assemble", "Assemble the training dataset");
  common(asm_);
  asm_->add_option("--samples", o.samples, "Kept samples (JSONL)");

  auto* t1 = app.add_subcommand("train-stage1", "Stage-1 representation learning");
  auto* t2 = app.add_subcommand("train-stage2", "Stage-2 instruction tuning");
  auto* fq = app.add_subcommand("finetune-qa", "Multiple-choice fine-tuning");
  for (auto* sub : {t1, t2, fq}) {
    common(sub);
    sub->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");
    sub->add_option("--init", o.init, "Starting checkpoint");
    sub->add_option("--metrics", o.metrics, "Metrics log (default: <out>.metrics.jsonl)");
  }
  t2->add_option("--dataset", o.dataset, "Assembled instruction dataset (JSONL)");
  fq->add_option("--mcq", o.mcq, "Multiple-choice items (JSONL)");

  auto* ej = app.add_subcommand("eval-judge", "Pairwise judge evaluation against a reference model");
  common(ej);
  provider(ej);
  responder(ej);
  ej->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");
  ej->add_option("--k", o.k, "Representatives to evaluate (0 = all)");
  ej->add_option("--level", o.level, "structural|chemical|biological|all");

  auto* ep = app.add_subcommand("eval-pampa", "PAMPA permeability harness");
  common(ep);
  provider(ep);
  responder(ep);
  ep->add_option("--items", o.items, "PAMPA items (JSONL)");
  ep->add_option("--mode", o.mode, "default|cot|task_info|few_shot");
  ep->add_option("--examples", o.examples, "Labelled pool for few_shot");
  ep->add_option("--shots", o.shots, "Number of few-shot examples");
  ep->add_option("--reference", o.reference, "Reference responses {id, response} for the reasoning judge");

  auto* em = app.add_subcommand("eval-mqa", "Multiple-choice accuracy");
  common(em);
  responder(em);
  em->add_option("--corpus", o.corpus, "Molecule corpus (JSONL)");
  em->add_option("--mcq", o.mcq, "Multiple-choice items (JSONL)");

  auto* g = app.add_subcommand("generate", "Answer a prompt about a molecule");
  common(g);
  responder(g);
  g->add_option("--smiles", o.smiles, "SMILES string");
  g->add_option("--prompt", o.prompt, "User prompt");
  g->add_option("--system", o.system, "System prompt override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*parse) return cmd_parse(o);
    if (*fp) return cmd_fingerprint(o);
    if (*sel) return cmd_select(o);
    if (*gen) return cmd_datagen(o);
    if (*flt) return cmd_filter(o);
    if (*asm_) return cmd_assemble(o);
    if (*t1) return cmd_train(o, Stage::kStage1);
    if (*t2) return cmd_train(o, Stage::kStage2);
    if (*fq) return cmd_train(o, Stage::kFinetuneQa);
    if (*ej) return cmd_eval_judge(o);
    if (*ep) return cmd_eval_pampa(o);
    if (*em) return cmd_eval_mqa(o);
    if (*g) return cmd_generate(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const datagen::ProviderError& e) {
    std::cerr << "remote error: " << e.what() << '\n';
    return kRemote;
  } catch (const eval::JudgeError& e) {
    std::cerr << "remote error: " << e.what() << '\n';
    return kRemote;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  std::cerr << app.help();
  return kUsage;
}
