#include "molllama/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "molllama/chem/conformer.hpp"
#include "molllama/chem/corpus.hpp"
#include "molllama/chem/smiles.hpp"
#include "molllama/hash.hpp"

namespace molllama {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'O', 'L', 'L', 'A', 'M', 'A', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in) {
  const auto n = take<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw DataError("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void ModelConfig::finalize() {
  blending.hidden_dim = encoder.hidden_dim;
  qformer.hidden_dim = encoder.hidden_dim;
  qformer.vocab_size = tok::kVocabSize;
  lm.vocab_size = tok::kVocabSize;
  encoder.validate();
  blending.validate();
  qformer.validate();
  lm.validate();
  if (proj_dim <= 0) throw std::invalid_argument("proj_dim must be positive");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (lora.rank <= 0 || lora.dropout < 0.0 || lora.dropout >= 1.0) throw std::invalid_argument("invalid LoRA config");
}

ModelConfig ModelConfig::from_flat(const FlatConfig& f) {
  ModelConfig c;
  c.encoder.hidden_dim = f.get_int("encoder.hidden_dim", c.encoder.hidden_dim);
  c.encoder.mp_layers = f.get_int("encoder.mp_layers", c.encoder.mp_layers);
  c.encoder.attn_layers = f.get_int("encoder.attn_layers", c.encoder.attn_layers);
  c.encoder.heads = f.get_int("encoder.heads", c.encoder.heads);
  c.encoder.rbf_bins = f.get_int("encoder.rbf_bins", c.encoder.rbf_bins);
  c.encoder.rbf_cutoff = f.get_double("encoder.rbf_cutoff", c.encoder.rbf_cutoff);
  c.blending.blocks = f.get_int("blending.blocks", c.blending.blocks);
  c.blending.heads = f.get_int("blending.heads", c.blending.heads);
  c.qformer.layers = f.get_int("qformer.layers", c.qformer.layers);
  c.qformer.heads = f.get_int("qformer.heads", c.qformer.heads);
  c.qformer.n_queries = f.get_int("qformer.n_queries", c.qformer.n_queries);
  c.qformer.ffn_mult = f.get_int("qformer.ffn_mult", c.qformer.ffn_mult);
  c.qformer.max_text_len = f.get_int("qformer.max_text_len", c.qformer.max_text_len);
  c.qformer.shared_self_attention = f.get_bool("qformer.shared_self_attention", c.qformer.shared_self_attention);
  c.lm.n_layers = f.get_int("lm.layers", c.lm.n_layers);
  c.lm.hidden_dim = f.get_int("lm.hidden_dim", c.lm.hidden_dim);
  c.lm.heads = f.get_int("lm.heads", c.lm.heads);
  c.lm.max_seq_len = f.get_int("lm.max_seq_len", c.lm.max_seq_len);
  c.lm.ffn_mult = f.get_int("lm.ffn_mult", c.lm.ffn_mult);
  c.lora.rank = f.get_int("lora.rank", c.lora.rank);
  c.lora.alpha = f.get_double("lora.alpha", c.lora.alpha);
  c.lora.dropout = f.get_double("lora.dropout", c.lora.dropout);
  c.proj_dim = f.get_int("model.proj_dim", c.proj_dim);
  c.temperature = f.get_double("model.temperature", c.temperature);
  c.seed = static_cast<std::uint64_t>(f.get_int64("model.seed", static_cast<long long>(c.seed)));
  c.encoder.seed = c.seed;
  c.finalize();
  return c;
}

void ModelConfig::to_flat(FlatConfig& f) const {
  const json j = json::parse(to_json());
  for (const auto& [key, value] : j.items()) f.set(key, value.is_string() ? value.get<std::string>() : value.dump());
}

std::string ModelConfig::to_json() const {
  json j;
  j["encoder.hidden_dim"] = encoder.hidden_dim;
  j["encoder.mp_layers"] = encoder.mp_layers;
  j["encoder.attn_layers"] = encoder.attn_layers;
  j["encoder.heads"] = encoder.heads;
  j["encoder.rbf_bins"] = encoder.rbf_bins;
  j["encoder.rbf_cutoff"] = encoder.rbf_cutoff;
  j["blending.blocks"] = blending.blocks;
  j["blending.heads"] = blending.heads;
  j["qformer.layers"] = qformer.layers;
  j["qformer.heads"] = qformer.heads;
  j["qformer.n_queries"] = qformer.n_queries;
  j["qformer.ffn_mult"] = qformer.ffn_mult;
  j["qformer.max_text_len"] = qformer.max_text_len;
  j["qformer.shared_self_attention"] = qformer.shared_self_attention;
  j["lm.layers"] = lm.n_layers;
  j["lm.hidden_dim"] = lm.hidden_dim;
  j["lm.heads"] = lm.heads;
  j["lm.max_seq_len"] = lm.max_seq_len;
  j["lm.ffn_mult"] = lm.ffn_mult;
  j["lora.rank"] = lora.rank;
  j["lora.alpha"] = lora.alpha;
  j["lora.dropout"] = lora.dropout;
  j["model.proj_dim"] = proj_dim;
  j["model.temperature"] = temperature;
  j["model.seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model config JSON: ") + e.what());
  }
  FlatConfig f;
  for (const auto& [key, value] : j.items()) {
    f.set(key, value.is_boolean() ? (value.get<bool>() ? "true" : "false") : value.dump());
  }
  return from_flat(f);
}

MolLlama::MolLlama(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.encoder.seed = cfg_.seed;
  cfg_.finalize();
  enc2d_ = Encoder2D(store_, cfg_.encoder);
  enc3d_ = Encoder3D(store_, cfg_.encoder);
  Rng rng(mix64(cfg_.seed ^ 0x6d6f6c));
  blending_ = BlendingModule(store_, cfg_.blending, rng);
  qformer_ = QFormer(store_, cfg_.qformer, rng);
  heads_ = Stage1Heads::create(store_, cfg_.encoder.hidden_dim, cfg_.proj_dim, rng);
  Rng lm_rng(mix64(cfg_.seed ^ 0x6c6d));
  lm_ = DecoderLM(store_, cfg_.lm, cfg_.lora, lm_rng);
  query_proj_ = Linear::create(store_, groups::kQueryProjection, "query_proj", cfg_.encoder.hidden_dim,
                               cfg_.lm.hidden_dim, rng);
  store_.set_trainable({});
}

MoleculeInput MolLlama::encode(const chem::MoleculeRecord& record) const {
  chem::MolGraph graph = chem::parse_smiles(record.smiles);
  const chem::Conformer conf = chem::conformer_for(record, graph, cfg_.seed);
  return encode(graph, conf, record.id);
}

MoleculeInput MolLlama::encode(const chem::MolGraph& graph, const chem::Conformer& conf, std::string id) const {
  MoleculeInput in;
  in.id = std::move(id);
  in.graph = graph;
  in.seq2d = enc2d_(graph);
  in.seq3d = enc3d_(graph, conf);
  return in;
}

ag::Tensor MolLlama::unified(const MoleculeInput& mol, const ForwardContext& ctx) const {
  return blending_(mol.seq2d, mol.seq3d, ctx);
}

ag::Tensor MolLlama::lm_queries(const MoleculeInput& mol, const ForwardContext& ctx) const {
  return query_proj_(qformer_.embed(unified(mol, ctx), ctx));
}

void MolLlama::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, cfg_.to_json());
  std::map<std::string, std::vector<const Parameter*>> sections;
  for (const Parameter& p : store_.params()) sections[p.group].push_back(&p);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [tag, params] : sections) {
    put_string(out, tag);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
      const ag::Matrix& m = p->tensor.value();
      put_string(out, p->name);
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::unique_ptr<MolLlama> MolLlama::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError(path.string() + " is not a checkpoint");
  const auto version = take<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  auto model = std::make_unique<MolLlama>(ModelConfig::from_json(take_string(in)));
  std::size_t loaded = 0;
  const auto n_sections = take<std::uint32_t>(in);
  for (std::uint32_t s = 0; s < n_sections; ++s) {
    const std::string tag = take_string(in);
    const auto n = take<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < n; ++k) {
      const std::string name = take_string(in);
      const auto rows = take<std::uint64_t>(in);
      const auto cols = take<std::uint64_t>(in);
      Parameter* target = nullptr;
      for (Parameter& p : model->store_.params()) {
        if (p.name == name) target = &p;
      }
      if (target == nullptr || target->group != tag) throw DataError("checkpoint has unknown parameter " + name);
      ag::Matrix& m = target->tensor.mutable_value();
      if (static_cast<std::uint64_t>(m.rows()) != rows || static_cast<std::uint64_t>(m.cols()) != cols) {
        throw DataError("checkpoint shape mismatch for " + name);
      }
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw DataError("checkpoint truncated");
      ++loaded;
    }
  }
  if (loaded != model->store_.params().size()) throw DataError("checkpoint is missing parameters");
  return model;
}

}  // namespace molllama
