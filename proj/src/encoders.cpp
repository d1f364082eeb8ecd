#include "molllama/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "molllama/hash.hpp"

namespace molllama {

namespace {

constexpr int kChargeRange = 2;  // Charges clamp to [-2, 2].

int element_index(const std::string& symbol) {
  const auto& elements = encoder_elements();
  const auto it = std::find(elements.begin(), elements.end(), symbol);
  if (it == elements.end()) throw std::invalid_argument("encoder: unsupported element '" + symbol + "'");
  return static_cast<int>(it - elements.begin());
}

bool row_less(const ag::RowVector& a, const ag::RowVector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

ag::RowVector canonical_sum(std::vector<ag::RowVector> rows, Eigen::Index dim) {
  std::sort(rows.begin(), rows.end(), row_less);
  ag::RowVector total = ag::RowVector::Zero(dim);
  for (const auto& r : rows) total += r;
  return total;
}

ag::RowVector row_times(const ag::RowVector& x, const ag::Matrix& w) {
  ag::RowVector out(w.cols());
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < w.rows(); ++r) acc += x[r] * w(r, c);
    out[c] = acc;
  }
  return out;
}

std::vector<TokenRole> roles_for(std::size_t atoms) {
  std::vector<TokenRole> roles(atoms + 1, TokenRole::kNode);
  roles[0] = TokenRole::kGraph;
  return roles;
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden_dim <= 0 || heads <= 0 || hidden_dim % heads != 0) {
    throw std::invalid_argument("encoder hidden_dim must be a positive multiple of heads");
  }
  if (mp_layers < 1 || attn_layers < 1 || rbf_bins < 1 || rbf_cutoff <= 0.0) {
    throw std::invalid_argument("encoder layer counts and rbf settings must be positive");
  }
}

const std::vector<std::string>& encoder_elements() {
  static const std::vector<std::string> kElements = {"H",  "B",  "C",  "N",  "O",  "F",  "Si", "P",
                                                     "S",  "Cl", "Se", "Br", "I",  "Na", "K",  "Li",
                                                     "Mg", "Ca", "Zn", "Fe", "Cu", "Al", "As", "Sn"};
  return kElements;
}

Encoder2D::Encoder2D(ParameterStore& store, const EncoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  Rng rng(mix64(cfg.seed ^ 0x2d));
  const auto g = groups::kEncoder2d;
  const Eigen::Index d = cfg.hidden_dim;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  element_emb_ = store.normal(g, "enc2d.element", static_cast<Eigen::Index>(encoder_elements().size()), d, 1.0, rng);
  charge_emb_ = store.normal(g, "enc2d.charge", 2 * kChargeRange + 1, d, 0.5, rng);
  aromatic_emb_ = store.normal(g, "enc2d.aromatic", 2, d, 0.5, rng);
  for (int l = 0; l < cfg.mp_layers; ++l) {
    const std::string p = "enc2d.mp" + std::to_string(l);
    self_w_.push_back(store.normal(g, p + ".self", d, d, w_std, rng));
    self_b_.push_back(store.zeros(g, p + ".bias", 1, d));
    std::vector<ag::Tensor> per_order;
    for (int o = 1; o <= 4; ++o) {
      per_order.push_back(store.normal(g, p + ".bond" + std::to_string(o), d, d, 0.5 * w_std, rng));
    }
    bond_w_.push_back(std::move(per_order));
  }
  graph_w_ = store.normal(g, "enc2d.graph.weight", d, d, w_std, rng);
  graph_b_ = store.zeros(g, "enc2d.graph.bias", 1, d);
}

TokenSequence Encoder2D::operator()(const chem::MolGraph& graph) const {
  if (graph.empty()) throw std::invalid_argument("encode_2d: empty graph");
  const Eigen::Index d = cfg_.hidden_dim;
  const auto n = static_cast<Eigen::Index>(graph.atom_count());
  ag::Matrix h(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& atom = graph.atoms()[i];
    const int charge = std::clamp(atom.formal_charge, -kChargeRange, kChargeRange) + kChargeRange;
    h.row(i) = element_emb_.value().row(element_index(atom.element)) + charge_emb_.value().row(charge) +
               aromatic_emb_.value().row(atom.aromatic ? 1 : 0);
  }
  for (int l = 0; l < cfg_.mp_layers; ++l) {
    ag::Matrix next(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<ag::RowVector> messages;
      for (const auto& nb : graph.neighbors(static_cast<int>(i))) {
        const int order = static_cast<int>(graph.bonds()[nb.bond].order);
        messages.push_back(row_times(h.row(nb.atom), bond_w_[l][order - 1].value()));
      }
      const ag::RowVector pre =
          row_times(h.row(i), self_w_[l].value()) + canonical_sum(std::move(messages), d) + self_b_[l].value();
      next.row(i) = pre.array().tanh().matrix();
    }
    h = std::move(next);
  }
  std::vector<ag::RowVector> node_rows;
  for (Eigen::Index i = 0; i < n; ++i) node_rows.push_back(h.row(i));
  const ag::RowVector mean = canonical_sum(std::move(node_rows), d) / static_cast<double>(n);

  TokenSequence out;
  out.modality = Modality::k2d;
  out.roles = roles_for(graph.atom_count());
  out.embeddings.resize(n + 1, d);
  out.embeddings.row(0) = row_times(mean, graph_w_.value()) + graph_b_.value();
  out.embeddings.bottomRows(n) = h;
  return out;
}

Encoder3D::Encoder3D(ParameterStore& store, const EncoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  Rng rng(mix64(cfg.seed ^ 0x3d));
  const auto g = groups::kEncoder3d;
  const Eigen::Index d = cfg.hidden_dim;
  element_emb_ = store.normal(g, "enc3d.element", static_cast<Eigen::Index>(encoder_elements().size()), d, 1.0, rng);
  rbf_w_ = store.normal(g, "enc3d.rbf.weight", cfg.rbf_bins, cfg.heads, 1.0, rng);
  rbf_b_ = store.zeros(g, "enc3d.rbf.bias", 1, cfg.heads);
  for (int l = 0; l < cfg.attn_layers; ++l) {
    const std::string p = "enc3d.layer" + std::to_string(l);
    blocks_.push_back({LayerNorm::create(store, g, p + ".ln1", d), LayerNorm::create(store, g, p + ".ln2", d),
                       AttentionLayer::create(store, g, p + ".attn", d, cfg.heads, rng),
                       FeedForward::create(store, g, p + ".ffn", d, 2 * d, rng)});
  }
  final_ln_ = LayerNorm::create(store, g, "enc3d.final_ln", d);
  graph_proj_ = Linear::create(store, g, "enc3d.graph", d, d, rng);
}

std::vector<ag::Matrix> Encoder3D::distance_bias(const chem::Conformer& conf) const {
  const auto n = static_cast<Eigen::Index>(conf.size());
  const int bins = cfg_.rbf_bins;
  const double spacing = bins > 1 ? cfg_.rbf_cutoff / (bins - 1) : cfg_.rbf_cutoff;
  const double gamma = 1.0 / (spacing * spacing);
  std::vector<ag::Matrix> bias(cfg_.heads, ag::Matrix::Zero(n, n));
  const ag::Matrix& w = rbf_w_.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& a = conf.positions[i];
      const auto& b = conf.positions[j];
      const double dist = std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
      for (int h = 0; h < cfg_.heads; ++h) {
        double acc = rbf_b_.value()(0, h);
        for (int k = 0; k < bins; ++k) {
          const double delta = dist - spacing * k;
          acc += std::exp(-gamma * delta * delta) * w(k, h);
        }
        bias[h](i, j) = acc;
      }
    }
  }
  return bias;
}

TokenSequence Encoder3D::operator()(const chem::MolGraph& graph, const chem::Conformer& conf) const {
  if (graph.empty()) throw std::invalid_argument("encode_3d: empty graph");
  if (conf.size() != graph.atom_count()) {
    throw std::invalid_argument("encode_3d: conformer has " + std::to_string(conf.size()) + " positions for " +
                                std::to_string(graph.atom_count()) + " atoms");
  }
  ag::NoGradGuard no_grad;
  const auto n = static_cast<Eigen::Index>(graph.atom_count());
  ag::Matrix h0(n, cfg_.hidden_dim);
  for (Eigen::Index i = 0; i < n; ++i) h0.row(i) = element_emb_.value().row(element_index(graph.atoms()[i].element));
  const auto bias = distance_bias(conf);
  ag::Tensor x = ag::constant(std::move(h0));
  for (const auto& block : blocks_) {
    const ag::Tensor normed = block.ln1(x);
    x = x + block.attn(normed, normed, nullptr, {}, &bias);
    x = x + block.ffn(block.ln2(x));
  }
  x = final_ln_(x);
  const ag::Tensor graph_token = graph_proj_(ag::mean_rows(x));

  TokenSequence out;
  out.modality = Modality::k3d;
  out.roles = roles_for(graph.atom_count());
  out.embeddings.resize(n + 1, cfg_.hidden_dim);
  out.embeddings.row(0) = graph_token.value();
  out.embeddings.bottomRows(n) = x.value();
  return out;
}

TokenSequence encode_2d(const chem::MolGraph& graph, const Encoder2D& encoder) { return encoder(graph); }

TokenSequence encode_3d(const chem::MolGraph& graph, const chem::Conformer& conf, const Encoder3D& encoder) {
  return encoder(graph, conf);
}

}  // namespace molllama
