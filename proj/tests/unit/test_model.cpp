#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "molllama/chem/conformer.hpp"
#include "molllama/chem/smiles.hpp"
#include "molllama/model.hpp"
#include "molllama/prompts.hpp"
#include "test_util.hpp"

using namespace molllama;

namespace {

ModelConfig small_config(std::uint64_t seed = 5) {
  ModelConfig c;
  c.encoder.hidden_dim = 16;
  c.blending.blocks = 2;
  c.blending.heads = 2;
  c.qformer.layers = 2;
  c.qformer.heads = 2;
  c.qformer.n_queries = 4;
  c.lm.hidden_dim = 32;
  c.lm.heads = 2;
  c.lm.max_seq_len = 512;
  c.seed = seed;
  c.finalize();
  return c;
}

double max_abs_diff(const ag::Matrix& a, const ag::Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<int> bytes(const std::string& s) { return tok::tokenize(s); }

}  // namespace

TEST(Encoders, RelabelingPermutesNodeTokensExactly) {
  const MolLlama model(small_config());
  Rng rng(1);
  for (const char* id : {"aspirin", "caffeine", "diazepam"}) {
    const auto& rec = fixtures::record(id);
    const chem::MolGraph g = chem::parse_smiles(rec.smiles);
    const auto perm = fixtures::random_permutation(static_cast<int>(g.atom_count()), rng);
    const TokenSequence a = model.encoder2d()(g);
    const TokenSequence b = model.encoder2d()(g.permuted(perm));
    ASSERT_EQ(a.size(), static_cast<Eigen::Index>(g.atom_count()) + 1);
    EXPECT_EQ(a.roles.front(), TokenRole::kGraph);
    EXPECT_EQ(a.embeddings.row(0), b.embeddings.row(0)) << id;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      EXPECT_EQ(b.embeddings.row(static_cast<Eigen::Index>(k) + 1), a.embeddings.row(perm[k] + 1)) << id;
    }
  }
}

TEST(Encoders, ThreeDGraphTokenInvariant) {
  const MolLlama model(small_config());
  const auto& rec = fixtures::record("ibuprofen");
  const chem::MolGraph g = chem::parse_smiles(rec.smiles);
  const chem::Conformer conf = chem::conformer_for(rec, g, 3);
  Rng rng(2);
  const auto perm = fixtures::random_permutation(static_cast<int>(g.atom_count()), rng);
  const TokenSequence a = model.encoder3d()(g, conf);
  const TokenSequence b = model.encoder3d()(g.permuted(perm), chem::permuted(conf, perm));
  EXPECT_EQ(a.modality, Modality::k3d);
  EXPECT_LT(max_abs_diff(a.embeddings.topRows(1), b.embeddings.topRows(1)), 1e-10);
}

TEST(Encoders, DistanceBiasIsSymmetric) {
  const MolLlama model(small_config());
  const chem::MolGraph g = chem::parse_smiles("CCO");
  const auto bias = model.encoder3d().distance_bias(chem::embed_conformer(g, 1));
  ASSERT_FALSE(bias.empty());
  for (const auto& b : bias) EXPECT_LT(max_abs_diff(b, b.transpose()), 1e-12);
}

TEST(Fusion, UnifiedHasOneRowPerToken) {
  const MolLlama model(small_config());
  const MoleculeInput mol = model.encode(fixtures::record("phenol"));
  const ag::Tensor u = model.unified(mol);
  EXPECT_EQ(u.rows(), mol.seq2d.size() + mol.seq3d.size());
  EXPECT_EQ(u.cols(), 16);
  EXPECT_EQ(model.lm_queries(mol).rows(), 4);
  EXPECT_EQ(model.lm_queries(mol).cols(), 32);
}

TEST(Fusion, QueryOutputsPermutationInvariant) {
  const MolLlama model(small_config());
  Rng rng(4);
  for (const char* id : {"nicotine", "paracetamol", "lidocaine", "sodium_acetate"}) {
    const auto& rec = fixtures::record(id);
    const chem::MolGraph g = chem::parse_smiles(rec.smiles);
    const chem::Conformer conf = chem::conformer_for(rec, g, 7);
    const auto perm = fixtures::random_permutation(static_cast<int>(g.atom_count()), rng);
    const ag::Tensor a = model.qformer().embed(model.unified(model.encode(g, conf)));
    const ag::Tensor b = model.qformer().embed(model.unified(model.encode(g.permuted(perm), chem::permuted(conf, perm))));
    EXPECT_LT(max_abs_diff(a.value(), b.value()), 1e-9) << id;
  }
}

TEST(Masks, ModeTable) {
  const auto c = build_attention_mask(MaskMode::kContrastive, 2, 3);
  const auto m = build_attention_mask(MaskMode::kMatching, 2, 3);
  const auto g = build_attention_mask(MaskMode::kGeneration, 2, 3);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const bool qi = i < 2, qj = j < 2;
      EXPECT_EQ(c.allow(i, j), qi == qj) << i << "," << j;
      EXPECT_TRUE(m.allow(i, j));
      const bool expected_gen = qi ? qj : (qj || j <= i);
      EXPECT_EQ(g.allow(i, j), expected_gen) << i << "," << j;
    }
  }
}

TEST(Fusion, ContrastiveModeBlocksCrossModality) {
  const MolLlama model(small_config());
  const auto text = qformer_text_ids(bytes("ethanol"), MaskMode::kContrastive);
  const ag::Tensor u1 = model.unified(model.encode(fixtures::record("ethanol")));
  const ag::Tensor u2 = model.unified(model.encode(fixtures::record("benzene")));
  const auto a = model.qformer().forward(u1, text, MaskMode::kContrastive);
  const auto b = model.qformer().forward(u2, text, MaskMode::kContrastive);
  // Text never sees the molecule, and queries never see the text.
  EXPECT_EQ(a.text.value(), b.text.value());
  const auto other = qformer_text_ids(bytes("benzene"), MaskMode::kContrastive);
  EXPECT_EQ(model.qformer().forward(u1, other, MaskMode::kContrastive).queries.value(), a.queries.value());
}

TEST(Fusion, GenerationModeIsCausalOverText) {
  const MolLlama model(small_config());
  const ag::Tensor u = model.unified(model.encode(fixtures::record("acetone")));
  const auto t1 = qformer_text_ids(bytes("propan-2-one"), MaskMode::kGeneration);
  auto t2 = t1;
  t2.back() = 'x';
  t2[t2.size() - 2] = 'y';
  const auto a = model.qformer().forward(u, t1, MaskMode::kGeneration).text.value();
  const auto b = model.qformer().forward(u, t2, MaskMode::kGeneration).text.value();
  const Eigen::Index keep = static_cast<Eigen::Index>(t1.size()) - 2;
  EXPECT_EQ(a.topRows(keep), b.topRows(keep));
  EXPECT_NE(a.bottomRows(2), b.bottomRows(2));
}

TEST(Objectives, TextLayouts) {
  const std::vector<int> text = {'a', 'b'};
  EXPECT_EQ(qformer_text_ids(text, MaskMode::kContrastive), (std::vector<int>{tok::kCls, 'a', 'b'}));
  EXPECT_EQ(qformer_text_ids(text, MaskMode::kGeneration), (std::vector<int>{tok::kDec, 'a', 'b', tok::kEos}));
}

TEST(Objectives, InfoNceClosedForms) {
  const ag::Tensor one = ag::constant(ag::Matrix::Constant(1, 1, 0.4));
  EXPECT_EQ(info_nce(one, 0.07).item(), 0.0);
  for (int b : {2, 5, 8}) {
    const ag::Tensor flat = ag::constant(ag::Matrix::Constant(b, b, 0.3));
    EXPECT_NEAR(info_nce(flat, 0.1).item(), std::log(static_cast<double>(b)), 1e-12);
  }
  ag::Matrix sim = ag::Matrix::Identity(3, 3);
  EXPECT_EQ(retrieval_at_1(sim), 1.0);
  sim(1, 0) = 2.0;
  EXPECT_NEAR(retrieval_at_1(sim), 2.0 / 3.0, 1e-15);
}

TEST(Objectives, ContrastiveSingletonIsZero) {
  const MolLlama model(small_config());
  Stage1Batch batch;
  batch.unified = {model.unified(model.encode(fixtures::record("urea")))};
  batch.texts = {bytes("urea")};
  EXPECT_EQ(contrastive_loss(model.stage1_model(), batch, 0.07).item(), 0.0);
  Rng rng(1);
  EXPECT_THROW(matching_loss(model.stage1_model(), batch, rng), std::invalid_argument);
}

TEST(Objectives, Stage1LossIsWeightedSum) {
  const MolLlama model(small_config());
  Stage1Batch batch;
  for (const char* id : {"methanol", "ethanol", "propane"}) {
    batch.unified.push_back(model.unified(model.encode(fixtures::record(id))));
    batch.texts.push_back(bytes(fixtures::record(id).iupac));
  }
  Rng rng(2);
  const auto l = stage1_loss(model.stage1_model(), batch, 0.07, rng, {1.0, 0.5, 2.0});
  EXPECT_NEAR(l.total.item(), l.contrastive.item() + 0.5 * l.matching.item() + 2.0 * l.generation.item(), 1e-12);
  EXPECT_EQ(l.similarity.rows(), 3);
  EXPECT_GT(l.generation.item(), 0.0);
}

TEST(Lm, RenderChatMasksOnlyAssistantText) {
  const ChatSequence seq = single_molecule_chat("sys", "question", "the answer");
  const RenderedChat r = render_chat(seq, 4);
  ASSERT_EQ(r.ids.size(), r.loss_mask.size());
  EXPECT_EQ(r.ids.front(), tok::kBos);
  ASSERT_EQ(r.molecule_slots.size(), 1u);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(r.ids[r.molecule_slots[0] + k], tok::kMol);
  std::vector<int> masked;
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    if (r.loss_mask[i]) masked.push_back(r.ids[i]);
  }
  ASSERT_FALSE(masked.empty());
  EXPECT_EQ(masked.back(), tok::kEos);
  EXPECT_EQ(tok::detokenize(masked), "the answer");
  const RenderedChat prompt = render_chat(single_molecule_chat("sys", "question"), 4, true);
  EXPECT_EQ(tok::detokenize(prompt.ids).substr(tok::detokenize(prompt.ids).size() - 11), "Assistant: ");
}

TEST(Lm, LossPathsAgree) {
  const MolLlama model(small_config());
  const MoleculeInput mol = model.encode(fixtures::record("glycine"));
  const ag::Tensor q = model.lm_queries(mol);
  const RenderedChat r = render_chat(single_molecule_chat("s", "u", "an amino acid"), 4);
  const double direct = instruction_loss(model.lm(), r, std::span<const ag::Tensor>(&q, 1)).item();
  const double via_logits =
      instruction_loss_from_logits(forward_with_molecule(model.lm(), r, std::span<const ag::Tensor>(&q, 1)), r).item();
  EXPECT_NEAR(direct, via_logits, 1e-12);
}

TEST(Lm, RejectsOverlongSequences) {
  ModelConfig c = small_config();
  c.lm.max_seq_len = 40;
  const MolLlama model(c);
  const ag::Tensor q = model.lm_queries(model.encode(fixtures::record("methane")));
  const RenderedChat r = render_chat(single_molecule_chat(std::string(60, 'x'), "u", "a"), 4);
  EXPECT_THROW(forward_with_molecule(model.lm(), r, std::span<const ag::Tensor>(&q, 1)), std::length_error);
}

TEST(Lm, FreshLoraIsIdentityAndResetRestores) {
  MolLlama model(small_config());
  const ag::Tensor q = model.lm_queries(model.encode(fixtures::record("styrene")));
  const RenderedChat prompt = render_chat(single_molecule_chat("sys", "describe"), 4, true);
  DecodeOptions on, off;
  on.max_new = off.max_new = 24;
  off.use_lora = false;
  const std::string base = generate(model.lm(), prompt, std::span<const ag::Tensor>(&q, 1), off);
  EXPECT_EQ(generate(model.lm(), prompt, std::span<const ag::Tensor>(&q, 1), on), base);

  const ag::Tensor base_logits = forward_with_molecule(model.lm(), prompt, std::span<const ag::Tensor>(&q, 1));
  Rng rng(3);
  for (auto& p : model.store().params()) {
    if (p.group != groups::kLora) continue;
    for (Eigen::Index i = 0; i < p.tensor.value().size(); ++i) p.tensor.mutable_value().data()[i] = 0.1 * rng.normal();
  }
  const ag::Tensor moved = forward_with_molecule(model.lm(), prompt, std::span<const ag::Tensor>(&q, 1));
  EXPECT_GT(max_abs_diff(moved.value(), base_logits.value()), 1e-6);
  model.lm().reset_lora();
  EXPECT_EQ(forward_with_molecule(model.lm(), prompt, std::span<const ag::Tensor>(&q, 1)).value(), base_logits.value());
}

TEST(Lm, SampledDecodingIsSeeded) {
  const MolLlama model(small_config());
  const ag::Tensor q = model.lm_queries(model.encode(fixtures::record("furan")));
  const RenderedChat prompt = render_chat(single_molecule_chat("sys", "describe"), 4, true);
  DecodeOptions o;
  o.greedy = false;
  o.temperature = 0.8;
  o.max_new = 16;
  o.seed = 9;
  const std::span<const ag::Tensor> qs(&q, 1);
  EXPECT_EQ(generate(model.lm(), prompt, qs, o), generate(model.lm(), prompt, qs, o));
  o.temperature = 0.0;
  EXPECT_THROW(generate(model.lm(), prompt, qs, o), std::invalid_argument);
}

TEST(Model, GroupsAreDisjointAndComplete) {
  const MolLlama model(small_config());
  const std::set<std::string> expected = {"encoder2d", "encoder3d",  "blending", "qformer", "qformer_text",
                                          "stage1_heads", "query_proj", "lm_base", "lora"};
  EXPECT_EQ(model.store().group_names(), expected);
  std::set<std::string> names;
  for (const auto& p : model.store().params()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(Model, SameSeedSameWeights) {
  const MolLlama a(small_config(11)), b(small_config(11)), c(small_config(12));
  EXPECT_EQ(a.store().checksums(), b.store().checksums());
  EXPECT_NE(a.store().checksums(), c.store().checksums());
}

TEST(Model, CheckpointRoundTrip) {
  MolLlama model(small_config());
  for (auto& p : model.store().params()) {
    if (p.group == groups::kLora) p.tensor.mutable_value().array() += 0.01;
  }
  const auto path = std::filesystem::temp_directory_path() / "molllama_ckpt_test.bin";
  model.save(path);
  const auto loaded = MolLlama::load(path);
  EXPECT_EQ(loaded->store().checksums(), model.store().checksums());
  EXPECT_EQ(loaded->config().to_json(), model.config().to_json());
  const MoleculeInput mol = model.encode(fixtures::record("indole"));
  EXPECT_EQ(loaded->lm_queries(loaded->encode(fixtures::record("indole"))).value(), model.lm_queries(mol).value());
  std::filesystem::remove(path);
}

TEST(Model, FlatConfigRoundTrip) {
  const ModelConfig c = small_config(3);
  FlatConfig flat;
  c.to_flat(flat);
  EXPECT_EQ(ModelConfig::from_flat(flat).to_json(), c.to_json());
}
