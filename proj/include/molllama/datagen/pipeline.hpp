#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "molllama/chem/molecule.hpp"
#include "molllama/datagen/provider.hpp"
#include "molllama/samples.hpp"

namespace molllama::datagen {

enum class PromptKind { kStructural, kChemFeature, kBioFeature, kConversation, kFilter };
PromptKind prompt_kind(DataType type);

// [system, user] for a generation or filter prompt. Feature prompts default
// to level "chemical"/"biological"; the filter prompt takes "structural",
// "chemical" or "biological" (see filter_level) and reads the text under
// judgement from record.description. Throws DataError on a missing field and
// std::invalid_argument on an unknown level.
std::vector<ChatMessage> render_prompt(PromptKind kind, const chem::MoleculeRecord& record,
                                       std::optional<std::string> level = std::nullopt);

// Level used in the filter prompt for samples of a data type.
std::string filter_level(DataType type);

// Splits generated conversation text into user/assistant turns on "User:" /
// "Assistant:" markers (any case). Markers at line starts take precedence;
// single-line output falls back to markers after whitespace. Returns
// nullopt unless the turns alternate starting with the user and end with the
// assistant, with no empty turn.
std::optional<std::vector<ChatMessage>> split_conversation(const std::string& text);

struct GenerationOptions {
  double temperature = 1.0;
  // Line-delimited JSON job ledger. Records already marked done are reused
  // instead of calling the provider again.
  std::optional<std::filesystem::path> ledger;
};

// One sample per record, in input order. Per-record failures set
// sample.error; unsplittable conversations set sample.malformed.
std::vector<InstructionSample> generate_samples(const LLMClient& client, const std::vector<chem::MoleculeRecord>& records,
                                                DataType type, const GenerationOptions& options = {});

// First "Score: <digit>" in a verdict, if the digit is 1..4.
std::optional<int> parse_filter_score(const std::string& verdict);

struct DroppedSample {
  InstructionSample sample;
  std::string reason;  // "score N", "unscored", "malformed", "generation failed", "unknown molecule"
};

struct FilterResult {
  std::vector<InstructionSample> kept;
  std::vector<DroppedSample> dropped;
  std::size_t unscored = 0;
};

struct FilterOptions {
  double temperature = 0.0;
};

// Keeps samples the judge scores 4. Every input sample lands in exactly one
// output list, in input order.
FilterResult judge_filter(const LLMClient& client, const std::vector<InstructionSample>& samples,
                          const std::vector<chem::MoleculeRecord>& records, const FilterOptions& options = {});

struct AssemblyReport {
  std::map<DataType, std::size_t> counts;
  std::size_t total = 0;
  std::size_t rejected = 0;  // Inputs without judge_score 4.
};

// Writes the training dataset: the system prompt, then for non-conversation
// types an instruction drawn with a seeded generator, then the generated turns.
AssemblyReport assemble_dataset(const std::vector<InstructionSample>& kept, std::uint64_t seed, std::ostream& out);
AssemblyReport assemble_dataset(const std::vector<InstructionSample>& kept, std::uint64_t seed,
                                const std::filesystem::path& out);

// Generated (pre-filter) samples with provenance: the dataset fields plus
// generator, malformed and error. Timestamps stay in the job ledger so that
// reruns produce identical files.
std::string raw_sample_line(const InstructionSample& s);
InstructionSample raw_sample_from_line(const std::string& line);
void write_raw_samples(const std::vector<InstructionSample>& samples, const std::filesystem::path& path);
std::vector<InstructionSample> read_raw_samples(const std::filesystem::path& path);

// Calls fn(i) for i in [0, n) on up to max_parallel threads.
void parallel_for(std::size_t n, int max_parallel, const std::function<void(std::size_t)>& fn);

}  // namespace molllama::datagen
