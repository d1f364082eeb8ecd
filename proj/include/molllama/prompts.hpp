#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "molllama/samples.hpp"

// Prompt texts used for data generation, filtering, training and evaluation,
// reproduced verbatim. Placeholders are written {level}, {IUPAC name},
// {Description}, {SMILES}, {Response of Assistant 1}, {Response of Assistant 2}.
namespace molllama::prompts {

struct Template {
  std::string system;
  std::string user;
};

const Template& structural_generation();
const Template& feature_generation();       // {level}: chemical | biological
const Template& conversation_generation();
const Template& filtering();                // {level}: structural | chemical | biological
const Template& pairwise_judge();           // {level} in the question line
const Template& reasoning_judge();

// Training system prompts.
const std::string& conversation_system();
const std::string& instruction_system();
const std::string& system_for(DataType type);

// Instruction lists for the non-conversation data types.
const std::vector<std::string>& instructions(DataType type);

// PAMPA prompt pieces.
const std::string& pampa_system_intro();
const std::string& pampa_task_info();
const std::string& pampa_answer_format();
const std::string& pampa_user();
const std::string& pampa_cot_suffix();
inline constexpr std::string_view kFinalAnswerCue = "Final answer: ";

// Training message list for a sample: the data type's system prompt first,
// then for non-conversation types an instruction drawn deterministically from
// the molecule id. Samples that already start with a system message are
// returned unchanged.
std::vector<ChatMessage> training_messages(const InstructionSample& sample);

// Substitutes every {key} from `values`. Throws std::invalid_argument if a
// placeholder remains unresolved.
std::string fill(std::string_view text, const std::map<std::string, std::string>& values);

}  // namespace molllama::prompts
