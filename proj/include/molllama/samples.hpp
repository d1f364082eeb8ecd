#pragma once

#include <optional>
#include <string>
#include <vector>

#include "molllama/lm.hpp"

namespace molllama {

enum class DataType { kStructural, kChemFeature, kBioFeature, kConversation };
std::string_view data_type_name(DataType t);
DataType data_type_from_name(std::string_view name);

struct ChatMessage {
  Role role = Role::kUser;
  std::string text;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// One generated instruction sample. Messages hold the generated content
// (for non-conversation types a single assistant message) until assembly
// prepends the system prompt and instruction.
struct InstructionSample {
  std::string molecule_id;
  DataType data_type = DataType::kStructural;
  std::vector<ChatMessage> messages;
  std::optional<int> judge_score;
  std::string generator;
  std::string timestamp;
  bool malformed = false;
  std::string error;  // Non-empty when generation failed for this record.
};

// Dataset line: {molecule_id, data_type, messages, judge_score}.
std::string sample_to_json_line(const InstructionSample& s);
InstructionSample sample_from_json_line(const std::string& line);
std::vector<InstructionSample> read_samples(const std::string& path);

// Chat for training: molecule tokens sit before the first user message.
ChatSequence to_chat(const std::vector<ChatMessage>& messages);

enum class McqCategory { kStructure, kSource, kProperty, kApplication };
std::string_view mcq_category_name(McqCategory c);
McqCategory mcq_category_from_name(std::string_view name);

struct McqItem {
  std::string id;
  std::string molecule_id;
  McqCategory category = McqCategory::kStructure;
  std::string question;
  std::vector<std::string> options;  // Lettered A, B, C, ...
  char answer = 'A';
};

std::vector<McqItem> read_mcq(const std::string& path);
std::string mcq_prompt(const McqItem& item);

}  // namespace molllama
