#include "molllama/samples.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "molllama/chem/corpus.hpp"

namespace molllama {

namespace {

using nlohmann::json;

json parse_line(const std::string& line, const char* what) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string_view data_type_name(DataType t) {
  switch (t) {
    case DataType::kStructural:
      return "structural";
    case DataType::kChemFeature:
      return "chem_feature";
    case DataType::kBioFeature:
      return "bio_feature";
    case DataType::kConversation:
      return "conversation";
  }
  return "structural";
}

DataType data_type_from_name(std::string_view name) {
  for (DataType t : {DataType::kStructural, DataType::kChemFeature, DataType::kBioFeature, DataType::kConversation}) {
    if (data_type_name(t) == name) return t;
  }
  throw DataError("unknown data type '" + std::string(name) + "'");
}

std::string sample_to_json_line(const InstructionSample& s) {
  json j;
  j["molecule_id"] = s.molecule_id;
  j["data_type"] = data_type_name(s.data_type);
  json messages = json::array();
  for (const auto& m : s.messages) messages.push_back({{"role", role_name(m.role)}, {"text", m.text}});
  j["messages"] = messages;
  j["judge_score"] = s.judge_score ? json(*s.judge_score) : json(nullptr);
  return j.dump();
}

InstructionSample sample_from_json_line(const std::string& line) {
  const json j = parse_line(line, "instruction sample");
  InstructionSample s;
  try {
    s.molecule_id = j.at("molecule_id").get<std::string>();
    s.data_type = data_type_from_name(j.at("data_type").get<std::string>());
    for (const auto& m : j.at("messages")) {
      s.messages.push_back({role_from_name(m.at("role").get<std::string>()), m.at("text").get<std::string>()});
    }
    if (j.contains("judge_score") && !j["judge_score"].is_null()) s.judge_score = j["judge_score"].get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("instruction sample: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("instruction sample: ") + e.what());
  }
  return s;
}

std::vector<InstructionSample> read_samples(const std::string& path) {
  std::vector<InstructionSample> out;
  for (const auto& line : read_lines(path)) out.push_back(sample_from_json_line(line));
  return out;
}

ChatSequence to_chat(const std::vector<ChatMessage>& messages) {
  ChatSequence seq;
  bool placed = false;
  for (const auto& m : messages) {
    Message msg{m.role, m.text, std::nullopt};
    if (!placed && m.role == Role::kUser) {
      msg.molecule = 0;
      placed = true;
    }
    seq.messages.push_back(std::move(msg));
  }
  return seq;
}

std::string_view mcq_category_name(McqCategory c) {
  switch (c) {
    case McqCategory::kStructure:
      return "structure";
    case McqCategory::kSource:
      return "source";
    case McqCategory::kProperty:
      return "property";
    case McqCategory::kApplication:
      return "application";
  }
  return "structure";
}

McqCategory mcq_category_from_name(std::string_view name) {
  for (McqCategory c :
       {McqCategory::kStructure, McqCategory::kSource, McqCategory::kProperty, McqCategory::kApplication}) {
    if (mcq_category_name(c) == name) return c;
  }
  throw DataError("unknown MCQ category '" + std::string(name) + "'");
}

std::vector<McqItem> read_mcq(const std::string& path) {
  std::vector<McqItem> items;
  for (const auto& line : read_lines(path)) {
    const json j = parse_line(line, "MCQ item");
    try {
      McqItem item;
      item.id = j.at("id").get<std::string>();
      item.molecule_id = j.at("molecule_id").get<std::string>();
      item.category = mcq_category_from_name(j.at("category").get<std::string>());
      item.question = j.at("question").get<std::string>();
      item.options = j.at("options").get<std::vector<std::string>>();
      const std::string answer = j.at("answer").get<std::string>();
      if (answer.size() != 1 || answer[0] < 'A' || answer[0] >= 'A' + static_cast<int>(item.options.size())) {
        throw DataError("MCQ item " + item.id + ": answer must be one option letter");
      }
      item.answer = answer[0];
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw DataError(std::string("MCQ item: ") + e.what());
    }
  }
  return items;
}

std::string mcq_prompt(const McqItem& item) {
  std::string text = item.question + "\n";
  for (std::size_t k = 0; k < item.options.size(); ++k) {
    text += std::string(1, static_cast<char>('A' + k)) + ". " + item.options[k] + "\n";
  }
  text += "Answer with the letter of the correct option.";
  return text;
}

}  // namespace molllama
