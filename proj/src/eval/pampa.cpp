#include "molllama/eval/pampa.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "molllama/chem/corpus.hpp"
#include "molllama/prompts.hpp"

namespace molllama::eval {
namespace {

using nlohmann::json;

// Lower-case, '-' as space, whitespace runs collapsed.
std::string normalize(std::string_view s) {
  std::string out;
  for (char ch : s) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (c == '-') c = ' ';
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out += ' ';
      continue;
    }
    out += c;
  }
  return out;
}

bool starts_word(const std::string& s, std::string_view word) {
  if (s.compare(0, word.size(), word) != 0) return false;
  return s.size() == word.size() || !std::isalpha(static_cast<unsigned char>(s[word.size()]));
}

}  // namespace

std::string_view pampa_label_name(PampaLabel l) { return l == PampaLabel::kHigh ? "high" : "low_to_moderate"; }

PampaLabel pampa_label_from_name(std::string_view name) {
  if (name == "high") return PampaLabel::kHigh;
  if (name == "low_to_moderate") return PampaLabel::kLowToModerate;
  throw DataError("unknown PAMPA label '" + std::string(name) + "'");
}

std::string pampa_answer_text(PampaLabel l) {
  return l == PampaLabel::kHigh ? "High permeability." : "Low-to-moderate permeability.";
}

std::vector<PampaItem> read_pampa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<PampaItem> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PampaItem item;
      item.id = j.at("id").get<std::string>();
      item.molecule.id = item.id;
      item.molecule.smiles = j.at("smiles").get<std::string>();
      item.molecule.iupac = j.value("iupac", "");
      item.molecule.description = j.value("description", "");
      item.label = pampa_label_from_name(j.at("label").get<std::string>());
      out.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw DataError("PAMPA item: " + std::string(e.what()));
    }
  }
  return out;
}

std::string_view pampa_mode_name(PampaMode m) {
  switch (m) {
    case PampaMode::kDefault:
      return "default";
    case PampaMode::kCot:
      return "cot";
    case PampaMode::kTaskInfo:
      return "task_info";
    case PampaMode::kFewShot:
      return "few_shot";
  }
  return "default";
}

PampaMode pampa_mode_from_name(std::string_view name) {
  for (PampaMode m : {PampaMode::kDefault, PampaMode::kCot, PampaMode::kTaskInfo, PampaMode::kFewShot}) {
    if (pampa_mode_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown PAMPA mode '" + std::string(name) + "'");
}

ModelQuery pampa_query(const PampaItem& item, PampaMode mode, const std::vector<PampaItem>& examples) {
  std::string system = prompts::pampa_system_intro() + "\n";
  if (mode == PampaMode::kTaskInfo) system += prompts::pampa_task_info() + "\n";
  system += prompts::pampa_answer_format();
  std::string user = prompts::pampa_user();
  if (mode == PampaMode::kCot) user += "\n" + prompts::pampa_cot_suffix();

  ModelQuery q;
  q.chat.messages.push_back({Role::kSystem, system, std::nullopt});
  if (mode == PampaMode::kFewShot) {
    if (examples.empty()) throw std::invalid_argument("few-shot mode needs examples");
    for (const auto& ex : examples) {
      if (ex.id == item.id) throw std::invalid_argument("few-shot example " + ex.id + " is the query item");
      q.chat.messages.push_back({Role::kUser, user, static_cast<int>(q.molecules.size())});
      q.chat.messages.push_back(
          {Role::kAssistant, std::string(prompts::kFinalAnswerCue) + pampa_answer_text(ex.label), std::nullopt});
      q.molecules.push_back(ex.molecule);
    }
  }
  q.chat.messages.push_back({Role::kUser, user, static_cast<int>(q.molecules.size())});
  q.molecules.push_back(item.molecule);
  return q;
}

std::optional<PampaLabel> scan_final_answer(const std::string& text) {
  std::string low = text;
  for (char& ch : low) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  const auto at = low.rfind("final answer");
  if (at == std::string::npos) return std::nullopt;
  std::size_t k = at + 12;
  while (k < low.size() && (low[k] == ' ' || low[k] == '\t' || low[k] == ':')) ++k;
  while (k < low.size() && (low[k] == '\'' || low[k] == '"' || low[k] == '`' || low[k] == '*')) ++k;
  const std::string rest = normalize(std::string_view(low).substr(k));
  if (starts_word(rest, "high")) return PampaLabel::kHigh;
  if (starts_word(rest, "low to moderate")) return PampaLabel::kLowToModerate;
  return std::nullopt;
}

Extraction extract_final_answer(const std::string& response, ResponseModel& model, const ModelQuery& query) {
  Extraction out;
  out.label = scan_final_answer(response);
  if (out.label) return out;
  out.retried = true;
  ModelQuery retry = query;
  retry.assistant_prefix = query.assistant_prefix + response;
  if (!response.empty() && response.back() != '\n') retry.assistant_prefix += "\n";
  retry.assistant_prefix += prompts::kFinalAnswerCue;
  out.continuation = model.generate(retry);
  out.label = scan_final_answer(std::string(prompts::kFinalAnswerCue) + out.continuation);
  return out;
}

PampaItem pampa_predict(ResponseModel& model, const PampaItem& item, PampaMode mode,
                        const std::vector<PampaItem>& examples) {
  const ModelQuery q = pampa_query(item, mode, examples);
  PampaItem out = item;
  out.response_text = model.generate(q);
  const Extraction e = extract_final_answer(out.response_text, model, q);
  out.prediction = e.label;
  out.retried = e.retried;
  if (e.retried) out.response_text += "\n" + std::string(prompts::kFinalAnswerCue) + e.continuation;
  return out;
}

PampaMetrics pampa_metrics(const std::vector<PampaItem>& items, std::optional<PampaLabel> minority) {
  PampaMetrics m;
  m.total = items.size();
  std::size_t correct = 0, high = 0, gold_high = 0;
  for (const auto& it : items) {
    gold_high += it.label == PampaLabel::kHigh;
    if (!it.prediction) {
      ++m.nonconforming;
      continue;
    }
    ++m.predicted;
    correct += *it.prediction == it.label;
    high += *it.prediction == PampaLabel::kHigh;
  }
  if (m.predicted == 0) throw std::invalid_argument("pampa_metrics: no item has a prediction");
  const double n = static_cast<double>(m.predicted);
  m.accuracy = static_cast<double>(correct) / n;
  m.ratio_high = static_cast<double>(high) / n;
  m.ratio_low = static_cast<double>(m.predicted - high) / n;
  const std::size_t gold_low = items.size() - gold_high;
  m.minority = minority.value_or(gold_high <= gold_low ? PampaLabel::kHigh : PampaLabel::kLowToModerate);
  m.label_ratio = m.minority == PampaLabel::kHigh ? m.ratio_high : m.ratio_low;
  m.all_same = high == 0 || high == m.predicted;
  m.not_applicable = static_cast<double>(m.nonconforming) > 0.2 * static_cast<double>(m.total);
  return m;
}

}  // namespace molllama::eval
