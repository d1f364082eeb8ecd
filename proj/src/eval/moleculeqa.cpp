#include "molllama/eval/moleculeqa.hpp"

#include <cctype>
#include <unordered_map>

#include "molllama/chem/corpus.hpp"
#include "molllama/prompts.hpp"

namespace molllama::eval {

std::optional<char> first_option_letter(const std::string& response, std::size_t n_options) {
  const auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < response.size(); ++i) {
    const char c = response[i];
    if (c < 'A' || c >= static_cast<char>('A' + n_options)) continue;
    if (i > 0 && alnum(response[i - 1])) continue;
    if (i + 1 < response.size() && alnum(response[i + 1])) continue;
    return c;
  }
  return std::nullopt;
}

ModelQuery mcq_query(const McqItem& item, const chem::MoleculeRecord& molecule) {
  ModelQuery q;
  q.chat = single_molecule_chat(prompts::conversation_system(), mcq_prompt(item));
  q.molecules = {molecule};
  return q;
}

McqReport moleculeqa_eval(ResponseModel& model, const std::vector<McqItem>& items,
                          const std::vector<chem::MoleculeRecord>& records) {
  std::unordered_map<std::string, const chem::MoleculeRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  McqReport report;
  for (const auto& item : items) {
    const auto it = by_id.find(item.molecule_id);
    if (it == by_id.end()) throw DataError("MCQ item " + item.id + ": unknown molecule " + item.molecule_id);
    McqPrediction p;
    p.id = item.id;
    p.gold = item.answer;
    p.response = model.generate(mcq_query(item, *it->second));
    p.predicted = first_option_letter(p.response, item.options.size());
    const bool ok = p.predicted && *p.predicted == item.answer;
    auto& cat = report.categories[item.category];
    ++cat.total;
    ++report.overall.total;
    cat.correct += ok;
    report.overall.correct += ok;
    report.predictions.push_back(std::move(p));
  }
  return report;
}

}  // namespace molllama::eval
