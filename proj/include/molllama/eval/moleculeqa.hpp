#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "molllama/eval/responder.hpp"
#include "molllama/samples.hpp"

namespace molllama::eval {

// First capital option letter in the response that stands alone (no
// adjacent letter or digit) and names one of the n options.
std::optional<char> first_option_letter(const std::string& response, std::size_t n_options);

struct CategoryScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct McqPrediction {
  std::string id;
  std::optional<char> predicted;
  char gold = 'A';
  std::string response;
};

struct McqReport {
  std::map<McqCategory, CategoryScore> categories;
  CategoryScore overall;
  std::vector<McqPrediction> predictions;
};

ModelQuery mcq_query(const McqItem& item, const chem::MoleculeRecord& molecule);

// Throws DataError if an item's molecule is missing from `records`.
McqReport moleculeqa_eval(ResponseModel& model, const std::vector<McqItem>& items,
                          const std::vector<chem::MoleculeRecord>& records);

}  // namespace molllama::eval
