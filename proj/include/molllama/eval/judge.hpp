#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "molllama/chem/molecule.hpp"
#include "molllama/datagen/provider.hpp"

namespace molllama::eval {

struct JudgeScores {
  double helpfulness = 0.0;
  double relevance = 0.0;
  double accuracy = 0.0;
  double detail = 0.0;
  double overall = 0.0;

  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

struct ReasoningScores {
  double fidelity = 0.0;
  double helpfulness = 0.0;

  friend bool operator==(const ReasoningScores&, const ReasoningScores&) = default;
};

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "Explain the {level} features of the given molecule."
std::string eval_question(const std::string& level);

// Scores under the "[Assistant 1]" and "[Assistant 2]" headers. Every
// criterion must be present with a value in [1, 10], otherwise nullopt.
std::optional<std::array<JudgeScores, 2>> parse_pairwise_verdict(const std::string& text);
std::optional<std::array<ReasoningScores, 2>> parse_reasoning_verdict(const std::string& text);

struct JudgeOptions {
  bool both_orders = true;  // Judge (a, b) and (b, a) and average.
  int repeats = 1;          // Independent judge runs averaged per order.
  int max_attempts = 3;     // Per run; rejected verdicts are retried.
  double temperature = 0.0;
};

struct PairwiseResult {
  JudgeScores a, b;
  int rejected = 0;
  std::vector<std::string> raw;
};

struct ReasoningResult {
  ReasoningScores a, b;
  int rejected = 0;
  std::vector<std::string> raw;
};

// Throws JudgeError when a run exhausts its attempts. Both responses must be
// non-empty.
PairwiseResult judge_pairwise(const datagen::LLMClient& client, const chem::MoleculeRecord& molecule,
                              const std::string& level, const std::string& response_a,
                              const std::string& response_b, const JudgeOptions& options = {});
ReasoningResult judge_reasoning(const datagen::LLMClient& client, const chem::MoleculeRecord& molecule,
                                const std::string& response_a, const std::string& response_b,
                                const JudgeOptions& options = {});

// Mean over items of candidate / reference, per criterion. Throws
// std::invalid_argument on a non-positive reference score or size mismatch.
JudgeScores relative_score(const std::vector<JudgeScores>& candidate, const std::vector<JudgeScores>& reference);
ReasoningScores relative_score(const std::vector<ReasoningScores>& candidate,
                               const std::vector<ReasoningScores>& reference);

}  // namespace molllama::eval
