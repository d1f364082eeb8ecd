#include "molllama/eval/judge.hpp"

#include <cctype>
#include <cstdlib>
#include <map>

#include "molllama/prompts.hpp"

namespace molllama::eval {
namespace {

std::string lower(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Splits the verdict into the sections under "[Assistant 1]" / "[Assistant 2]"
// and collects "- Name : value" lines per section, keyed by lower-case name.
std::optional<std::array<std::map<std::string, double>, 2>> criterion_lines(const std::string& text) {
  std::array<std::map<std::string, double>, 2> out;
  int section = -1;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const std::string line = trim(text.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
    pos = end == std::string::npos ? text.size() + 1 : end + 1;
    if (line == "[Assistant 1]") {
      section = 0;
    } else if (line == "[Assistant 2]") {
      section = 1;
    } else if (section >= 0 && line.size() > 1 && line[0] == '-') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string name = lower(trim(line.substr(1, colon - 1)));
      const std::string value = trim(line.substr(colon + 1));
      char* stop = nullptr;
      const double v = std::strtod(value.c_str(), &stop);
      if (stop == value.c_str()) continue;
      if (!out[section].count(name)) out[section][name] = v;
    }
  }
  return out;
}

std::optional<double> score(const std::map<std::string, double>& m, const std::string& name) {
  const auto it = m.find(name);
  if (it == m.end() || it->second < 1.0 || it->second > 10.0) return std::nullopt;
  return it->second;
}

JudgeScores add(JudgeScores a, const JudgeScores& b, double w) {
  a.helpfulness += w * b.helpfulness;
  a.relevance += w * b.relevance;
  a.accuracy += w * b.accuracy;
  a.detail += w * b.detail;
  a.overall += w * b.overall;
  return a;
}

ReasoningScores add(ReasoningScores a, const ReasoningScores& b, double w) {
  a.fidelity += w * b.fidelity;
  a.helpfulness += w * b.helpfulness;
  return a;
}

JudgeScores divide(JudgeScores a, double n) {
  return {a.helpfulness / n, a.relevance / n, a.accuracy / n, a.detail / n, a.overall / n};
}

ReasoningScores divide(ReasoningScores a, double n) { return {a.fidelity / n, a.helpfulness / n}; }

// Runs a judge with retries and order swapping; `render` builds the
// request for (first, second) and `parse` reads a verdict.
template <typename Scores, typename Render, typename Parse>
void run_judge(const datagen::LLMClient& client, const std::string& a, const std::string& b,
               const JudgeOptions& options, Render render, Parse parse, Scores& out_a, Scores& out_b, int& rejected,
               std::vector<std::string>& raw) {
  if (a.empty() || b.empty()) throw std::invalid_argument("judge: responses must be non-empty");
  if (options.repeats < 1 || options.max_attempts < 1) throw std::invalid_argument("judge: bad options");
  const int orders = options.both_orders ? 2 : 1;
  const double runs = static_cast<double>(orders * options.repeats);
  out_a = {};
  out_b = {};
  for (int order = 0; order < orders; ++order) {
    const std::string& first = order == 0 ? a : b;
    const std::string& second = order == 0 ? b : a;
    for (int rep = 0; rep < options.repeats; ++rep) {
      bool ok = false;
      for (int attempt = 0; attempt < options.max_attempts && !ok; ++attempt) {
        const std::string text = client.complete(render(first, second));
        raw.push_back(text);
        const auto parsed = parse(text);
        if (!parsed) {
          ++rejected;
          continue;
        }
        out_a = add(out_a, (*parsed)[order == 0 ? 0 : 1], 1.0);
        out_b = add(out_b, (*parsed)[order == 0 ? 1 : 0], 1.0);
        ok = true;
      }
      if (!ok) throw JudgeError("judge verdict rejected after " + std::to_string(options.max_attempts) + " attempts");
    }
  }
  out_a = divide(out_a, runs);
  out_b = divide(out_b, runs);
}

}  // namespace

std::string eval_question(const std::string& level) { return "Explain the " + level + " features of the given molecule."; }

std::optional<std::array<JudgeScores, 2>> parse_pairwise_verdict(const std::string& text) {
  const auto lines = criterion_lines(text);
  if (!lines) return std::nullopt;
  std::array<JudgeScores, 2> out;
  for (int s = 0; s < 2; ++s) {
    const auto& m = (*lines)[s];
    const auto h = score(m, "helpfulness"), r = score(m, "relevance"), a = score(m, "accuracy"),
               d = score(m, "level of detail"), o = score(m, "overall");
    if (!h || !r || !a || !d || !o) return std::nullopt;
    out[s] = {*h, *r, *a, *d, *o};
  }
  return out;
}

std::optional<std::array<ReasoningScores, 2>> parse_reasoning_verdict(const std::string& text) {
  const auto lines = criterion_lines(text);
  if (!lines) return std::nullopt;
  std::array<ReasoningScores, 2> out;
  for (int s = 0; s < 2; ++s) {
    const auto f = score((*lines)[s], "fidelity"), h = score((*lines)[s], "helpfulness");
    if (!f || !h) return std::nullopt;
    out[s] = {*f, *h};
  }
  return out;
}

PairwiseResult judge_pairwise(const datagen::LLMClient& client, const chem::MoleculeRecord& molecule,
                              const std::string& level, const std::string& response_a,
                              const std::string& response_b, const JudgeOptions& options) {
  const auto& t = prompts::pairwise_judge();
  const std::string system = t.system;
  auto render = [&](const std::string& first, const std::string& second) {
    const std::map<std::string, std::string> values{{"SMILES", molecule.smiles},
                                                    {"IUPAC name", molecule.iupac},
                                                    {"Description", molecule.description},
                                                    {"level", level},
                                                    {"Response of Assistant 1", first},
                                                    {"Response of Assistant 2", second}};
    return datagen::CompletionRequest{{{Role::kSystem, system}, {Role::kUser, prompts::fill(t.user, values)}},
                                      options.temperature};
  };
  PairwiseResult result;
  run_judge(client, response_a, response_b, options, render, parse_pairwise_verdict, result.a, result.b,
            result.rejected, result.raw);
  return result;
}

ReasoningResult judge_reasoning(const datagen::LLMClient& client, const chem::MoleculeRecord& molecule,
                                const std::string& response_a, const std::string& response_b,
                                const JudgeOptions& options) {
  const auto& t = prompts::reasoning_judge();
  auto render = [&](const std::string& first, const std::string& second) {
    const std::map<std::string, std::string> values{
        {"SMILES", molecule.smiles}, {"Response of Assistant 1", first}, {"Response of Assistant 2", second}};
    return datagen::CompletionRequest{{{Role::kSystem, t.system}, {Role::kUser, prompts::fill(t.user, values)}},
                                      options.temperature};
  };
  ReasoningResult result;
  run_judge(client, response_a, response_b, options, render, parse_reasoning_verdict, result.a, result.b,
            result.rejected, result.raw);
  return result;
}

JudgeScores relative_score(const std::vector<JudgeScores>& candidate, const std::vector<JudgeScores>& reference) {
  if (candidate.size() != reference.size() || candidate.empty()) {
    throw std::invalid_argument("relative_score: need equally many candidate and reference scores");
  }
  JudgeScores out;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const JudgeScores& c = candidate[i];
    const JudgeScores& r = reference[i];
    if (!(r.helpfulness > 0 && r.relevance > 0 && r.accuracy > 0 && r.detail > 0 && r.overall > 0)) {
      throw std::invalid_argument("relative_score: reference score must be positive");
    }
    out = add(out, {c.helpfulness / r.helpfulness, c.relevance / r.relevance, c.accuracy / r.accuracy,
                    c.detail / r.detail, c.overall / r.overall},
              1.0);
  }
  return divide(out, static_cast<double>(candidate.size()));
}

ReasoningScores relative_score(const std::vector<ReasoningScores>& candidate,
                               const std::vector<ReasoningScores>& reference) {
  if (candidate.size() != reference.size() || candidate.empty()) {
    throw std::invalid_argument("relative_score: need equally many candidate and reference scores");
  }
  ReasoningScores out;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const auto& r = reference[i];
    if (!(r.fidelity > 0 && r.helpfulness > 0)) throw std::invalid_argument("relative_score: reference score must be positive");
    out = add(out, {candidate[i].fidelity / r.fidelity, candidate[i].helpfulness / r.helpfulness}, 1.0);
  }
  return divide(out, static_cast<double>(candidate.size()));
}

}  // namespace molllama::eval
