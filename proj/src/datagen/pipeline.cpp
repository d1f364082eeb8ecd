#include "molllama/datagen/pipeline.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "molllama/chem/corpus.hpp"
#include "molllama/prompts.hpp"
#include "molllama/rng.hpp"

namespace molllama::datagen {
namespace {

using nlohmann::json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool iequals_at(std::string_view text, std::size_t at, std::string_view word) {
  if (at + word.size() > text.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(text[at + k])) != word[k]) return false;
  }
  return true;
}

struct Marker {
  std::size_t start;    // First byte of the marker.
  std::size_t content;  // First byte after the colon.
  Role role;
};

std::vector<Marker> find_markers(std::string_view text, bool line_start) {
  std::vector<Marker> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool boundary = i == 0 || (line_start ? text[i - 1] == '\n'
                                                : std::isspace(static_cast<unsigned char>(text[i - 1])) != 0);
    if (!boundary) continue;
    std::size_t j = i;
    if (line_start) {
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
    }
    Role role;
    std::size_t len;
    if (iequals_at(text, j, "user")) {
      role = Role::kUser;
      len = 4;
    } else if (iequals_at(text, j, "assistant")) {
      role = Role::kAssistant;
      len = 9;
    } else {
      continue;
    }
    std::size_t k = j + len;
    while (k < text.size() && (text[k] == ' ' || text[k] == '\t')) ++k;
    if (k < text.size() && text[k] == ':') {
      out.push_back({j, k + 1, role});
      i = k;
    }
  }
  return out;
}

std::string sample_text(const InstructionSample& s) {
  if (s.data_type != DataType::kConversation) {
    std::string out;
    for (const auto& m : s.messages) {
      if (m.role != Role::kAssistant) continue;
      if (!out.empty()) out += "\n";
      out += m.text;
    }
    return out;
  }
  std::string out;
  for (const auto& m : s.messages) {
    if (m.role == Role::kSystem) continue;
    if (!out.empty()) out += "\n";
    out += (m.role == Role::kUser ? "User: " : "Assistant: ") + m.text;
  }
  return out;
}

json ledger_entry(const std::string& key, const InstructionSample& s) {
  json j = json::parse(sample_to_json_line(s));
  j["generator"] = s.generator;
  j["timestamp"] = s.timestamp;
  j["malformed"] = s.malformed;
  j["error"] = s.error;
  return json{{"key", key}, {"status", s.error.empty() ? "done" : "failed"}, {"sample", j}};
}

std::unordered_map<std::string, InstructionSample> read_ledger(const std::filesystem::path& path) {
  std::unordered_map<std::string, InstructionSample> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;  // A run interrupted mid-write leaves a partial last line.
    }
    if (j.value("status", "") != "done") {
      done.erase(j.value("key", ""));
      continue;
    }
    const json& sj = j.at("sample");
    InstructionSample s = sample_from_json_line(sj.dump());
    s.generator = sj.value("generator", "");
    s.timestamp = sj.value("timestamp", "");
    s.malformed = sj.value("malformed", false);
    done[j.at("key").get<std::string>()] = std::move(s);
  }
  return done;
}

}  // namespace

PromptKind prompt_kind(DataType type) {
  switch (type) {
    case DataType::kStructural:
      return PromptKind::kStructural;
    case DataType::kChemFeature:
      return PromptKind::kChemFeature;
    case DataType::kBioFeature:
      return PromptKind::kBioFeature;
    case DataType::kConversation:
      return PromptKind::kConversation;
  }
  return PromptKind::kStructural;
}

std::string filter_level(DataType type) {
  switch (type) {
    case DataType::kStructural:
      return "structural";
    case DataType::kChemFeature:
      return "chemical";
    case DataType::kBioFeature:
      return "biological";
    case DataType::kConversation:
      return "structural, chemical, and biological";
  }
  return "structural";
}

std::vector<ChatMessage> render_prompt(PromptKind kind, const chem::MoleculeRecord& record,
                                       std::optional<std::string> level) {
  if (record.iupac.empty()) throw DataError("record " + record.id + " has no IUPAC name");
  const bool needs_description = kind != PromptKind::kStructural;
  if (needs_description && record.description.empty()) {
    throw DataError("record " + record.id + " has no description");
  }
  const prompts::Template* t = nullptr;
  std::string lvl;
  switch (kind) {
    case PromptKind::kStructural:
      t = &prompts::structural_generation();
      break;
    case PromptKind::kConversation:
      t = &prompts::conversation_generation();
      break;
    case PromptKind::kChemFeature:
    case PromptKind::kBioFeature:
      t = &prompts::feature_generation();
      lvl = level.value_or(kind == PromptKind::kChemFeature ? "chemical" : "biological");
      if (lvl != "chemical" && lvl != "biological") throw std::invalid_argument("unknown feature level '" + lvl + "'");
      break;
    case PromptKind::kFilter:
      t = &prompts::filtering();
      lvl = level.value_or("structural");
      if (lvl != "structural" && lvl != "chemical" && lvl != "biological" &&
          lvl != filter_level(DataType::kConversation)) {
        throw std::invalid_argument("unknown filter level '" + lvl + "'");
      }
      break;
  }
  const std::map<std::string, std::string> values{
      {"level", lvl}, {"IUPAC name", record.iupac}, {"Description", record.description}};
  return {{Role::kSystem, prompts::fill(t->system, values)}, {Role::kUser, prompts::fill(t->user, values)}};
}

std::optional<std::vector<ChatMessage>> split_conversation(const std::string& text) {
  auto markers = find_markers(text, true);
  if (markers.size() < 2) markers = find_markers(text, false);
  if (markers.size() < 2) return std::nullopt;
  std::vector<ChatMessage> turns;
  for (std::size_t k = 0; k < markers.size(); ++k) {
    const std::size_t end = k + 1 < markers.size() ? markers[k + 1].start : text.size();
    std::string body = trim(std::string_view(text).substr(markers[k].content, end - markers[k].content));
    if (body.empty()) return std::nullopt;
    const Role expected = k % 2 == 0 ? Role::kUser : Role::kAssistant;
    if (markers[k].role != expected) return std::nullopt;
    turns.push_back({markers[k].role, std::move(body)});
  }
  if (turns.back().role != Role::kAssistant) return std::nullopt;
  return turns;
}

void parallel_for(std::size_t n, int max_parallel, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, max_parallel)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<InstructionSample> generate_samples(const LLMClient& client, const std::vector<chem::MoleculeRecord>& records,
                                                DataType type, const GenerationOptions& options) {
  std::vector<InstructionSample> out(records.size());
  std::unordered_map<std::string, InstructionSample> done;
  std::ofstream ledger;
  if (options.ledger) {
    if (std::filesystem::exists(*options.ledger)) done = read_ledger(*options.ledger);
    ledger.open(*options.ledger, std::ios::app);
    if (!ledger) throw DataError("cannot open ledger " + options.ledger->string());
  }
  std::mutex ledger_mu;
  const std::string generator = client.provider ? client.provider->model_name() : "";

  parallel_for(records.size(), client.max_parallel, [&](std::size_t i) {
    const auto& rec = records[i];
    const std::string key = std::string(data_type_name(type)) + "/" + rec.id;
    if (const auto it = done.find(key); it != done.end()) {
      out[i] = it->second;
      return;
    }
    InstructionSample s;
    s.molecule_id = rec.id;
    s.data_type = type;
    s.generator = generator;
    s.timestamp = utc_now();
    try {
      const std::string text = client.complete({render_prompt(prompt_kind(type), rec), options.temperature});
      if (type == DataType::kConversation) {
        if (auto turns = split_conversation(text)) {
          s.messages = std::move(*turns);
        } else {
          s.malformed = true;
          s.messages = {{Role::kAssistant, text}};
        }
      } else {
        s.messages = {{Role::kAssistant, text}};
      }
    } catch (const std::exception& e) {
      s.error = e.what();
      s.messages.clear();
    }
    if (ledger.is_open()) {
      std::lock_guard lock(ledger_mu);
      ledger << ledger_entry(key, s).dump() << '\n';
      ledger.flush();
    }
    out[i] = std::move(s);
  });
  return out;
}

std::optional<int> parse_filter_score(const std::string& verdict) {
  const auto at = verdict.find("Score:");
  if (at == std::string::npos) return std::nullopt;
  std::size_t k = at + 6;
  while (k < verdict.size() && (verdict[k] == ' ' || verdict[k] == '\t')) ++k;
  if (k >= verdict.size() || verdict[k] < '1' || verdict[k] > '4') return std::nullopt;
  if (k + 1 < verdict.size() && std::isdigit(static_cast<unsigned char>(verdict[k + 1]))) return std::nullopt;
  return verdict[k] - '0';
}

FilterResult judge_filter(const LLMClient& client, const std::vector<InstructionSample>& samples,
                          const std::vector<chem::MoleculeRecord>& records, const FilterOptions& options) {
  std::unordered_map<std::string, const chem::MoleculeRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);

  std::vector<InstructionSample> judged = samples;
  std::vector<std::string> reasons(samples.size());
  std::vector<char> unscored(samples.size(), 0);
  parallel_for(samples.size(), client.max_parallel, [&](std::size_t i) {
    InstructionSample& s = judged[i];
    if (!s.error.empty()) {
      reasons[i] = "generation failed";
      return;
    }
    if (s.malformed) {
      reasons[i] = "malformed";
      return;
    }
    const auto it = by_id.find(s.molecule_id);
    if (it == by_id.end()) {
      reasons[i] = "unknown molecule";
      return;
    }
    chem::MoleculeRecord view = *it->second;
    view.description = sample_text(s);
    std::string verdict;
    try {
      verdict = client.complete({render_prompt(PromptKind::kFilter, view, filter_level(s.data_type)),
                                 options.temperature});
    } catch (const std::exception& e) {
      reasons[i] = std::string("judge failed: ") + e.what();
      return;
    }
    s.judge_score = parse_filter_score(verdict);
    if (!s.judge_score) {
      reasons[i] = "unscored";
      unscored[i] = 1;
    } else if (*s.judge_score != 4) {
      reasons[i] = "score " + std::to_string(*s.judge_score);
    }
  });

  FilterResult result;
  for (std::size_t i = 0; i < judged.size(); ++i) {
    if (reasons[i].empty()) {
      result.kept.push_back(std::move(judged[i]));
    } else {
      result.dropped.push_back({std::move(judged[i]), reasons[i]});
      result.unscored += static_cast<std::size_t>(unscored[i]);
    }
  }
  return result;
}

std::string raw_sample_line(const InstructionSample& s) {
  json j = json::parse(sample_to_json_line(s));
  j["generator"] = s.generator;
  j["malformed"] = s.malformed;
  j["error"] = s.error;
  return j.dump();
}

InstructionSample raw_sample_from_line(const std::string& line) {
  InstructionSample s = sample_from_json_line(line);
  const json j = json::parse(line);
  s.generator = j.value("generator", "");
  s.malformed = j.value("malformed", false);
  s.error = j.value("error", "");
  return s;
}

void write_raw_samples(const std::vector<InstructionSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) out << raw_sample_line(s) << '\n';
}

std::vector<InstructionSample> read_raw_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<InstructionSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(raw_sample_from_line(line));
  }
  return out;
}

AssemblyReport assemble_dataset(const std::vector<InstructionSample>& kept, std::uint64_t seed, std::ostream& out) {
  AssemblyReport report;
  Rng rng(seed);
  for (const auto& s : kept) {
    if (s.judge_score != 4 || !s.error.empty() || s.malformed) {
      ++report.rejected;
      continue;
    }
    InstructionSample a;
    a.molecule_id = s.molecule_id;
    a.data_type = s.data_type;
    a.judge_score = s.judge_score;
    const bool assembled = !s.messages.empty() && s.messages.front().role == Role::kSystem;
    if (!assembled) {
      a.messages.push_back({Role::kSystem, prompts::system_for(s.data_type)});
      const auto& list = prompts::instructions(s.data_type);
      if (s.data_type != DataType::kConversation) {
        if (list.empty()) throw std::logic_error("empty instruction list");
        a.messages.push_back({Role::kUser, list[rng.below(list.size())]});
      }
    }
    a.messages.insert(a.messages.end(), s.messages.begin(), s.messages.end());
    out << sample_to_json_line(a) << '\n';
    ++report.counts[a.data_type];
    ++report.total;
  }
  return report;
}

AssemblyReport assemble_dataset(const std::vector<InstructionSample>& kept, std::uint64_t seed,
                                const std::filesystem::path& out) {
  std::ofstream file(out, std::ios::binary);
  if (!file) throw DataError("cannot write " + out.string());
  return assemble_dataset(kept, seed, file);
}

}  // namespace molllama::datagen
