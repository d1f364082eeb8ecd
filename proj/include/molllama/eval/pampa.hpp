#pragma once

#include <optional>
#include <string>
#include <vector>

#include "molllama/eval/responder.hpp"

namespace molllama::eval {

enum class PampaLabel { kHigh, kLowToModerate };
std::string_view pampa_label_name(PampaLabel l);  // "high" / "low_to_moderate"
PampaLabel pampa_label_from_name(std::string_view name);
std::string pampa_answer_text(PampaLabel l);      // "High permeability." / "Low-to-moderate permeability."

struct PampaItem {
  std::string id;
  chem::MoleculeRecord molecule;
  PampaLabel label = PampaLabel::kHigh;
  std::optional<PampaLabel> prediction;
  std::string response_text;
  bool retried = false;
};

// Line-delimited JSON {id, smiles, label} (optional iupac, description).
std::vector<PampaItem> read_pampa(const std::string& path);

enum class PampaMode { kDefault, kCot, kTaskInfo, kFewShot };
std::string_view pampa_mode_name(PampaMode m);
PampaMode pampa_mode_from_name(std::string_view name);

// Chat for one item. Few-shot places each example as a user turn with its
// molecule and an assistant turn "Final answer: <label text>".
ModelQuery pampa_query(const PampaItem& item, PampaMode mode, const std::vector<PampaItem>& examples = {});

// Label after the last "final answer" (case-insensitive) in the text.
std::optional<PampaLabel> scan_final_answer(const std::string& text);

// Scans the response; on failure continues it once after "Final answer: "
// and scans again.
struct Extraction {
  std::optional<PampaLabel> label;
  bool retried = false;
  std::string continuation;
};
Extraction extract_final_answer(const std::string& response, ResponseModel& model, const ModelQuery& query);

// Generates, extracts and fills prediction / response_text / retried.
PampaItem pampa_predict(ResponseModel& model, const PampaItem& item, PampaMode mode,
                        const std::vector<PampaItem>& examples = {});

struct PampaMetrics {
  std::size_t total = 0;
  std::size_t predicted = 0;
  std::size_t nonconforming = 0;
  double accuracy = 0.0;       // Over predicted items.
  double ratio_high = 0.0;     // Fraction of predictions per label.
  double ratio_low = 0.0;
  PampaLabel minority = PampaLabel::kHigh;
  double label_ratio = 0.0;    // Fraction predicted as the minority label.
  bool all_same = false;       // Every prediction carries one label.
  bool not_applicable = false; // More than 20% nonconforming.
};

// The minority label defaults to the rarer gold label (ties: high).
// Throws std::invalid_argument when no item has a prediction.
PampaMetrics pampa_metrics(const std::vector<PampaItem>& items, std::optional<PampaLabel> minority = std::nullopt);

}  // namespace molllama::eval
