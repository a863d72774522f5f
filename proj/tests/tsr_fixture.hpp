#pragma once

// Annotation export: 5 documents x 2 systems x 3 annotators, with span
// unions worked out by hand in the comments below.

#include <json.hpp>

#include <string>
#include <vector>

#include "curator/corpus.hpp"

namespace testing::tsr_fixture {

struct Span {
  int start, end;
  const char* label;
};

struct Doc {
  const char* record_id;
  const char* system;
  const char* direction;
  int length;
  std::vector<Span> a1, a2, a3;
};

inline constexpr const char* USF = "Unnatural Sentence Flow";
inline constexpr const char* UPF = "Unnatural Phrase Flow";

// clang-format off
inline const std::vector<Doc>& docs() {
  static const std::vector<Doc> d = {
    // sft
    {"d1", "sft", "en-zh", 40,  {{0, 10, USF}, {5, 15, UPF}},          // union 15
                                {{20, 30, UPF}, {0, 40, "Mistranslation"}}, // 10
                                {{0, 8, USF}}},                         // 8
    {"d2", "sft", "en-zh", 50,  {{0, 25, USF}},                         // 25
                                {{0, 10, USF}, {10, 20, USF}},          // 20, touching
                                {{40, 50, UPF}}},                       // 10
    {"d3", "sft", "en-zh", 20,  {},                                     // 0
                                {{0, 5, "Terminology"}},                // 0
                                {{0, 2, UPF}}},                         // 2
    {"d4", "sft", "de-en", 80,  {{0, 40, USF}, {10, 20, UPF}},          // 40, nested
                                {{0, 8, UPF}, {72, 80, UPF}},           // 16
                                {{0, 80, USF}}},                        // 80
    {"d5", "sft", "de-en", 100, {{10, 20, UPF}, {30, 40, UPF}, {35, 50, USF}},  // 10 + 20
                                {{0, 100, "Others"}},                   // 0
                                {{0, 15, UPF}}},                        // 15
    // polished
    {"d1", "polished", "en-zh", 40,  {{0, 4, UPF}}, {}, {{30, 40, USF}}},          // 4, 0, 10
    {"d2", "polished", "en-zh", 50,  {}, {}, {}},                                 // 0, 0, 0
    {"d3", "polished", "en-zh", 20,  {{0, 20, USF}}, {{0, 10, UPF}, {5, 20, UPF}}, {{0, 20, "Mistranslation"}}},  // 20, 20, 0
    {"d4", "polished", "de-en", 80,  {{0, 8, UPF}}, {{0, 8, UPF}}, {{0, 8, UPF}}},  // 8, 8, 8
    {"d5", "polished", "de-en", 100, {{0, 20, USF}}, {{0, 20, USF}}, {{0, 20, USF}}},  // exactly 0.2
  };
  return d;
}
// clang-format on

/// Hand-computed per-document mean TSR: sum of unions / (length * 3).
struct Expected {
  const char* record_id;
  const char* system;
  double mean_tsr;
};

inline const std::vector<Expected>& expected() {
  static const std::vector<Expected> e = {
      {"d1", "sft", 33.0 / 120.0},      {"d2", "sft", 55.0 / 150.0},     {"d3", "sft", 2.0 / 60.0},
      {"d4", "sft", 136.0 / 240.0},     {"d5", "sft", 45.0 / 300.0},     {"d1", "polished", 14.0 / 120.0},
      {"d2", "polished", 0.0},          {"d3", "polished", 40.0 / 60.0}, {"d4", "polished", 24.0 / 240.0},
      {"d5", "polished", 60.0 / 300.0},
  };
  return e;
}

// system means and share of documents with TSR > 0.2
inline const double kSftMean = (33.0 / 120 + 55.0 / 150 + 2.0 / 60 + 136.0 / 240 + 45.0 / 300) / 5;  // 0.278333...
inline const double kSftShare = 3.0 / 5;       // d1 0.275, d2 0.367, d4 0.567
inline const double kPolishedMean = (14.0 / 120 + 0 + 40.0 / 60 + 24.0 / 240 + 60.0 / 300) / 5;  // 0.216666...
inline const double kPolishedShare = 1.0 / 5;  // d3 only; d5 sits exactly on 0.2

/// Translation text of `length` unicode scalars; multi-byte so byte offsets would be wrong.
inline std::string text_for(const Doc& d) {
  std::string out;
  const bool zh = std::string(d.direction) == "en-zh";
  const std::string unit = zh ? "译" : "ü";
  for (int i = 0; i < d.length; ++i) out += (i % 2 == 0) ? unit : std::string(1, static_cast<char>('a' + (i / 2) % 26));
  // tag the system so the two systems' texts differ
  out.replace(out.size() - 1, 1, std::string(d.system).substr(0, 1));
  return out;
}

inline nlohmann::json export_json() {
  using nlohmann::json;
  json tasks = json::array();
  int task_id = 100;
  for (const auto& d : docs()) {
    json annotations = json::array();
    const std::vector<Span>* per[] = {&d.a1, &d.a2, &d.a3};
    for (int a = 0; a < 3; ++a) {
      json result = json::array();
      for (const auto& s : *per[a])
        result.push_back({{"from_name", "label"},
                          {"to_name", "text"},
                          {"type", "labels"},
                          {"value", {{"start", s.start}, {"end", s.end}, {"labels", {s.label}}}}});
      // a rating widget without labels must be ignored
      result.push_back({{"from_name", "fluency"}, {"type", "rating"}, {"value", {{"rating", 3}}}});
      annotations.push_back({{"id", task_id * 10 + a}, {"completed_by", {{"email", "a" + std::to_string(a + 1) + "@lab"}}},
                             {"was_cancelled", false}, {"result", result}});
    }
    // a cancelled annotation by a fourth person contributes nothing
    annotations.push_back({{"completed_by", {{"email", "late@lab"}}}, {"was_cancelled", true},
                           {"result", json::array({{{"value", {{"start", 0}, {"end", 1}, {"labels", {USF}}}}}})}});
    tasks.push_back({{"id", task_id++},
                     {"data", {{"record_id", d.record_id}, {"system_id", d.system}, {"direction", d.direction}, {"text", text_for(d)}}},
                     {"annotations", annotations}});
  }
  return tasks;
}

/// Corpus holding both systems' texts for the five records.
inline curator::Corpus corpus() {
  std::vector<curator::ParallelRecord> records;
  for (const auto& d : docs()) {
    curator::ParallelRecord* rec = nullptr;
    for (auto& r : records)
      if (r.id == d.record_id) rec = &r;
    if (!rec) {
      const std::string dir = d.direction;
      curator::ParallelRecord r;
      r.id = d.record_id;
      r.direction = curator::Direction::parse(dir);
      r.granularity = curator::Granularity::document;
      r.source_text = std::string("source of ") + d.record_id;
      records.push_back(std::move(r));
      rec = &records.back();
    }
    rec->translations.push_back({d.system, curator::PromptVariant::direct, text_for(d)});
  }
  return curator::Corpus(std::move(records));
}

}  // namespace testing::tsr_fixture
