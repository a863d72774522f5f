#include "curator/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <tuple>

#include "curator/corpus.hpp"
#include "curator/csv.hpp"
#include "curator/text.hpp"

namespace curator {

using nlohmann::json;

namespace {

std::string normalize_label(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::string json_scalar_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) return exact(j.get<double>());
  return {};
}

std::string annotator_of(const json& annotation) {
  for (const char* key : {"annotator", "completed_by"}) {
    auto it = annotation.find(key);
    if (it == annotation.end() || it->is_null()) continue;
    if (it->is_object()) {
      for (const char* sub : {"email", "username", "id"})
        if (auto s = it->find(sub); s != it->end() && !s->is_null()) return json_scalar_string(*s);
    } else if (auto s = json_scalar_string(*it); !s.empty()) {
      return s;
    }
  }
  return {};
}

std::string string_field(const json& data, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (auto it = data.find(k); it != data.end() && !it->is_null()) return json_scalar_string(*it);
  return {};
}

std::size_t offset_of(const json& v, const char* key, const std::string& record_id) {
  auto it = v.find(key);
  if (it == v.end() || !it->is_number_integer() || it->get<long long>() < 0)
    throw Error("record '" + record_id + "': span `" + key + "` must be a non-negative integer");
  return static_cast<std::size_t>(it->get<long long>());
}

}  // namespace

std::string_view to_string(SpanCategory c) {
  switch (c) {
    case SpanCategory::UnnaturalSentenceFlow: return "Unnatural Sentence Flow";
    case SpanCategory::UnnaturalPhraseFlow: return "Unnatural Phrase Flow";
    case SpanCategory::CultureSpecificReference: return "Culture-specific Reference";
    case SpanCategory::SensitiveContent: return "Sensitive Content";
    case SpanCategory::Mistranslation: return "Mistranslation";
    case SpanCategory::Terminology: return "Terminology";
    case SpanCategory::NonTranslation: return "Non-translation";
    case SpanCategory::Others: return "Others";
  }
  return "?";
}

std::optional<SpanCategory> parse_category(std::string_view label) {
  const auto key = normalize_label(label);
  for (auto c : kAllCategories)
    if (normalize_label(to_string(c)) == key) return c;
  return std::nullopt;
}

const CategorySet& translationese_categories() {
  static const CategorySet set = {SpanCategory::UnnaturalSentenceFlow, SpanCategory::UnnaturalPhraseFlow};
  return set;
}

// ---------------------------------------------------------------------------

AnnotationExport parse_annotation_export(const json& tasks, const Corpus* corpus) {
  if (!tasks.is_array()) throw Error("annotation export must be a JSON array of tasks");
  std::map<std::pair<std::string, std::string>, AnnotatedDocument> docs;
  AnnotationExport out;

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const auto& task = tasks[ti];
    const auto task_label = "task #" + std::to_string(ti + 1) +
                            (task.contains("id") ? " (id " + json_scalar_string(task["id"]) + ")" : "");
    auto data_it = task.find("data");
    if (data_it == task.end() || !data_it->is_object()) throw Error(task_label + ": missing task metadata `data`");
    const auto& data = *data_it;
    const auto record_id = string_field(data, {"record_id"});
    const auto system_id = string_field(data, {"system_id", "system"});
    auto text_it = data.find("text");
    if (text_it == data.end()) text_it = data.find("translation");
    if (record_id.empty() || system_id.empty() || text_it == data.end() || !text_it->is_string())
      throw Error(task_label + ": missing task metadata (record_id, system_id and text are required)");
    const auto text = text_it->get<std::string>();

    std::size_t length = utf8_length(text);
    std::string direction = string_field(data, {"direction"});
    if (direction.empty()) {
      auto s = string_field(data, {"src_lang"}), t = string_field(data, {"tgt_lang"});
      if (!s.empty() && !t.empty()) direction = s + "-" + t;
    }
    if (corpus) {
      const auto* rec = corpus->find(record_id);
      if (!rec) throw Error(task_label + ": record '" + record_id + "' is not in the corpus");
      const Translation* match = nullptr;
      bool system_seen = false;
      for (const auto& t : rec->translations) {
        if (t.system_id != system_id) continue;
        system_seen = true;
        if (t.text == text) match = &t;
      }
      if (!match)
        throw Error(task_label + ": record '" + record_id + "' " +
                    (system_seen ? "has different text for system '" : "has no translation from system '") +
                    system_id + "'");
      length = utf8_length(match->text);
      direction = rec->direction.key();
    }

    auto& doc = docs[{record_id, system_id}];
    if (doc.record_id.empty()) {
      doc.record_id = record_id;
      doc.system_id = system_id;
      doc.length = length;
      doc.direction = direction;
    } else if (doc.length != length) {
      throw Error(task_label + ": record '" + record_id + "' appears with two different texts");
    }

    auto ann_it = task.find("annotations");
    if (ann_it == task.end()) continue;
    for (std::size_t ai = 0; ai < ann_it->size(); ++ai) {
      const auto& ann = (*ann_it)[ai];
      if (ann.value("was_cancelled", false)) continue;
      const auto annotator = annotator_of(ann);
      if (annotator.empty()) throw Error(task_label + ": annotation #" + std::to_string(ai + 1) + " has no annotator id");
      doc.annotators.insert(annotator);
      auto res_it = ann.find("result");
      if (res_it == ann.end()) continue;
      for (const auto& item : *res_it) {
        auto v = item.find("value");
        if (v == item.end() || !v->is_object()) continue;
        auto labels = v->find("labels");
        if (labels == v->end() || !labels->is_array() || labels->empty()) continue;  // comments, ratings
        const auto label = (*labels)[0].get<std::string>();
        auto category = parse_category(label);
        if (!category) throw Error("record '" + record_id + "': unknown category label '" + label + "'");
        AnnotatedSpan span{annotator, record_id, system_id, offset_of(*v, "start", record_id),
                           offset_of(*v, "end", record_id), *category};
        if (span.start >= span.end || span.end > length)
          throw Error("record '" + record_id + "' system '" + system_id + "': span [" + std::to_string(span.start) +
                      "," + std::to_string(span.end) + ") exceeds text bounds (length " + std::to_string(length) + ")");
        out.spans.push_back(std::move(span));
      }
    }
  }
  for (auto& [key, doc] : docs) out.documents.push_back(std::move(doc));
  return out;
}

AnnotationExport parse_annotation_export(const std::filesystem::path& path, const Corpus* corpus) {
  json tasks;
  try {
    tasks = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return parse_annotation_export(tasks, corpus);
}

// ---------------------------------------------------------------------------

std::size_t merge_spans(std::span<const AnnotatedSpan> spans, const CategorySet& categories) {
  if (spans.empty()) return 0;
  const auto& first = spans.front();
  std::vector<std::pair<std::size_t, std::size_t>> intervals;
  for (const auto& s : spans) {
    if (s.annotator_id != first.annotator_id || s.record_id != first.record_id || s.system_id != first.system_id)
      throw ParameterError("merge_spans: spans must share annotator, record and system");
    if (categories.count(s.category)) intervals.emplace_back(s.start, s.end);
  }
  std::sort(intervals.begin(), intervals.end());
  std::size_t total = 0;
  std::size_t cur_start = 0, cur_end = 0;
  bool open = false;
  for (const auto& [s, e] : intervals) {
    if (open && s <= cur_end) {
      cur_end = std::max(cur_end, e);
      continue;
    }
    if (open) total += cur_end - cur_start;
    cur_start = s;
    cur_end = e;
    open = true;
  }
  if (open) total += cur_end - cur_start;
  return total;
}

double compute_tsr(std::size_t merged_length, std::size_t translation_length) {
  if (translation_length == 0) throw Error("compute_tsr: zero-length translation");
  if (merged_length > translation_length) throw Error("compute_tsr: span union exceeds translation length");
  return static_cast<double>(merged_length) / static_cast<double>(translation_length);
}

std::vector<TsrRecord> tsr_records(const AnnotationExport& ex, const CategorySet& categories) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<AnnotatedSpan>> by_group;
  for (const auto& s : ex.spans) by_group[{s.record_id, s.system_id, s.annotator_id}].push_back(s);

  std::vector<TsrRecord> out;
  for (const auto& doc : ex.documents) {
    if (doc.annotators.empty()) continue;
    TsrRecord rec{doc.record_id, doc.system_id, doc.direction, {}, 0.0};
    // Every annotator shares the denominator, so the mean is one exact division;
    // summing rounded ratios would push e.g. three 0.2s above the 0.2 threshold.
    std::size_t merged_total = 0;
    for (const auto& annotator : doc.annotators) {
      auto it = by_group.find({doc.record_id, doc.system_id, annotator});
      const std::size_t merged = it == by_group.end() ? 0 : merge_spans(it->second, categories);
      rec.per_annotator[annotator] = compute_tsr(merged, doc.length);
      merged_total += merged;
    }
    rec.mean_tsr = static_cast<double>(merged_total) / static_cast<double>(doc.length * doc.annotators.size());
    out.push_back(std::move(rec));
  }
  return out;
}

double proportion_significant(std::span<const double> tsr_values, double threshold) {
  if (tsr_values.empty()) throw Error("proportion_significant: empty list");
  const auto above = std::count_if(tsr_values.begin(), tsr_values.end(), [&](double v) { return v > threshold; });
  return static_cast<double>(above) / static_cast<double>(tsr_values.size());
}

std::vector<SystemTsr> system_tsr(std::span<const TsrRecord> records, double threshold) {
  std::map<std::string, std::vector<double>> by_system;
  for (const auto& r : records) by_system[r.system_id].push_back(r.mean_tsr);
  std::vector<SystemTsr> out;
  for (const auto& [system, values] : by_system) {
    double sum = 0.0;
    for (double v : values) sum += v;
    out.push_back({system, values.size(), sum / static_cast<double>(values.size()),
                   proportion_significant(values, threshold)});
  }
  return out;
}

// ---------------------------------------------------------------------------

CategoryTable category_counts(const AnnotationExport& ex, CountGrouping by) {
  std::map<std::pair<std::string, std::string>, std::string> direction_of;
  for (const auto& d : ex.documents) direction_of[{d.record_id, d.system_id}] = d.direction;
  auto label = [&](const std::string& record, const std::string& system) {
    const auto& dir = direction_of[{record, system}];
    switch (by) {
      case CountGrouping::system: return system;
      case CountGrouping::direction: return dir.empty() ? std::string("(unknown)") : dir;
      case CountGrouping::direction_system: return (dir.empty() ? std::string("(unknown)") : dir) + "/" + system;
    }
    return system;
  };

  std::map<std::string, std::set<std::string>> annotators;
  for (const auto& d : ex.documents) {
    auto& set = annotators[label(d.record_id, d.system_id)];
    set.insert(d.annotators.begin(), d.annotators.end());
  }
  CategoryTable table;
  for (const auto& [group, set] : annotators)
    for (auto c : kAllCategories) table[group][c].annotators = set.size();
  for (const auto& s : ex.spans) ++table[label(s.record_id, s.system_id)][s.category].count;
  return table;
}

TsrHistogram tsr_histogram(std::span<const double> values, std::span<const double> edges, double threshold) {
  if (edges.size() < 2) throw ParameterError("tsr_histogram: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ParameterError("tsr_histogram: edges must be strictly increasing");
  if (edges.front() > 0.0 || edges.back() < 1.0) throw ParameterError("tsr_histogram: edges must cover [0,1]");
  if (values.empty()) throw Error("tsr_histogram: no values");

  TsrHistogram h;
  h.threshold = threshold;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) h.bins.push_back({edges[i], edges[i + 1], i == 0, 0, 0.0});
  for (double v : values) {
    if (!(v >= edges.front() && v <= edges.back())) throw Error("tsr_histogram: value " + exact(v) + " outside edges");
    // first bin whose upper edge is >= v
    auto it = std::lower_bound(edges.begin() + 1, edges.end(), v);
    ++h.bins[static_cast<std::size_t>(it - (edges.begin() + 1))].count;
  }
  const auto n = static_cast<double>(values.size());
  for (auto& b : h.bins) b.proportion = static_cast<double>(b.count) / n;
  h.share_above = proportion_significant(values, threshold);
  return h;
}

// ---------------------------------------------------------------------------

std::vector<RankingRecord> parse_rankings_csv(std::string_view text) {
  const auto table = csv::parse(text, /*ragged=*/true);
  if (table.header.size() < 4 || table.header[0] != "annotator" || table.header[1] != "record_id")
    throw Error("rankings CSV header must be annotator,record_id,rank1,rank2,...");
  std::vector<RankingRecord> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != table.header.size())
      throw Error("rankings CSV row " + std::to_string(i + 2) + ": expected " + std::to_string(table.header.size()) +
                  " fields");
    RankingRecord r{row[0], row[1], {row.begin() + 2, row.end()}};
    std::set<std::string> uniq(r.ranking.begin(), r.ranking.end());
    if (uniq.size() != r.ranking.size() || uniq.count(""))
      throw Error("rankings CSV row " + std::to_string(i + 2) + ": ranking is not a permutation of systems");
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, double> average_rank(std::span<const RankingRecord> rankings) {
  if (rankings.empty()) throw Error("average_rank: no rankings");
  const std::set<std::string> systems(rankings.front().ranking.begin(), rankings.front().ranking.end());
  std::map<std::string, double> sum;
  for (const auto& r : rankings) {
    const std::set<std::string> these(r.ranking.begin(), r.ranking.end());
    if (these != systems || these.size() != r.ranking.size())
      throw Error("average_rank: inconsistent system sets (annotator '" + r.annotator_id + "', record '" + r.record_id +
                  "')");
    for (std::size_t i = 0; i < r.ranking.size(); ++i) sum[r.ranking[i]] += static_cast<double>(i + 1);
  }
  for (auto& [system, s] : sum) s /= static_cast<double>(rankings.size());
  return sum;
}

std::vector<AgreementRow> pairwise_agreement(std::span<const RankingRecord> rankings) {
  std::map<std::string, std::map<std::string, const RankingRecord*>> by_annotator;
  for (const auto& r : rankings) by_annotator[r.annotator_id][r.record_id] = &r;
  std::vector<AgreementRow> out;
  for (auto a = by_annotator.begin(); a != by_annotator.end(); ++a) {
    for (auto b = std::next(a); b != by_annotator.end(); ++b) {
      AgreementRow row{a->first, b->first, 0, 0.0};
      double sum = 0.0;
      for (const auto& [record, ra] : a->second) {
        auto it = b->second.find(record);
        if (it == b->second.end()) continue;
        sum += kendall_tau(ra->ranking, it->second->ranking);
        ++row.records;
      }
      if (row.records == 0) continue;
      row.mean_tau = sum / static_cast<double>(row.records);
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace curator
