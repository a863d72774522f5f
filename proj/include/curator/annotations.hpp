#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "curator/error.hpp"

namespace curator {

class Corpus;

/// Error taxonomy of the annotation guideline.
enum class SpanCategory {
  UnnaturalSentenceFlow,
  UnnaturalPhraseFlow,
  CultureSpecificReference,
  SensitiveContent,
  Mistranslation,
  Terminology,
  NonTranslation,
  Others,
};

inline constexpr SpanCategory kAllCategories[] = {
    SpanCategory::UnnaturalSentenceFlow,    SpanCategory::UnnaturalPhraseFlow, SpanCategory::CultureSpecificReference,
    SpanCategory::SensitiveContent,         SpanCategory::Mistranslation,      SpanCategory::Terminology,
    SpanCategory::NonTranslation,           SpanCategory::Others,
};

using CategorySet = std::set<SpanCategory>;

/// Guideline label, e.g. "Unnatural Sentence Flow".
std::string_view to_string(SpanCategory c);
/// Accepts guideline labels and enum names, ignoring case, spaces, '-' and '_'.
std::optional<SpanCategory> parse_category(std::string_view label);
/// The two flow categories that define translationese.
const CategorySet& translationese_categories();

struct AnnotatedSpan {
  std::string annotator_id;
  std::string record_id;
  std::string system_id;
  std::size_t start = 0;  // unicode scalar offsets, [start, end)
  std::size_t end = 0;
  SpanCategory category = SpanCategory::Others;

  bool operator==(const AnnotatedSpan&) const = default;
};

/// One annotated (record, system) translation and who annotated it.
struct AnnotatedDocument {
  std::string record_id;
  std::string system_id;
  std::string direction;  // empty when the export does not say
  std::size_t length = 0;  // unicode scalar values
  std::set<std::string> annotators;
};

struct AnnotationExport {
  std::vector<AnnotatedDocument> documents;  // sorted by (record_id, system_id)
  std::vector<AnnotatedSpan> spans;          // export order
};

/// Parses the annotation platform's JSON task export. When `corpus` is given,
/// translation lengths come from the stored corpus text, which must match the
/// task text.
AnnotationExport parse_annotation_export(const nlohmann::json& tasks, const Corpus* corpus = nullptr);
AnnotationExport parse_annotation_export(const std::filesystem::path& path, const Corpus* corpus = nullptr);

// ---------------------------------------------------------------------------
// Span ratios

/// Length of the union of spans whose category is in `categories`.
/// All spans must share annotator, record and system.
std::size_t merge_spans(std::span<const AnnotatedSpan> spans,
                        const CategorySet& categories = translationese_categories());

double compute_tsr(std::size_t merged_length, std::size_t translation_length);

struct TsrRecord {
  std::string record_id;
  std::string system_id;
  std::string direction;
  std::map<std::string, double> per_annotator;
  double mean_tsr = 0.0;
};

/// One record per annotated document; annotators with no spans contribute 0.
std::vector<TsrRecord> tsr_records(const AnnotationExport& ex,
                                   const CategorySet& categories = translationese_categories());

/// Fraction of values strictly greater than `threshold`.
double proportion_significant(std::span<const double> tsr_values, double threshold = 0.2);

struct SystemTsr {
  std::string system_id;
  std::size_t records = 0;
  double mean_tsr = 0.0;
  double proportion_significant = 0.0;
};

/// Per-system mean over records, sorted by system id.
std::vector<SystemTsr> system_tsr(std::span<const TsrRecord> records, double threshold = 0.2);

// ---------------------------------------------------------------------------
// Category counts and histograms

struct CategoryCount {
  std::size_t count = 0;
  std::size_t annotators = 0;
  double mean_per_annotator() const { return annotators ? static_cast<double>(count) / static_cast<double>(annotators) : 0.0; }
};

/// group label -> category -> raw count (and distinct annotators in the group).
using CategoryTable = std::map<std::string, std::map<SpanCategory, CategoryCount>>;

enum class CountGrouping { system, direction, direction_system };

CategoryTable category_counts(const AnnotationExport& ex, CountGrouping by = CountGrouping::system);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_inclusive = false;  // only the first bin is closed on the left
  std::size_t count = 0;
  double proportion = 0.0;
};

struct TsrHistogram {
  std::vector<HistogramBin> bins;
  double threshold = 0.2;
  double share_above = 0.0;  // proportion with TSR > threshold
};

inline const std::vector<double> kDefaultTsrEdges = {0.0, 0.1, 0.2, 0.4, 1.0};

/// Bins are [e0,e1], (e1,e2], ... ; edges must be strictly increasing and span [0,1].
TsrHistogram tsr_histogram(std::span<const double> values, std::span<const double> edges = kDefaultTsrEdges,
                           double threshold = 0.2);

// ---------------------------------------------------------------------------
// Rankings and agreement

struct RankingRecord {
  std::string annotator_id;
  std::string record_id;
  std::vector<std::string> ranking;  // rank 1 first
};

/// CSV `annotator,record_id,rank1,rank2,...`.
std::vector<RankingRecord> parse_rankings_csv(std::string_view text);

/// Mean rank position per system; every ranking must cover the same systems.
std::map<std::string, double> average_rank(std::span<const RankingRecord> rankings);

/// Kendall tau-a between two strict rankings of the same items.
template <class T>
double kendall_tau(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ParameterError("kendall_tau: length mismatch");
  if (a.size() < 2) throw ParameterError("kendall_tau: need at least 2 items");
  std::map<T, std::size_t> pos_b;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!pos_b.emplace(b[i], i).second) throw ParameterError("kendall_tau: repeated item (ties are not allowed)");
  std::vector<std::size_t> mapped;
  mapped.reserve(a.size());
  std::set<T> seen;
  for (const auto& item : a) {
    auto it = pos_b.find(item);
    if (it == pos_b.end() || !seen.insert(item).second)
      throw ParameterError("kendall_tau: inputs are not permutations of the same items");
    mapped.push_back(it->second);
  }
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < mapped.size(); ++i)
    for (std::size_t j = i + 1; j < mapped.size(); ++j) (mapped[i] < mapped[j] ? concordant : discordant)++;
  const auto n = static_cast<double>(a.size());
  return static_cast<double>(concordant - discordant) / (n * (n - 1) / 2.0);
}

template <class T>
double kendall_tau(const std::vector<T>& a, const std::vector<T>& b) {
  return kendall_tau(std::span<const T>(a), std::span<const T>(b));
}

struct AgreementRow {
  std::string annotator_a;
  std::string annotator_b;
  std::size_t records = 0;
  double mean_tau = 0.0;
};

/// Mean tau per annotator pair over the records both ranked.
std::vector<AgreementRow> pairwise_agreement(std::span<const RankingRecord> rankings);

}  // namespace curator
