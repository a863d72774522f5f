#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curator/corpus.hpp"
#include "curator/inference.hpp"
#include "curator/tagger.hpp"

namespace curator {

/// Naturalness measurements for one translation.
struct MetricRecord {
  std::string record_id;
  Direction direction;
  Granularity granularity = Granularity::document;
  std::string system_id;
  PromptVariant variant = PromptVariant::direct;
  double ppl = 1.0;
  double lexical_density = 0.0;
  double length_variety = 0.0;
  std::optional<double> quality;  // [0,1]

  bool operator==(const MetricRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Core metrics

/// exp of the negative mean natural-log probability over tokens that carry a
/// logprob. Tokens without one are skipped.
double perplexity(std::span<const TokenScore> scores);

/// NOUN, PROPN, VERB, ADJ, ADV. AUX is a function word.
constexpr bool is_content_word(Upos tag) {
  return tag == Upos::NOUN || tag == Upos::PROPN || tag == Upos::VERB || tag == Upos::ADJ || tag == Upos::ADV;
}

/// Content words over non-punctuation words.
double lexical_density(std::span<const TaggedToken> tokens);

/// |src - tgt| / src.
double length_variety(std::size_t src_token_count, std::size_t tgt_token_count);

// ---------------------------------------------------------------------------
// Composition

/// Scores the selected translation of `record`. PPL comes from the target
/// text alone; a failing quality estimator leaves `quality` empty.
MetricRecord score_translation(const InferenceClient& scorer, const Tagger& tagger, const ParallelRecord& record,
                               const TranslationSelector& selector, const QualityEstimator* quality = nullptr);

/// Scores every translation of every record matching `selector` (all
/// translations when the selector is empty). Output order follows the corpus.
std::vector<MetricRecord> score_corpus(const InferenceClient& scorer, const Tagger& tagger, const Corpus& corpus,
                                       const TranslationSelector& selector = {},
                                       const QualityEstimator* quality = nullptr);

struct MetricGroupKey {
  std::string direction;
  Granularity granularity = Granularity::document;
  std::string system_id;
  PromptVariant variant = PromptVariant::direct;

  auto operator<=>(const MetricGroupKey&) const = default;
};

MetricGroupKey group_key(const MetricRecord& r);

struct MetricSummary {
  MetricGroupKey key;
  double lexical_density = 0.0;
  double length_variety = 0.0;
  double ppl = 0.0;
  std::optional<double> quality;  // mean over records that have one
  std::size_t n = 0;
};

/// Arithmetic means per (direction, granularity, system, variant), sorted by key.
std::vector<MetricSummary> aggregate_metrics(std::span<const MetricRecord> records);

/// Header `direction,granularity,system,variant,lex,len,ppl,quality,n`.
/// Lex./Len. at 3 decimals, PPL at 1, quality scaled x100 at 1.
std::string metric_table_csv(std::span<const MetricSummary> table);

/// Per-record metrics at full precision, loadable with parse_metric_records_csv.
std::string metric_records_csv(std::span<const MetricRecord> records);
std::vector<MetricRecord> parse_metric_records_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Significance

/// Two-sided paired bootstrap p-value for the mean of b - a. The observed
/// differences are centred to impose the null, resampled `iterations` times,
/// and p = (#{|resampled mean| >= |observed mean|} + 1) / (iterations + 1).
double paired_significance(std::span<const double> a, std::span<const double> b, std::uint64_t seed,
                           int iterations = 10000);

}  // namespace curator
