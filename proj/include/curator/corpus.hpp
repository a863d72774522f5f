#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace curator {

class Tagger;

// ---------------------------------------------------------------------------
// Languages and directions

struct Language {
  std::string code;  // ISO-639-1
  std::string name;  // English display name, used in prompts
};

const std::vector<Language>& language_registry();
bool is_known_language(std::string_view code);
/// Display name for a registered code; throws Error for unknown codes.
const std::string& language_name(std::string_view code);

struct Direction {
  std::string source_lang;
  std::string target_lang;

  /// Validated constructor: both codes registered and distinct.
  static Direction make(std::string source, std::string target);
  /// Parses "en-zh".
  static Direction parse(std::string_view key);

  std::string key() const { return source_lang + "-" + target_lang; }
  auto operator<=>(const Direction&) const = default;
};

enum class Granularity { document, sentence };

enum class PromptVariant { direct, specified, polishing, reference, reference_original };

std::string_view to_string(Granularity g);
std::string_view to_string(PromptVariant v);
Granularity parse_granularity(std::string_view s);
PromptVariant parse_variant(std::string_view s);

// ---------------------------------------------------------------------------
// Records

struct Translation {
  std::string system_id;
  PromptVariant variant = PromptVariant::reference;
  std::string text;

  bool operator==(const Translation&) const = default;
};

struct ParallelRecord {
  std::string id;
  Direction direction;
  std::string domain;  // empty when unlabelled
  Granularity granularity = Granularity::document;
  std::string source_text;
  std::vector<Translation> translations;

  const Translation* find(std::string_view system_id, PromptVariant variant) const;
  Translation* find(std::string_view system_id, PromptVariant variant);
  /// All translations carrying the given variant.
  std::vector<const Translation*> with_variant(PromptVariant variant) const;

  bool operator==(const ParallelRecord&) const = default;
};

/// Picks one translation out of a record.
struct TranslationSelector {
  std::optional<std::string> system_id;
  std::optional<PromptVariant> variant;

  /// Throws Error("translation not found ...") when nothing or more than one matches.
  const Translation& select(const ParallelRecord& record) const;
  std::string describe() const;
};

/// Immutable, validated collection of records. Safe to share across readers.
class Corpus {
 public:
  Corpus() = default;
  /// Validates every record invariant; throws Error listing all violations.
  explicit Corpus(std::vector<ParallelRecord> records);

  const std::vector<ParallelRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ParallelRecord* find(std::string_view id) const;
  std::vector<Direction> directions() const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::vector<ParallelRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Ingestion and persistence

enum class CorpusSchema { parallel_jsonl, tsv_pairs };
CorpusSchema parse_schema(std::string_view s);

struct IngestOptions {
  /// Required for tsv-pairs, which carries no language labels.
  std::optional<Direction> direction;
  Granularity granularity = Granularity::sentence;
  std::string domain;
};

Corpus ingest_corpus(const std::filesystem::path& path, CorpusSchema schema, const IngestOptions& opts = {});
/// Same as ingest_corpus for parallel-jsonl, but from memory. `source_name`
/// seeds synthesized ids.
Corpus parse_corpus_jsonl(std::string_view text, std::string_view source_name);

/// One JSON object per line, keys in schema order.
std::string serialize_record(const ParallelRecord& record);
std::string export_jsonl(const Corpus& corpus);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Statistics and splitting

struct CorpusStats {
  Direction direction;
  std::size_t record_count = 0;
  double avg_source_tokens = 0.0;
  std::map<std::string, std::size_t> domains;
};

/// Per-direction summary. Source tokens come from the tagger's tokenization.
std::vector<CorpusStats> corpus_stats(const Corpus& corpus, const Tagger& tagger);
std::string stats_csv(const std::vector<CorpusStats>& stats);

/// floor(p * n) with tolerance for binary rounding of decimal proportions.
std::size_t proportion_floor(double p, std::size_t n);

struct SplitSpec {
  double dev_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct CorpusSplit {
  Corpus train;
  Corpus dev;
};

/// Stratified by direction; the dev set holds exactly floor(dev_fraction * N)
/// records. Both outputs keep the input order.
CorpusSplit split_train_dev(const Corpus& corpus, const SplitSpec& spec);

}  // namespace curator
