#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curator/corpus.hpp"
#include "curator/inference.hpp"
#include "curator/metrics.hpp"

namespace curator {

// ---------------------------------------------------------------------------
// Prompt templates

struct PromptTemplate {
  PromptVariant variant;
  std::string_view text;  // placeholders: {source_language} {target_language} {source_text} {target_text}
};

/// Template for direct, specified or polishing; throws for other variants.
const PromptTemplate& prompt_template(PromptVariant variant);

/// Single-pass placeholder substitution: text inserted for one placeholder is
/// never rescanned. `target_text` is required for polishing and rejected otherwise.
std::string render_prompt(PromptVariant variant, std::string_view source_language, std::string_view target_language,
                          std::string_view source_text, std::optional<std::string_view> target_text = std::nullopt);

/// Resolves display names from the record's direction.
std::string render_prompt(PromptVariant variant, const ParallelRecord& record,
                          std::optional<std::string_view> target_text = std::nullopt);

/// Recovers {source_text} from a rendered direct prompt, or nullopt if the
/// text does not have the direct template's shape.
std::optional<std::string> extract_source_text(std::string_view rendered, std::string_view source_language,
                                               std::string_view target_language);

// ---------------------------------------------------------------------------
// Jobs

enum class CurationMode { polish, kd, filter };

struct CurationJob {
  CurationMode mode = CurationMode::polish;
  std::optional<EndpointConfig> endpoint;    // polish and kd
  std::optional<double> filter_proportion;   // filter
  std::uint64_t seed = 0;
  double abort_threshold = 0.05;  // terminal-failure rate above which polish/kd abort
  bool force = false;             // overwrite existing kd / re-polish
  std::string kd_system = "kd";

  /// Mode-specific fields must be present exactly when required.
  void validate() const;
};

struct JobFailure {
  std::string record_id;
  std::string message;
};

struct CurationResult {
  Corpus corpus;
  std::size_t attempted = 0;
  std::vector<JobFailure> failures;

  std::string summary_json() const;
};

/// Rewrites every record's reference with the polishing prompt. The original
/// moves to variant "reference-original". Records that fail keep their
/// reference and have no "reference-original".
CurationResult polish_references(const Corpus& corpus, const InferenceClient& client, const CurationJob& job);

/// Adds a direct translation from `job.kd_system` to every record.
CurationResult kd_translate(const Corpus& corpus, const InferenceClient& client, const CurationJob& job);

// ---------------------------------------------------------------------------
// Perplexity filtering

struct RemovedRecord {
  std::string record_id;
  std::string direction;
  double ppl = 0.0;
  std::size_t rank = 0;  // 1 = least natural within its direction
};

struct FilterResult {
  Corpus retained;
  std::vector<RemovedRecord> removed;  // by direction, then rank
};

/// Reference-variant PPL per record id.
std::map<std::string, double> reference_ppl(std::span<const MetricRecord> metrics);

/// Within each direction, drops the floor(p*N) highest-PPL records; equal PPLs
/// go in ascending record_id order.
FilterResult filter_by_perplexity(const Corpus& corpus, const std::map<std::string, double>& ppl, double proportion);

/// CSV `record_id,direction,ppl,rank`.
std::string manifest_csv(std::span<const RemovedRecord> removed);

// ---------------------------------------------------------------------------
// SFT emission

struct SftInstance {
  std::string record_id;
  Direction direction;
  std::string prompt_text;
  std::string completion_text;
};

/// Fine-tuning hyperparameters handed to the external trainer.
struct TrainingConfig {
  int lora_rank = 16;
  double learning_rate = 1e-4;
  double warmup_ratio = 0.1;
  int num_epochs = 3;
  int batch_size = 16;
  std::string checkpoint_selection = "lowest_validation_loss";

  /// Flat `key = value` lines.
  std::string to_kv(std::string_view train_file, std::string_view dev_file) const;
};

/// Direct-prompt instances sorted by record id. Every record must carry the
/// selected translation.
std::vector<SftInstance> build_sft_instances(const Corpus& corpus, const TranslationSelector& target);

/// One `{"id","prompt","completion","direction"}` object per line.
std::string sft_jsonl(std::span<const SftInstance> instances);

struct SftOutputs {
  std::filesystem::path train_file;
  std::optional<std::filesystem::path> dev_file;
  std::filesystem::path config_file;
  std::size_t train_count = 0;
  std::size_t dev_count = 0;
};

/// Writes sft-train.jsonl (plus sft-dev.jsonl when `split` is given) and
/// training-config.txt into `out_dir`.
SftOutputs emit_sft_dataset(const Corpus& corpus, const TranslationSelector& target, const std::filesystem::path& out_dir,
                            const std::optional<SplitSpec>& split = std::nullopt, const TrainingConfig& config = {});

}  // namespace curator
