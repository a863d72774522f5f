#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace curator {

class InferenceClient;

/// Universal POS inventory.
enum class Upos { ADJ, ADP, ADV, AUX, CCONJ, DET, INTJ, NOUN, NUM, PART, PRON, PROPN, PUNCT, SCONJ, SYM, VERB, X };

std::string_view to_string(Upos tag);
std::optional<Upos> parse_upos(std::string_view s);

struct TaggedToken {
  std::string surface;
  Upos upos = Upos::X;

  bool operator==(const TaggedToken&) const = default;
};

using TaggedText = std::vector<TaggedToken>;

/// Word segmentation + UPOS tagging for a language. Implementations must be
/// safe for concurrent calls.
class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<TaggedText> tag(std::string_view lang, const std::vector<std::string>& texts) const = 0;
  virtual std::string describe() const = 0;

  TaggedText tag_one(std::string_view lang, const std::string& text) const;
};

/// Canned tag table loaded from JSON: {"<lang>": {"<text>": [["surface","UPOS"], ...]}}.
/// Unknown texts are an error, which keeps test runs hermetic.
class FixtureTagger final : public Tagger {
 public:
  FixtureTagger() = default;
  static FixtureTagger load(const std::filesystem::path& path);
  static FixtureTagger from_json(const nlohmann::json& j);

  void add(std::string lang, std::string text, TaggedText tokens);
  nlohmann::json to_json() const;

  std::vector<TaggedText> tag(std::string_view lang, const std::vector<std::string>& texts) const override;
  std::string describe() const override { return "fixture-tagger"; }

 private:
  std::map<std::string, std::map<std::string, TaggedText, std::less<>>, std::less<>> table_;
};

/// Client for the scorer sidecar's POST /tag. Batches above 256 texts are split.
class SidecarTagger final : public Tagger {
 public:
  explicit SidecarTagger(std::shared_ptr<const InferenceClient> client) : client_(std::move(client)) {}
  std::vector<TaggedText> tag(std::string_view lang, const std::vector<std::string>& texts) const override;
  std::string describe() const override;

  static constexpr std::size_t kMaxBatch = 256;

 private:
  std::shared_ptr<const InferenceClient> client_;
};

// ---------------------------------------------------------------------------
// Reference-free quality estimation

struct QualityPair {
  std::string src_lang;
  std::string tgt_lang;
  std::string source;
  std::string translation;
};

/// Returns scores in [0,1], one per pair, in order.
class QualityEstimator {
 public:
  virtual ~QualityEstimator() = default;
  virtual std::vector<double> score(const std::vector<QualityPair>& pairs) const = 0;
  virtual std::string describe() const = 0;
};

/// Canned scores from a JSON array of {"source","translation","score"}.
class FixtureQuality final : public QualityEstimator {
 public:
  static FixtureQuality load(const std::filesystem::path& path);
  static FixtureQuality from_json(const nlohmann::json& j);
  void add(std::string source, std::string translation, double score);

  std::vector<double> score(const std::vector<QualityPair>& pairs) const override;
  std::string describe() const override { return "fixture-quality"; }

 private:
  std::map<std::pair<std::string, std::string>, double> table_;
};

/// Client for the scorer sidecar's POST /quality.
class SidecarQuality final : public QualityEstimator {
 public:
  explicit SidecarQuality(std::shared_ptr<const InferenceClient> client) : client_(std::move(client)) {}
  std::vector<double> score(const std::vector<QualityPair>& pairs) const override;
  std::string describe() const override;

 private:
  std::shared_ptr<const InferenceClient> client_;
};

}  // namespace curator
