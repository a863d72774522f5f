#include "curator/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "curator/csv.hpp"
#include "curator/error.hpp"
#include "curator/random.hpp"
#include "curator/tagger.hpp"
#include "curator/text.hpp"

namespace curator {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<Language>& language_registry() {
  static const std::vector<Language> registry = {
      {"en", "English"}, {"zh", "Chinese"},   {"de", "German"}, {"ru", "Russian"},
      {"cs", "Czech"},   {"is", "Icelandic"}, {"fr", "French"}, {"ja", "Japanese"},
  };
  return registry;
}

bool is_known_language(std::string_view code) {
  const auto& reg = language_registry();
  return std::any_of(reg.begin(), reg.end(), [&](const Language& l) { return l.code == code; });
}

const std::string& language_name(std::string_view code) {
  for (const auto& l : language_registry())
    if (l.code == code) return l.name;
  throw Error("unknown language code '" + std::string(code) + "'");
}

Direction Direction::make(std::string source, std::string target) {
  if (!is_known_language(source)) throw Error("unknown language code '" + source + "'");
  if (!is_known_language(target)) throw Error("unknown language code '" + target + "'");
  if (source == target) throw Error("direction source and target are both '" + source + "'");
  return Direction{std::move(source), std::move(target)};
}

Direction Direction::parse(std::string_view key) {
  const auto dash = key.find('-');
  if (dash == std::string_view::npos) throw Error("direction must look like 'en-zh', got '" + std::string(key) + "'");
  return make(std::string(key.substr(0, dash)), std::string(key.substr(dash + 1)));
}

std::string_view to_string(Granularity g) { return g == Granularity::document ? "document" : "sentence"; }

std::string_view to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::direct: return "direct";
    case PromptVariant::specified: return "specified";
    case PromptVariant::polishing: return "polishing";
    case PromptVariant::reference: return "reference";
    case PromptVariant::reference_original: return "reference-original";
  }
  return "?";
}

Granularity parse_granularity(std::string_view s) {
  if (s == "document") return Granularity::document;
  if (s == "sentence") return Granularity::sentence;
  throw Error("unknown granularity '" + std::string(s) + "'");
}

PromptVariant parse_variant(std::string_view s) {
  for (auto v : {PromptVariant::direct, PromptVariant::specified, PromptVariant::polishing, PromptVariant::reference,
                 PromptVariant::reference_original})
    if (to_string(v) == s) return v;
  throw Error("unknown variant '" + std::string(s) + "'");
}

CorpusSchema parse_schema(std::string_view s) {
  if (s == "parallel-jsonl") return CorpusSchema::parallel_jsonl;
  if (s == "tsv-pairs") return CorpusSchema::tsv_pairs;
  throw ParameterError("unknown corpus schema '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

const Translation* ParallelRecord::find(std::string_view system_id, PromptVariant variant) const {
  for (const auto& t : translations)
    if (t.system_id == system_id && t.variant == variant) return &t;
  return nullptr;
}

Translation* ParallelRecord::find(std::string_view system_id, PromptVariant variant) {
  for (auto& t : translations)
    if (t.system_id == system_id && t.variant == variant) return &t;
  return nullptr;
}

std::vector<const Translation*> ParallelRecord::with_variant(PromptVariant variant) const {
  std::vector<const Translation*> out;
  for (const auto& t : translations)
    if (t.variant == variant) out.push_back(&t);
  return out;
}

const Translation& TranslationSelector::select(const ParallelRecord& record) const {
  const Translation* hit = nullptr;
  int matches = 0;
  for (const auto& t : record.translations) {
    if (system_id && t.system_id != *system_id) continue;
    if (variant && t.variant != *variant) continue;
    hit = &t;
    ++matches;
  }
  if (matches == 0) throw Error("translation not found: record '" + record.id + "' has no " + describe());
  if (matches > 1) throw Error("ambiguous selector: record '" + record.id + "' has several " + describe());
  return *hit;
}

std::string TranslationSelector::describe() const {
  std::string s = "translation";
  if (system_id) s += " system=" + *system_id;
  if (variant) s += " variant=" + std::string(to_string(*variant));
  return s;
}

Corpus::Corpus(std::vector<ParallelRecord> records) : records_(std::move(records)) {
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.id.empty()) problems.push_back("record #" + std::to_string(i + 1) + ": empty id");
    if (!index_.emplace(r.id, i).second) problems.push_back("duplicate record id '" + r.id + "'");
    if (r.source_text.empty()) problems.push_back("record '" + r.id + "': empty source_text");
    std::set<std::pair<std::string, PromptVariant>> seen;
    for (const auto& t : r.translations) {
      if (t.text.empty())
        problems.push_back("record '" + r.id + "': empty translation text for system '" + t.system_id + "'");
      if (!seen.emplace(t.system_id, t.variant).second)
        problems.push_back("record '" + r.id + "': duplicate translation (" + t.system_id + ", " +
                           std::string(to_string(t.variant)) + ")");
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid corpus:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(msg);
  }
}

const ParallelRecord* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::vector<Direction> Corpus::directions() const {
  std::set<Direction> dirs;
  for (const auto& r : records_) dirs.insert(r.direction);
  return {dirs.begin(), dirs.end()};
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::string required_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(std::string("missing `") + key + "`");
  if (!it->is_string()) throw Error(std::string("`") + key + "` must be a string");
  return it->get<std::string>();
}

ParallelRecord record_from_json(const json& obj, const std::string& fallback_id) {
  if (!obj.is_object()) throw Error("line is not a JSON object");
  ParallelRecord r;
  if (auto it = obj.find("id"); it != obj.end()) {
    if (!it->is_string() || it->get<std::string>().empty()) throw Error("`id` must be a non-empty string");
    r.id = it->get<std::string>();
  } else {
    r.id = fallback_id;
  }
  r.direction = Direction::make(required_string(obj, "src_lang"), required_string(obj, "tgt_lang"));
  if (obj.contains("domain")) r.domain = required_string(obj, "domain");
  r.granularity = parse_granularity(required_string(obj, "granularity"));
  r.source_text = required_string(obj, "source_text");
  if (r.source_text.empty()) throw Error("`source_text` is empty");
  auto tr = obj.find("translations");
  if (tr == obj.end() || !tr->is_array()) throw Error("missing `translations` array");
  for (const auto& t : *tr) {
    if (!t.is_object()) throw Error("translation entry is not an object");
    Translation out;
    out.system_id = required_string(t, "system");
    out.variant = parse_variant(required_string(t, "variant"));
    out.text = required_string(t, "text");
    if (out.text.empty()) throw Error("translation text for system '" + out.system_id + "' is empty");
    r.translations.push_back(std::move(out));
  }
  return r;
}

[[noreturn]] void throw_line_errors(std::string_view source, const std::vector<std::string>& errors) {
  std::string msg = std::string(source) + ": " + std::to_string(errors.size()) + " malformed line(s)";
  for (const auto& e : errors) msg += "\n  " + e;
  throw Error(msg);
}

Corpus finish(std::vector<ParallelRecord> records, std::string_view source) {
  if (records.empty()) throw Error(std::string(source) + ": empty corpus");
  return Corpus(std::move(records));
}

}  // namespace

Corpus parse_corpus_jsonl(std::string_view text, std::string_view source_name) {
  if (!is_valid_utf8(text)) throw Error(std::string(source_name) + ": file is not valid UTF-8");
  std::vector<ParallelRecord> records;
  std::vector<std::string> errors;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto lineno = std::to_string(i + 1);
    try {
      auto obj = json::parse(line);
      records.push_back(record_from_json(obj, std::string(source_name) + ":" + lineno));
    } catch (const json::exception& e) {
      errors.push_back("line " + lineno + ": invalid JSON (" + e.what() + ")");
    } catch (const Error& e) {
      errors.push_back("line " + lineno + ": " + e.what());
    }
  }
  if (!errors.empty()) throw_line_errors(source_name, errors);
  return finish(std::move(records), source_name);
}

Corpus ingest_corpus(const std::filesystem::path& path, CorpusSchema schema, const IngestOptions& opts) {
  const auto text = read_file(path);
  const auto name = path.filename().string();
  if (schema == CorpusSchema::parallel_jsonl) return parse_corpus_jsonl(text, name);

  if (!opts.direction) throw ParameterError("tsv-pairs ingestion needs a direction");
  if (!is_valid_utf8(text)) throw Error(name + ": file is not valid UTF-8");
  std::vector<ParallelRecord> records;
  std::vector<std::string> errors;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty()) continue;
    const auto lineno = std::to_string(i + 1);
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      errors.push_back("line " + lineno + ": expected exactly one tab");
      continue;
    }
    ParallelRecord r;
    r.id = name + ":" + lineno;
    r.direction = *opts.direction;
    r.domain = opts.domain;
    r.granularity = opts.granularity;
    r.source_text = line.substr(0, tab);
    auto target = line.substr(tab + 1);
    if (r.source_text.empty() || target.empty()) {
      errors.push_back("line " + lineno + ": empty source or target");
      continue;
    }
    r.translations.push_back({"gold", PromptVariant::reference, std::move(target)});
    records.push_back(std::move(r));
  }
  if (!errors.empty()) throw_line_errors(name, errors);
  return finish(std::move(records), name);
}

std::string serialize_record(const ParallelRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["src_lang"] = r.direction.source_lang;
  j["tgt_lang"] = r.direction.target_lang;
  if (!r.domain.empty()) j["domain"] = r.domain;
  j["granularity"] = to_string(r.granularity);
  j["source_text"] = r.source_text;
  auto arr = ordered_json::array();
  for (const auto& t : r.translations) {
    ordered_json tj;
    tj["system"] = t.system_id;
    tj["variant"] = to_string(t.variant);
    tj["text"] = t.text;
    arr.push_back(std::move(tj));
  }
  j["translations"] = std::move(arr);
  return j.dump();
}

std::string export_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& r : corpus) {
    out += serialize_record(r);
    out.push_back('\n');
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) { write_file(path, export_jsonl(corpus)); }

// ---------------------------------------------------------------------------
// Stats

std::vector<CorpusStats> corpus_stats(const Corpus& corpus, const Tagger& tagger) {
  if (corpus.empty()) throw Error("corpus_stats: empty corpus");
  std::vector<CorpusStats> out;
  for (const auto& dir : corpus.directions()) {
    CorpusStats s;
    s.direction = dir;
    std::vector<std::string> texts;
    for (const auto& r : corpus) {
      if (r.direction != dir) continue;
      texts.push_back(r.source_text);
      ++s.domains[r.domain];
      ++s.record_count;
    }
    const auto tagged = tagger.tag(dir.source_lang, texts);
    std::size_t tokens = 0;
    for (const auto& t : tagged) tokens += t.size();
    s.avg_source_tokens = static_cast<double>(tokens) / static_cast<double>(s.record_count);
    out.push_back(std::move(s));
  }
  return out;
}

std::string stats_csv(const std::vector<CorpusStats>& stats) {
  std::string out = csv::format_row({"direction", "records", "avg_source_tokens", "domains"});
  for (const auto& s : stats) {
    std::string domains;
    for (const auto& [label, count] : s.domains) {
      if (!domains.empty()) domains += ";";
      domains += (label.empty() ? "(none)" : label) + "=" + std::to_string(count);
    }
    out += csv::format_row({s.direction.key(), std::to_string(s.record_count), fixed(s.avg_source_tokens, 1), domains});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

std::size_t proportion_floor(double p, std::size_t n) {
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
}

CorpusSplit split_train_dev(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.dev_fraction >= 0.0 && spec.dev_fraction < 1.0))
    throw ParameterError("dev_fraction must be in [0,1), got " + exact(spec.dev_fraction));

  const auto dirs = corpus.directions();
  std::vector<std::vector<std::size_t>> members(dirs.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto d = std::lower_bound(dirs.begin(), dirs.end(), corpus.records()[i].direction) - dirs.begin();
    members[static_cast<std::size_t>(d)].push_back(i);
  }

  // Largest-remainder apportionment of the global dev quota across directions.
  const std::size_t total = proportion_floor(spec.dev_fraction, corpus.size());
  std::vector<std::size_t> quota(dirs.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    const double exact_share = spec.dev_fraction * static_cast<double>(members[d].size());
    quota[d] = std::min(proportion_floor(spec.dev_fraction, members[d].size()), members[d].size());
    assigned += quota[d];
    remainders.emplace_back(exact_share - static_cast<double>(quota[d]), d);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
    const auto d = remainders[k].second;
    if (quota[d] < members[d].size()) {
      ++quota[d];
      ++assigned;
    }
  }

  std::vector<bool> in_dev(corpus.size(), false);
  std::mt19937_64 rng(spec.seed);
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    auto idx = members[d];
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    for (std::size_t k = 0; k < quota[d]; ++k) in_dev[idx[k]] = true;
  }

  std::vector<ParallelRecord> train, dev;
  for (std::size_t i = 0; i < corpus.size(); ++i) (in_dev[i] ? dev : train).push_back(corpus.records()[i]);
  return {Corpus(std::move(train)), Corpus(std::move(dev))};
}

}  // namespace curator
