#include "curator/curation.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "curator/csv.hpp"
#include "curator/error.hpp"
#include "curator/parallel.hpp"
#include "curator/text.hpp"

namespace curator {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr PromptTemplate kDirect{
    PromptVariant::direct,
    "Please translate the following {source_language} text to {target_language}.\n"
    "### Source text: {source_text}\n"
    "### Translation:"};

constexpr PromptTemplate kSpecified{
    PromptVariant::specified,
    "Please translate the following {source_language} text to {target_language}, ensuring that the translation is "
    "fluent, accurate, and conforms to typical {target_language} expressions and style.\n"
    "### Source text: {source_text}\n"
    "### Translation:"};

constexpr PromptTemplate kPolishing{
    PromptVariant::polishing,
    "Please polish the corresponding {target_language} translation of an {source_language} text, ensuring that the "
    "translation is fluent, accurate, and conforms to typical {target_language} expressions and style.\n"
    "### Source text: {source_text}\n"
    "### Original Translation: {target_text}\n"
    "### Translation:"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const PromptTemplate& prompt_template(PromptVariant variant) {
  switch (variant) {
    case PromptVariant::direct: return kDirect;
    case PromptVariant::specified: return kSpecified;
    case PromptVariant::polishing: return kPolishing;
    default: throw ParameterError("no prompt template for variant '" + std::string(to_string(variant)) + "'");
  }
}

std::string render_prompt(PromptVariant variant, std::string_view source_language, std::string_view target_language,
                          std::string_view source_text, std::optional<std::string_view> target_text) {
  const auto& tpl = prompt_template(variant);
  if (variant == PromptVariant::polishing && !target_text)
    throw ParameterError("polishing prompt needs the original translation");
  if (variant != PromptVariant::polishing && target_text)
    throw ParameterError("target_text is only accepted by the polishing prompt");

  std::string out;
  std::string_view rest = tpl.text;
  while (!rest.empty()) {
    const auto open = rest.find('{');
    if (open == std::string_view::npos) {
      out += rest;
      break;
    }
    out += rest.substr(0, open);
    const auto close = rest.find('}', open);
    if (close == std::string_view::npos) throw Error("prompt template has an unterminated placeholder");
    const auto name = rest.substr(open + 1, close - open - 1);
    if (name == "source_language") out += source_language;
    else if (name == "target_language") out += target_language;
    else if (name == "source_text") out += source_text;
    else if (name == "target_text") out += *target_text;
    else throw Error("prompt template has unknown placeholder {" + std::string(name) + "}");
    rest.remove_prefix(close + 1);
  }
  return out;
}

std::string render_prompt(PromptVariant variant, const ParallelRecord& record, std::optional<std::string_view> target_text) {
  return render_prompt(variant, language_name(record.direction.source_lang), language_name(record.direction.target_lang),
                       record.source_text, target_text);
}

std::optional<std::string> extract_source_text(std::string_view rendered, std::string_view source_language,
                                               std::string_view target_language) {
  static constexpr std::string_view kSuffix = "\n### Translation:";
  const auto prefix = render_prompt(PromptVariant::direct, source_language, target_language, "");
  const auto head = std::string_view(prefix).substr(0, prefix.size() - kSuffix.size());
  if (rendered.size() < prefix.size() || !rendered.starts_with(head) || !rendered.ends_with(kSuffix)) return std::nullopt;
  return std::string(rendered.substr(head.size(), rendered.size() - head.size() - kSuffix.size()));
}

// ---------------------------------------------------------------------------

void CurationJob::validate() const {
  std::vector<std::string> problems;
  const bool needs_endpoint = mode != CurationMode::filter;
  if (needs_endpoint && !endpoint) problems.push_back("polish/kd jobs need an endpoint");
  if (!needs_endpoint && endpoint) problems.push_back("filter jobs take no endpoint");
  if (mode == CurationMode::filter && !filter_proportion) problems.push_back("filter jobs need filter_proportion");
  if (mode != CurationMode::filter && filter_proportion) problems.push_back("only filter jobs take filter_proportion");
  if (filter_proportion && !(*filter_proportion >= 0.0 && *filter_proportion < 1.0))
    problems.push_back("filter_proportion must be in [0,1)");
  if (!(abort_threshold >= 0.0 && abort_threshold <= 1.0)) problems.push_back("abort_threshold must be in [0,1]");
  if (mode == CurationMode::kd && kd_system.empty()) problems.push_back("kd_system must be non-empty");
  if (endpoint) {
    try {
      endpoint->validate();
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid curation job:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ParameterError(msg);
  }
}

std::string CurationResult::summary_json() const {
  ordered_json j;
  j["attempted"] = attempted;
  j["succeeded"] = attempted - failures.size();
  j["failed"] = failures.size();
  auto arr = ordered_json::array();
  for (const auto& f : failures) arr.push_back({{"record_id", f.record_id}, {"error", f.message}});
  j["failures"] = std::move(arr);
  return j.dump(2) + "\n";
}

namespace {

/// Runs one chat call per record; `build` returns the prompt or nullopt to skip.
template <class Build, class Apply>
CurationResult run_chat_job(const Corpus& corpus, const InferenceClient& client, const CurationJob& job,
                            std::string_view what, Build&& build, Apply&& apply) {
  if (corpus.empty()) throw Error(std::string(what) + ": empty corpus");
  const auto& records = corpus.records();
  std::vector<std::optional<std::string>> outputs(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), client.config().max_concurrency, [&](std::size_t i) {
    const auto prompt = build(records[i]);
    try {
      auto text = trim(client.chat_complete({{"user", prompt}}));
      if (text.empty()) throw InferenceError("empty completion");
      outputs[i] = std::move(text);
    } catch (const InferenceError& e) {
      errors[i] = e.what();
    }
  });

  CurationResult result;
  result.attempted = records.size();
  std::vector<ParallelRecord> updated;
  updated.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto rec = records[i];
    if (outputs[i]) apply(rec, std::move(*outputs[i]));
    else result.failures.push_back({rec.id, errors[i]});
    updated.push_back(std::move(rec));
  }
  const double limit = job.abort_threshold * static_cast<double>(records.size());
  if (static_cast<double>(result.failures.size()) > limit + 1e-9) {
    std::string msg = std::string(what) + " aborted: " + std::to_string(result.failures.size()) + " of " +
                      std::to_string(records.size()) + " records failed (threshold " + fixed(job.abort_threshold * 100, 1) +
                      "%)";
    for (const auto& f : result.failures) msg += "\n  " + f.record_id + ": " + f.message;
    throw Error(msg);
  }
  result.corpus = Corpus(std::move(updated));
  return result;
}

}  // namespace

CurationResult polish_references(const Corpus& corpus, const InferenceClient& client, const CurationJob& job) {
  if (job.mode != CurationMode::polish) throw ParameterError("polish_references needs a polish job");
  job.validate();
  for (const auto& r : corpus) {
    const auto refs = r.with_variant(PromptVariant::reference);
    if (refs.size() != 1)
      throw Error("record '" + r.id + "' has " + std::to_string(refs.size()) + " reference translations, expected 1");
    if (!job.force && !r.with_variant(PromptVariant::reference_original).empty())
      throw Error("record '" + r.id + "' is already polished (use force to re-polish from the original)");
  }
  auto original_of = [](const ParallelRecord& r) -> const Translation& {
    const auto* ref = r.with_variant(PromptVariant::reference).front();
    const auto* orig = r.find(ref->system_id, PromptVariant::reference_original);
    return orig ? *orig : *ref;
  };
  return run_chat_job(
      corpus, client, job, "polish",
      [&](const ParallelRecord& r) { return render_prompt(PromptVariant::polishing, r, original_of(r).text); },
      [&](ParallelRecord& r, std::string polished) {
        const auto original = original_of(r);
        auto* ref = r.find(original.system_id, PromptVariant::reference);
        ref->text = std::move(polished);
        if (auto* orig = r.find(original.system_id, PromptVariant::reference_original)) {
          orig->text = original.text;
        } else {
          r.translations.push_back({original.system_id, PromptVariant::reference_original, original.text});
        }
      });
}

CurationResult kd_translate(const Corpus& corpus, const InferenceClient& client, const CurationJob& job) {
  if (job.mode != CurationMode::kd) throw ParameterError("kd_translate needs a kd job");
  job.validate();
  if (corpus.empty()) throw Error("kd: empty corpus");
  if (!job.force) {
    for (const auto& r : corpus)
      if (r.find(job.kd_system, PromptVariant::direct))
        throw Error("record '" + r.id + "' already has a '" + job.kd_system + "' translation (use force to overwrite)");
  }
  return run_chat_job(
      corpus, client, job, "kd", [&](const ParallelRecord& r) { return render_prompt(PromptVariant::direct, r); },
      [&](ParallelRecord& r, std::string translation) {
        if (auto* existing = r.find(job.kd_system, PromptVariant::direct)) existing->text = std::move(translation);
        else r.translations.push_back({job.kd_system, PromptVariant::direct, std::move(translation)});
      });
}

// ---------------------------------------------------------------------------

std::map<std::string, double> reference_ppl(std::span<const MetricRecord> metrics) {
  std::map<std::string, double> out;
  for (const auto& m : metrics) {
    if (m.variant != PromptVariant::reference) continue;
    if (!out.emplace(m.record_id, m.ppl).second)
      throw Error("record '" + m.record_id + "' has more than one reference PPL");
  }
  return out;
}

FilterResult filter_by_perplexity(const Corpus& corpus, const std::map<std::string, double>& ppl, double proportion) {
  if (!(proportion >= 0.0 && proportion < 1.0)) throw ParameterError("filter proportion must be in [0,1)");
  std::vector<std::string> missing;
  for (const auto& r : corpus)
    if (!ppl.count(r.id)) missing.push_back(r.id);
  if (!missing.empty()) {
    std::string msg = "missing reference PPL for " + std::to_string(missing.size()) + " record(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    throw Error(msg);
  }

  FilterResult result;
  std::set<std::string> removed_ids;
  for (const auto& dir : corpus.directions()) {
    std::vector<std::pair<double, const std::string*>> ranked;
    for (const auto& r : corpus)
      if (r.direction == dir) ranked.emplace_back(ppl.at(r.id), &r.id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return *a.second < *b.second;
    });
    const auto cut = proportion_floor(proportion, ranked.size());
    for (std::size_t k = 0; k < cut; ++k) {
      result.removed.push_back({*ranked[k].second, dir.key(), ranked[k].first, k + 1});
      removed_ids.insert(*ranked[k].second);
    }
  }
  std::vector<ParallelRecord> kept;
  for (const auto& r : corpus)
    if (!removed_ids.count(r.id)) kept.push_back(r);
  result.retained = Corpus(std::move(kept));
  return result;
}

std::string manifest_csv(std::span<const RemovedRecord> removed) {
  std::string out = csv::format_row({"record_id", "direction", "ppl", "rank"});
  for (const auto& r : removed) out += csv::format_row({r.record_id, r.direction, exact(r.ppl), std::to_string(r.rank)});
  return out;
}

// ---------------------------------------------------------------------------

std::string TrainingConfig::to_kv(std::string_view train_file, std::string_view dev_file) const {
  std::string out;
  auto kv = [&](std::string_view k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  kv("finetuning_method", "lora");
  kv("lora_rank", std::to_string(lora_rank));
  kv("learning_rate", exact(learning_rate));
  kv("warmup_ratio", exact(warmup_ratio));
  kv("num_epochs", std::to_string(num_epochs));
  kv("batch_size", std::to_string(batch_size));
  kv("checkpoint_selection", checkpoint_selection);
  kv("train_file", std::string(train_file));
  if (!dev_file.empty()) kv("dev_file", std::string(dev_file));
  return out;
}

std::vector<SftInstance> build_sft_instances(const Corpus& corpus, const TranslationSelector& target) {
  std::vector<SftInstance> out;
  std::vector<std::string> missing;
  for (const auto& r : corpus) {
    try {
      const auto& t = target.select(r);
      out.push_back({r.id, r.direction, render_prompt(PromptVariant::direct, r), t.text});
    } catch (const Error& e) {
      missing.push_back(e.what());
    }
  }
  if (!missing.empty()) {
    std::string msg = "cannot build SFT data:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw Error(msg);
  }
  std::sort(out.begin(), out.end(), [](const SftInstance& a, const SftInstance& b) { return a.record_id < b.record_id; });
  return out;
}

std::string sft_jsonl(std::span<const SftInstance> instances) {
  std::string out;
  for (const auto& s : instances) {
    ordered_json j;
    j["id"] = s.record_id;
    j["prompt"] = s.prompt_text;
    j["completion"] = s.completion_text;
    j["direction"] = s.direction.key();
    out += j.dump() + "\n";
  }
  return out;
}

SftOutputs emit_sft_dataset(const Corpus& corpus, const TranslationSelector& target, const std::filesystem::path& out_dir,
                            const std::optional<SplitSpec>& split, const TrainingConfig& config) {
  if (corpus.empty()) throw Error("emit-sft: empty corpus");
  SftOutputs out;
  out.train_file = out_dir / "sft-train.jsonl";
  out.config_file = out_dir / "training-config.txt";
  if (split) {
    auto parts = split_train_dev(corpus, *split);
    const auto train = build_sft_instances(parts.train, target);
    const auto dev = build_sft_instances(parts.dev, target);
    out.dev_file = out_dir / "sft-dev.jsonl";
    write_file(out.train_file, sft_jsonl(train));
    write_file(*out.dev_file, sft_jsonl(dev));
    out.train_count = train.size();
    out.dev_count = dev.size();
  } else {
    const auto train = build_sft_instances(corpus, target);
    write_file(out.train_file, sft_jsonl(train));
    out.train_count = train.size();
  }
  write_file(out.config_file, config.to_kv(out.train_file.filename().string(),
                                           out.dev_file ? out.dev_file->filename().string() : ""));
  return out;
}

}  // namespace curator
