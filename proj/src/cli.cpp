#include "curator/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "curator/analysis.hpp"
#include "curator/annotations.hpp"
#include "curator/corpus.hpp"
#include "curator/csv.hpp"
#include "curator/curation.hpp"
#include "curator/error.hpp"
#include "curator/inference.hpp"
#include "curator/metrics.hpp"
#include "curator/report.hpp"
#include "curator/tagger.hpp"
#include "curator/text.hpp"

namespace curator::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

/// Reads either a flat JSON object or CLI11's TOML/INI key = value format.
class FlatConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream again(text);
      return CLI::ConfigTOML::from_config(again);
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      auto scalar = [](const json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else if (value.is_object()) {
        throw CLI::ConversionError("config key '" + key + "' must be a scalar or list");
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

struct Options {
  std::string out;
  std::uint64_t seed = 0;

  std::string corpus;
  std::string schema = "parallel-jsonl";
  std::string src_lang, tgt_lang, domain;
  std::string granularity = "sentence";

  std::string metrics, annotations, rankings, tsr, sweep_csv;

  std::string score_url, score_model, score_replay;
  std::string chat_url, chat_model, chat_replay;
  std::string sidecar_url, tagger_fixture, quality_fixture;
  bool with_quality = false;
  std::string cache_dir, record_fixtures;
  int max_concurrency = 4;
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_ms = 500;

  std::string system, variant;
  double threshold = 0.2;
  std::vector<double> bins;
  std::vector<std::string> categories;
  std::string group_by = "system";
  std::size_t correlation_bins = 10;

  double proportion = 0.0;
  std::vector<double> proportions;
  double abort_threshold = 0.05;
  bool force = false;
  std::string kd_system = "kd";

  std::string target_system;
  std::string target_variant = "reference";
  double dev_fraction = -1.0;

  std::string baseline;
  int iterations = 10000;
  double alpha = 0.01;
};

class UsageProblem : public Error {
 public:
  explicit UsageProblem(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s;
    for (const auto& x : p) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
  std::vector<std::string> problems_;
};

/// Collects every validation problem before failing.
class Validator {
 public:
  explicit Validator(const CLI::App& app) : app_(app) {}

  void require(const char* flag, const std::string& value) {
    if (value.empty()) problems_.push_back(std::string("missing required flag ") + flag);
  }
  void existing(const char* flag, const std::string& path) {
    if (!path.empty() && !fs::exists(path)) problems_.push_back(std::string(flag) + ": no such file '" + path + "'");
  }
  void require_file(const char* flag, const std::string& path) {
    require(flag, path);
    existing(flag, path);
  }
  void check(bool ok, std::string problem) {
    if (!ok) problems_.push_back(std::move(problem));
  }
  bool given(const char* flag) const { return app_.count(flag) > 0; }
  void add(std::string problem) { problems_.push_back(std::move(problem)); }
  void finish() const {
    if (!problems_.empty()) throw UsageProblem(problems_);
  }

 private:
  const CLI::App& app_;
  std::vector<std::string> problems_;
};

struct RunState {
  std::string command;
  ordered_json endpoints = ordered_json::object();
  std::vector<std::string> outputs;
  ordered_json summary = ordered_json::object();
};

// ---------------------------------------------------------------------------
// Endpoint and scorer construction

struct EndpointFlags {
  const char* name;
  const std::string& url;
  const std::string& model;
  const std::string& replay;
};

void validate_endpoint(Validator& v, const EndpointFlags& f) {
  const std::string url_flag = std::string("--") + f.name + "-url";
  const std::string model_flag = std::string("--") + f.name + "-model";
  const std::string replay_flag = std::string("--") + f.name + "-replay";
  if (f.url.empty() && f.replay.empty())
    v.add("the " + std::string(f.name) + " endpoint needs " + url_flag + " (live) or " + replay_flag + " (replay)");
  if (f.model.empty()) v.add("missing required flag " + model_flag);
  if (!f.replay.empty() && !fs::exists(f.replay)) v.add(replay_flag + ": no such file '" + f.replay + "'");
}

EndpointConfig endpoint_config(const Options& o, const std::string& url, const std::string& model) {
  EndpointConfig cfg;
  if (!url.empty()) cfg.base_url = url;
  cfg.model_id = model;
  cfg.max_concurrency = o.max_concurrency;
  cfg.timeout = std::chrono::milliseconds(o.timeout_ms);
  cfg.max_retries = o.max_retries;
  cfg.backoff_base = std::chrono::milliseconds(o.backoff_ms);
  cfg.with_env_key();
  return cfg;
}

std::shared_ptr<InferenceClient> make_client(const Options& o, const EndpointFlags& f, RunState& state) {
  auto cfg = endpoint_config(o, f.url, f.model);
  ordered_json meta;
  meta["base_url"] = cfg.base_url;
  meta["model"] = cfg.model_id;
  meta["mode"] = f.replay.empty() ? "live" : "replay";
  meta["temperature"] = cfg.temperature;
  state.endpoints[f.name] = std::move(meta);
  if (!f.replay.empty()) return std::make_shared<InferenceClient>(InferenceClient::with_replay(cfg, fs::path(f.replay)));
  ClientOptions opts;
  if (!o.cache_dir.empty()) opts.cache_dir = fs::path(o.cache_dir);
  if (!o.record_fixtures.empty()) opts.recorder = std::make_shared<ReplayRecorder>(o.record_fixtures);
  opts.jitter_seed = o.seed;
  return std::make_shared<InferenceClient>(cfg, std::make_shared<HttpTransport>(), opts);
}

std::shared_ptr<InferenceClient> sidecar_client(const Options& o, RunState& state) {
  auto cfg = endpoint_config(o, o.sidecar_url, "scorer-sidecar");
  state.endpoints["sidecar"] = ordered_json{{"base_url", cfg.base_url}};
  ClientOptions opts;
  if (!o.cache_dir.empty()) opts.cache_dir = fs::path(o.cache_dir);
  return std::make_shared<InferenceClient>(cfg, std::make_shared<HttpTransport>(), opts);
}

void validate_tagger(Validator& v, const Options& o) {
  if (o.tagger_fixture.empty() == o.sidecar_url.empty() && o.tagger_fixture.empty())
    v.add("a tagger is required: pass --tagger-fixture or --sidecar-url");
  v.existing("--tagger-fixture", o.tagger_fixture);
  v.existing("--quality-fixture", o.quality_fixture);
}

std::unique_ptr<Tagger> make_tagger(const Options& o, RunState& state) {
  if (!o.tagger_fixture.empty()) {
    state.endpoints["tagger"] = ordered_json{{"kind", "fixture"}, {"path", o.tagger_fixture}};
    return std::make_unique<FixtureTagger>(FixtureTagger::load(o.tagger_fixture));
  }
  return std::make_unique<SidecarTagger>(sidecar_client(o, state));
}

std::unique_ptr<QualityEstimator> make_quality(const Options& o, RunState& state) {
  if (!o.quality_fixture.empty()) {
    state.endpoints["quality"] = ordered_json{{"kind", "fixture"}, {"path", o.quality_fixture}};
    return std::make_unique<FixtureQuality>(FixtureQuality::load(o.quality_fixture));
  }
  if (o.with_quality && !o.sidecar_url.empty()) return std::make_unique<SidecarQuality>(sidecar_client(o, state));
  return nullptr;
}

// ---------------------------------------------------------------------------
// File helpers

void emit(RunState& state, const fs::path& out_dir, const std::string& name, std::string_view content) {
  write_file(out_dir / name, content);
  state.outputs.push_back(name);
}

Corpus load_corpus(const Options& o) { return ingest_corpus(o.corpus, CorpusSchema::parallel_jsonl); }

std::vector<MetricRecord> load_metrics(const Options& o) { return parse_metric_records_csv(read_file(o.metrics)); }

std::string tsr_records_csv(std::span<const TsrRecord> records) {
  std::string out = csv::format_row({"record_id", "system", "direction", "annotators", "mean_tsr", "per_annotator"});
  for (const auto& r : records) {
    std::string per;
    for (const auto& [a, v] : r.per_annotator) per += (per.empty() ? "" : ";") + a + "=" + exact(v);
    out += csv::format_row({r.record_id, r.system_id, r.direction, std::to_string(r.per_annotator.size()),
                            exact(r.mean_tsr), per});
  }
  return out;
}

std::vector<TsrRecord> parse_tsr_records_csv(std::string_view text) {
  const auto t = csv::parse(text);
  const auto c_id = t.column("record_id"), c_sys = t.column("system"), c_dir = t.column("direction"),
             c_mean = t.column("mean_tsr"), c_per = t.column("per_annotator");
  std::vector<TsrRecord> out;
  for (const auto& row : t.rows) {
    TsrRecord r{row[c_id], row[c_sys], row[c_dir], {}, std::stod(row[c_mean])};
    std::string_view per = row[c_per];
    while (!per.empty()) {
      const auto semi = per.find(';');
      const auto item = per.substr(0, semi);
      const auto eq = item.rfind('=');
      if (eq == std::string_view::npos) throw Error("tsr records CSV: bad per_annotator entry");
      r.per_annotator[std::string(item.substr(0, eq))] = std::stod(std::string(item.substr(eq + 1)));
      if (semi == std::string_view::npos) break;
      per.remove_prefix(semi + 1);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SweepPoint> parse_sweep_csv(std::string_view text) {
  const auto t = csv::parse(text);
  const auto c_p = t.column("proportion"), c_ppl = t.column("mean_ppl"), c_q = t.column("mean_quality"),
             c_n = t.column("retained");
  std::vector<SweepPoint> out;
  for (const auto& row : t.rows) {
    SweepPoint p{std::stod(row[c_p]), std::stod(row[c_ppl]), std::nullopt, std::stoul(row[c_n])};
    if (!row[c_q].empty()) p.mean_quality = std::stod(row[c_q]) / 100.0;
    out.push_back(p);
  }
  return out;
}

CategorySet category_set(const Options& o) {
  if (o.categories.empty()) return translationese_categories();
  CategorySet set;
  for (const auto& label : o.categories) {
    auto c = parse_category(label);
    if (!c) throw UsageProblem({"--categories: unknown category '" + label + "'"});
    set.insert(*c);
  }
  return set;
}

CountGrouping grouping(const std::string& s) {
  if (s == "system") return CountGrouping::system;
  if (s == "direction") return CountGrouping::direction;
  if (s == "direction-system") return CountGrouping::direction_system;
  throw UsageProblem({"--group-by must be system, direction or direction-system"});
}

std::string system_tsr_csv(std::span<const SystemTsr> rows, double threshold) {
  std::string out = csv::format_row({"system", "records", "mean_tsr", "proportion_gt_" + exact(threshold)});
  for (const auto& s : rows)
    out += csv::format_row({s.system_id, std::to_string(s.records), fixed(s.mean_tsr, 4), fixed(s.proportion_significant, 4)});
  return out;
}

std::string categories_csv(const CategoryTable& table) {
  std::string out = csv::format_row({"group", "category", "count", "mean_per_annotator"});
  for (const auto& [group, cats] : table)
    for (const auto& [cat, c] : cats)
      out += csv::format_row({group, std::string(to_string(cat)), std::to_string(c.count), fixed(c.mean_per_annotator(), 1)});
  return out;
}

std::string histogram_csv(const TsrHistogram& h) {
  std::string out = csv::format_row({"bin", "count", "proportion"});
  for (const auto& b : h.bins)
    out += csv::format_row({(b.lo_inclusive ? "[" : "(") + exact(b.lo) + "," + exact(b.hi) + "]", std::to_string(b.count),
                            fixed(b.proportion, 4)});
  out += csv::format_row({"share_gt_" + exact(h.threshold), "", fixed(h.share_above, 4)});
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

using Handler = std::function<void(const Options&, const fs::path&, RunState&)>;

struct Command {
  std::string name;
  std::string help;
  std::function<void(Validator&, const Options&)> validate;
  Handler run;
};

std::vector<Command> commands() {
  std::vector<Command> cmds;

  cmds.push_back({"ingest", "Validate a corpus and write it as canonical parallel JSONL",
                  [](Validator& v, const Options& o) {
                    v.require_file("--corpus", o.corpus);
                    if (o.schema == "tsv-pairs") {
                      v.require("--src-lang", o.src_lang);
                      v.require("--tgt-lang", o.tgt_lang);
                    }
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    IngestOptions io;
                    if (!o.src_lang.empty() && !o.tgt_lang.empty()) io.direction = Direction::make(o.src_lang, o.tgt_lang);
                    io.granularity = parse_granularity(o.granularity);
                    io.domain = o.domain;
                    const auto corpus = ingest_corpus(o.corpus, parse_schema(o.schema), io);
                    emit(st, out, "corpus.jsonl", export_jsonl(corpus));
                    st.summary["records"] = corpus.size();
                  }});

  cmds.push_back({"stats", "Per-direction corpus statistics",
                  [](Validator& v, const Options& o) {
                    v.require_file("--corpus", o.corpus);
                    validate_tagger(v, o);
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    const auto tagger = make_tagger(o, st);
                    emit(st, out, "stats.csv", stats_csv(corpus_stats(corpus, *tagger)));
                  }});

  cmds.push_back({"score", "Compute PPL, lexical density, length variety (and quality) per translation",
                  [](Validator& v, const Options& o) {
                    v.require_file("--corpus", o.corpus);
                    validate_endpoint(v, {"score", o.score_url, o.score_model, o.score_replay});
                    validate_tagger(v, o);
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    const auto client = make_client(o, {"score", o.score_url, o.score_model, o.score_replay}, st);
                    const auto tagger = make_tagger(o, st);
                    const auto quality = make_quality(o, st);
                    TranslationSelector sel;
                    if (!o.system.empty()) sel.system_id = o.system;
                    if (!o.variant.empty()) sel.variant = parse_variant(o.variant);
                    const auto records = score_corpus(*client, *tagger, corpus, sel, quality.get());
                    if (records.empty()) throw Error("score: no translation matches " + sel.describe());
                    emit(st, out, "metrics.csv", metric_records_csv(records));
                    emit(st, out, "metrics_table.csv", metric_table_csv(aggregate_metrics(records)));
                    st.summary["scored"] = records.size();
                  }});

  cmds.push_back({"tsr", "Translationese span ratios from an annotation export",
                  [](Validator& v, const Options& o) {
                    v.require_file("--annotations", o.annotations);
                    v.existing("--corpus", o.corpus);
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    std::optional<Corpus> corpus;
                    if (!o.corpus.empty()) corpus = load_corpus(o);
                    const auto ex = parse_annotation_export(fs::path(o.annotations), corpus ? &*corpus : nullptr);
                    const auto records = tsr_records(ex, category_set(o));
                    if (records.empty()) throw Error("tsr: the export contains no annotated documents");
                    const auto systems = system_tsr(records, o.threshold);
                    std::vector<double> values;
                    for (const auto& r : records) values.push_back(r.mean_tsr);
                    const auto edges = o.bins.empty() ? kDefaultTsrEdges : o.bins;
                    emit(st, out, "tsr.csv", system_tsr_csv(systems, o.threshold));
                    emit(st, out, "tsr_records.csv", tsr_records_csv(records));
                    emit(st, out, "tsr_histogram.csv", histogram_csv(tsr_histogram(values, edges, o.threshold)));
                    emit(st, out, "categories.csv", categories_csv(category_counts(ex, grouping(o.group_by))));
                    st.summary["documents"] = records.size();
                    st.summary["spans"] = ex.spans.size();
                  }});

  cmds.push_back({"agreement", "Average ranks and pairwise Kendall tau from a ranking sheet",
                  [](Validator& v, const Options& o) { v.require_file("--rankings", o.rankings); },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto rankings = parse_rankings_csv(read_file(o.rankings));
                    std::string ranks = csv::format_row({"system", "average_rank"});
                    for (const auto& [s, r] : average_rank(rankings)) ranks += csv::format_row({s, fixed(r, 3)});
                    emit(st, out, "ranks.csv", ranks);
                    std::string agree = csv::format_row({"annotator_a", "annotator_b", "records", "mean_tau"});
                    for (const auto& a : pairwise_agreement(rankings))
                      agree += csv::format_row({a.annotator_a, a.annotator_b, std::to_string(a.records), fixed(a.mean_tau, 4)});
                    emit(st, out, "agreement.csv", agree);
                  }});

  cmds.push_back({"correlate", "Correlate per-translation PPL with TSR",
                  [](Validator& v, const Options& o) {
                    v.require_file("--metrics", o.metrics);
                    v.check(!o.tsr.empty() || !o.annotations.empty(), "correlate needs --tsr or --annotations");
                    v.existing("--tsr", o.tsr);
                    v.existing("--annotations", o.annotations);
                    v.existing("--corpus", o.corpus);
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    auto metrics = load_metrics(o);
                    if (!o.variant.empty()) {
                      const auto v = parse_variant(o.variant);
                      std::erase_if(metrics, [&](const MetricRecord& m) { return m.variant != v; });
                    }
                    std::vector<TsrRecord> tsr;
                    if (!o.tsr.empty()) {
                      tsr = parse_tsr_records_csv(read_file(o.tsr));
                    } else {
                      std::optional<Corpus> corpus;
                      if (!o.corpus.empty()) corpus = load_corpus(o);
                      tsr = tsr_records(parse_annotation_export(fs::path(o.annotations), corpus ? &*corpus : nullptr),
                                        category_set(o));
                    }
                    const auto points = join_ppl_tsr(metrics, tsr);
                    std::vector<double> x, y;
                    for (const auto& p : points) {
                      x.push_back(p.ppl);
                      y.push_back(p.tsr);
                    }
                    const auto result = correlate(x, y, o.correlation_bins);
                    emit(st, out, "correlation.csv", correlation_csv(points, result));
                    st.summary["n"] = result.n;
                  }});

  auto chat_validate = [](Validator& v, const Options& o) {
    v.require_file("--corpus", o.corpus);
    validate_endpoint(v, {"chat", o.chat_url, o.chat_model, o.chat_replay});
    v.check(o.abort_threshold >= 0.0 && o.abort_threshold <= 1.0, "--abort-threshold must be in [0,1]");
  };

  cmds.push_back({"polish", "Polish reference translations through the chat endpoint", chat_validate,
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    const auto client = make_client(o, {"chat", o.chat_url, o.chat_model, o.chat_replay}, st);
                    CurationJob job;
                    job.mode = CurationMode::polish;
                    job.endpoint = client->config();
                    job.seed = o.seed;
                    job.abort_threshold = o.abort_threshold;
                    job.force = o.force;
                    const auto result = polish_references(corpus, *client, job);
                    emit(st, out, "corpus.polished.jsonl", export_jsonl(result.corpus));
                    emit(st, out, "polish-summary.json", result.summary_json());
                    st.summary["failed"] = result.failures.size();
                  }});

  cmds.push_back({"kd", "Add teacher direct translations (knowledge distillation targets)", chat_validate,
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    const auto client = make_client(o, {"chat", o.chat_url, o.chat_model, o.chat_replay}, st);
                    CurationJob job;
                    job.mode = CurationMode::kd;
                    job.endpoint = client->config();
                    job.seed = o.seed;
                    job.abort_threshold = o.abort_threshold;
                    job.force = o.force;
                    job.kd_system = o.kd_system;
                    const auto result = kd_translate(corpus, *client, job);
                    emit(st, out, "corpus.kd.jsonl", export_jsonl(result.corpus));
                    emit(st, out, "kd-summary.json", result.summary_json());
                    st.summary["failed"] = result.failures.size();
                  }});

  cmds.push_back({"filter", "Drop the highest-perplexity share of each direction",
                  [](Validator& v, const Options& o) {
                    v.require_file("--corpus", o.corpus);
                    v.require_file("--metrics", o.metrics);
                    v.check(v.given("--proportion"), "missing required flag --proportion");
                    v.check(o.proportion >= 0.0 && o.proportion < 1.0, "--proportion must be in [0,1)");
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    const auto result = filter_by_perplexity(corpus, reference_ppl(load_metrics(o)), o.proportion);
                    emit(st, out, "corpus.filtered.jsonl", export_jsonl(result.retained));
                    emit(st, out, "removed.csv", manifest_csv(result.removed));
                    st.summary["retained"] = result.retained.size();
                    st.summary["removed"] = result.removed.size();
                  }});

  cmds.push_back({"sweep", "Evaluate a range of filtering proportions",
                  [](Validator& v, const Options& o) {
                    v.require_file("--corpus", o.corpus);
                    v.require_file("--metrics", o.metrics);
                    v.check(!o.proportions.empty(), "missing required flag --proportions");
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    const auto metrics = load_metrics(o);
                    const auto points = filter_sweep(corpus, o.proportions, reference_ppl(metrics),
                                                     retained_reference_evaluator(metrics));
                    emit(st, out, "sweep.csv", sweep_csv(points));
                    st.summary["evaluator"] = "retained-reference";
                  }});

  cmds.push_back({"emit-sft", "Write the SFT dataset and training config",
                  [](Validator& v, const Options& o) {
                    v.require_file("--corpus", o.corpus);
                    v.check(o.dev_fraction < 1.0, "--dev-fraction must be < 1");
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    const auto corpus = load_corpus(o);
                    TranslationSelector sel;
                    sel.variant = parse_variant(o.target_variant);
                    if (!o.target_system.empty()) sel.system_id = o.target_system;
                    std::optional<SplitSpec> split;
                    if (o.dev_fraction >= 0.0) split = SplitSpec{o.dev_fraction, o.seed};
                    const auto res = emit_sft_dataset(corpus, sel, out, split);
                    st.outputs.push_back(res.train_file.filename().string());
                    if (res.dev_file) st.outputs.push_back(res.dev_file->filename().string());
                    st.outputs.push_back(res.config_file.filename().string());
                    st.summary["train"] = res.train_count;
                    st.summary["dev"] = res.dev_count;
                  }});

  cmds.push_back({"report", "Render report.md from any of the stage outputs",
                  [](Validator& v, const Options& o) {
                    v.check(!o.metrics.empty() || !o.tsr.empty() || !o.annotations.empty() || !o.rankings.empty() ||
                                !o.sweep_csv.empty(),
                            "report needs at least one of --metrics, --tsr, --annotations, --rankings, --sweep");
                    v.existing("--metrics", o.metrics);
                    v.existing("--tsr", o.tsr);
                    v.existing("--annotations", o.annotations);
                    v.existing("--rankings", o.rankings);
                    v.existing("--sweep", o.sweep_csv);
                    v.existing("--corpus", o.corpus);
                    v.check(o.baseline.empty() || !o.metrics.empty(), "--baseline needs --metrics");
                  },
                  [](const Options& o, const fs::path& out, RunState& st) {
                    ReportInputs in;
                    in.tsr_threshold = o.threshold;
                    if (!o.bins.empty()) in.histogram_edges = o.bins;
                    in.compare = {o.seed, o.iterations, o.alpha, std::nullopt};
                    if (!o.variant.empty()) in.compare.variant = parse_variant(o.variant);
                    if (!o.metrics.empty()) in.metrics = load_metrics(o);
                    if (!o.baseline.empty()) in.baseline = o.baseline;
                    if (!o.annotations.empty()) {
                      std::optional<Corpus> corpus;
                      if (!o.corpus.empty()) corpus = load_corpus(o);
                      const auto ex = parse_annotation_export(fs::path(o.annotations), corpus ? &*corpus : nullptr);
                      in.tsr = tsr_records(ex, category_set(o));
                      in.categories = category_counts(ex, grouping(o.group_by));
                    } else if (!o.tsr.empty()) {
                      in.tsr = parse_tsr_records_csv(read_file(o.tsr));
                    }
                    if (!o.rankings.empty()) in.rankings = parse_rankings_csv(read_file(o.rankings));
                    if (!o.sweep_csv.empty()) in.sweep = parse_sweep_csv(read_file(o.sweep_csv));
                    if (!in.metrics.empty() && !in.tsr.empty()) {
                      std::vector<MetricRecord> ms = in.metrics;
                      if (in.compare.variant) std::erase_if(ms, [&](const MetricRecord& m) { return m.variant != *in.compare.variant; });
                      in.correlation_points = join_ppl_tsr(ms, in.tsr);
                      if (in.correlation_points.size() >= 3) {
                        std::vector<double> x, y;
                        for (const auto& p : in.correlation_points) {
                          x.push_back(p.ppl);
                          y.push_back(p.tsr);
                        }
                        in.correlation = correlate(x, y, o.correlation_bins);
                      }
                    }
                    emit(st, out, "report.md", render_report(in));
                    if (in.baseline) emit(st, out, "comparison.csv", comparison_csv(compare_variants(in.metrics, *in.baseline, in.compare)));
                  }});
  return cmds;
}

void register_options(CLI::App& app, Options& o) {
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--seed", o.seed, "Seed for splits, bootstrap and backoff jitter");

  app.add_option("--corpus", o.corpus, "Corpus file (parallel JSONL; ingest also reads tsv-pairs)");
  app.add_option("--schema", o.schema, "Input schema for ingest")->check(CLI::IsMember({"parallel-jsonl", "tsv-pairs"}));
  app.add_option("--src-lang", o.src_lang, "Source language for tsv-pairs");
  app.add_option("--tgt-lang", o.tgt_lang, "Target language for tsv-pairs");
  app.add_option("--domain", o.domain, "Domain label for tsv-pairs");
  app.add_option("--granularity", o.granularity, "Granularity for tsv-pairs")->check(CLI::IsMember({"document", "sentence"}));

  app.add_option("--metrics", o.metrics, "Per-record metrics CSV written by `score`");
  app.add_option("--annotations", o.annotations, "Annotation platform JSON export");
  app.add_option("--rankings", o.rankings, "Ranking sheet CSV");
  app.add_option("--tsr", o.tsr, "tsr_records.csv written by `tsr`");
  app.add_option("--sweep", o.sweep_csv, "sweep.csv written by `sweep`");

  app.add_option("--score-url", o.score_url, "Scoring endpoint base URL");
  app.add_option("--score-model", o.score_model, "Scoring model id");
  app.add_option("--score-replay", o.score_replay, "Replay fixture for the scoring endpoint");
  app.add_option("--chat-url", o.chat_url, "Chat endpoint base URL");
  app.add_option("--chat-model", o.chat_model, "Chat model id");
  app.add_option("--chat-replay", o.chat_replay, "Replay fixture for the chat endpoint");
  app.add_option("--sidecar-url", o.sidecar_url, "Scorer sidecar base URL (tagging, quality)");
  app.add_option("--tagger-fixture", o.tagger_fixture, "Canned tag table used instead of the sidecar");
  app.add_option("--quality-fixture", o.quality_fixture, "Canned quality scores used instead of the sidecar");
  app.add_flag("--with-quality", o.with_quality, "Request quality scores from the sidecar");
  app.add_option("--cache-dir", o.cache_dir, "Response cache directory for live endpoints");
  app.add_option("--record-fixtures", o.record_fixtures, "Append live responses to this replay fixture");
  app.add_option("--max-concurrency", o.max_concurrency, "In-flight request bound per endpoint")->check(CLI::PositiveNumber);
  app.add_option("--timeout-ms", o.timeout_ms, "Request timeout")->check(CLI::PositiveNumber);
  app.add_option("--max-retries", o.max_retries, "Retries on transient failures")->check(CLI::NonNegativeNumber);
  app.add_option("--backoff-ms", o.backoff_ms, "Base backoff delay")->check(CLI::NonNegativeNumber);

  app.add_option("--system", o.system, "Restrict to one system id");
  app.add_option("--variant", o.variant, "Restrict to one variant");
  app.add_option("--threshold", o.threshold, "TSR threshold for the significant share");
  app.add_option("--bins", o.bins, "TSR histogram edges")->delimiter(',');
  app.add_option("--categories", o.categories, "Span categories counted by TSR")->delimiter(',');
  app.add_option("--group-by", o.group_by, "Category count grouping")
      ->check(CLI::IsMember({"system", "direction", "direction-system"}));
  app.add_option("--correlation-bins", o.correlation_bins, "Equal-count PPL bins")->check(CLI::PositiveNumber);

  app.add_option("--proportion", o.proportion, "Share of each direction to drop");
  app.add_option("--proportions", o.proportions, "Sweep proportions")->delimiter(',');
  app.add_option("--abort-threshold", o.abort_threshold, "Failure rate that aborts polish/kd");
  app.add_flag("--force", o.force, "Overwrite existing kd translations / re-polish");
  app.add_option("--kd-system", o.kd_system, "System id for kd translations");

  app.add_option("--target-system", o.target_system, "System id of the SFT target");
  app.add_option("--target-variant", o.target_variant, "Variant of the SFT target");
  app.add_option("--dev-fraction", o.dev_fraction, "Also write a dev split of this size");

  app.add_option("--baseline", o.baseline, "Baseline system for comparisons");
  app.add_option("--iterations", o.iterations, "Bootstrap resamples")->check(CLI::Range(1000, 10000000));
  app.add_option("--alpha", o.alpha, "Significance level");
}

/// Resolved option values, excluding the output directory and config path.
ordered_json resolved_config(const CLI::App& app, const std::string& command) {
  json cfg = json::object();
  for (const auto* opt : app.get_options()) {
    const auto name = opt->get_single_name();
    if (name == "out" || name == "config" || name == "help" || opt->count() == 0) continue;
    const auto& results = opt->results();
    if (results.size() == 1) cfg[name] = results.front();
    else cfg[name] = results;
  }
  ordered_json out;
  out["command"] = command;
  out["options"] = ordered_json::parse(cfg.dump());
  return out;
}

void write_meta(const fs::path& out_dir, const RunState& st, const ordered_json& config, const Options& o,
                const std::string& status, const std::vector<std::string>& errors) {
  ordered_json meta;
  meta["command"] = st.command;
  meta["status"] = status;
  meta["config_hash"] = sha256_hex(config.dump());
  meta["config"] = config;
  meta["seeds"] = ordered_json{{"seed", o.seed}};
  meta["endpoints"] = st.endpoints;
  meta["outputs"] = st.outputs;
  meta["summary"] = st.summary;
  meta["errors"] = errors;
  write_file(out_dir / "run-meta.json", meta.dump(2) + "\n");
}

void print_error(std::ostream& err, int code, const std::vector<std::string>& errors) {
  ordered_json j;
  j["status"] = "error";
  j["exit_code"] = code;
  j["errors"] = errors;
  err << j.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Translationese curation toolkit: measure and reduce unnatural translations in MT data", "curator"};
  app.config_formatter(std::make_shared<FlatConfig>());
  app.set_config("--config", "", "Run config (flat JSON object or key = value lines); flags override it");
  app.require_subcommand(1, 1);
  app.fallthrough();

  Options o;
  register_options(app, o);
  const auto cmds = commands();
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : cmds) subs[c.name] = app.add_subcommand(c.name, c.help);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, kExitUsage, {e.what()});
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  const Command* cmd = nullptr;
  for (const auto& c : cmds)
    if (subs[c.name]->parsed()) cmd = &c;

  RunState st;
  st.command = cmd->name;
  const auto config = resolved_config(app, cmd->name);

  std::vector<std::string> errors;
  int code = kExitOk;
  try {
    Validator v(app);
    v.require("--out", o.out);
    cmd->validate(v, o);
    v.finish();
  } catch (const UsageProblem& e) {
    errors = e.problems();
    code = kExitUsage;
  }

  if (code == kExitOk) {
    try {
      fs::create_directories(o.out);
      cmd->run(o, fs::path(o.out), st);
    } catch (const UsageProblem& e) {
      errors = e.problems();
      code = kExitUsage;
    } catch (const std::exception& e) {
      errors = {e.what()};
      code = kExitRuntime;
    }
  }

  if (!o.out.empty()) {
    try {
      write_meta(o.out, st, config, o, code == kExitOk ? "ok" : "error", errors);
    } catch (const std::exception& e) {
      errors.push_back(std::string("could not write run-meta.json: ") + e.what());
      if (code == kExitOk) code = kExitRuntime;
    }
  }

  if (code != kExitOk) {
    print_error(err, code, errors);
    return code;
  }
  ordered_json ok;
  ok["status"] = "ok";
  ok["command"] = st.command;
  ok["outputs"] = st.outputs;
  out << ok.dump() << "\n";
  return kExitOk;
}

}  // namespace curator::cli
