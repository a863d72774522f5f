#include "curator/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <random>

#include "curator/csv.hpp"
#include "curator/error.hpp"
#include "curator/parallel.hpp"
#include "curator/random.hpp"
#include "curator/text.hpp"

namespace curator {

double perplexity(std::span<const TokenScore> scores) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : scores) {
    if (!s.logprob) continue;
    sum += *s.logprob;
    ++n;
  }
  if (n == 0) throw Error("perplexity: no token carries a logprob");
  return std::exp(-sum / static_cast<double>(n));
}

double lexical_density(std::span<const TaggedToken> tokens) {
  std::size_t content = 0;
  std::size_t words = 0;
  for (const auto& t : tokens) {
    if (t.upos == Upos::PUNCT) continue;
    ++words;
    if (is_content_word(t.upos)) ++content;
  }
  if (words == 0) throw Error("lexical_density: every token is punctuation");
  return static_cast<double>(content) / static_cast<double>(words);
}

double length_variety(std::size_t src_token_count, std::size_t tgt_token_count) {
  if (src_token_count == 0) throw Error("length_variety: source has zero tokens");
  const auto diff = src_token_count > tgt_token_count ? src_token_count - tgt_token_count
                                                      : tgt_token_count - src_token_count;
  return static_cast<double>(diff) / static_cast<double>(src_token_count);
}

// ---------------------------------------------------------------------------

MetricRecord score_translation(const InferenceClient& scorer, const Tagger& tagger, const ParallelRecord& record,
                               const TranslationSelector& selector, const QualityEstimator* quality) {
  const auto& tr = selector.select(record);
  MetricRecord m;
  m.record_id = record.id;
  m.direction = record.direction;
  m.granularity = record.granularity;
  m.system_id = tr.system_id;
  m.variant = tr.variant;

  m.ppl = perplexity(scorer.score_text(tr.text));

  const auto target_tokens = tagger.tag_one(record.direction.target_lang, tr.text);
  const auto source_tokens = tagger.tag_one(record.direction.source_lang, record.source_text);
  m.lexical_density = lexical_density(target_tokens);
  m.length_variety = length_variety(source_tokens.size(), target_tokens.size());

  if (quality) {
    try {
      auto q = quality->score({{record.direction.source_lang, record.direction.target_lang, record.source_text, tr.text}});
      if (q.size() == 1) m.quality = q.front();
    } catch (const Error&) {
      m.quality.reset();
    }
  }
  return m;
}

std::vector<MetricRecord> score_corpus(const InferenceClient& scorer, const Tagger& tagger, const Corpus& corpus,
                                       const TranslationSelector& selector, const QualityEstimator* quality) {
  struct Job {
    const ParallelRecord* record;
    TranslationSelector selector;
  };
  std::vector<Job> jobs;
  for (const auto& r : corpus) {
    for (const auto& t : r.translations) {
      if (selector.system_id && t.system_id != *selector.system_id) continue;
      if (selector.variant && t.variant != *selector.variant) continue;
      jobs.push_back({&r, TranslationSelector{t.system_id, t.variant}});
    }
  }
  std::vector<MetricRecord> out(jobs.size());
  parallel_for(jobs.size(), scorer.config().max_concurrency, [&](std::size_t i) {
    out[i] = score_translation(scorer, tagger, *jobs[i].record, jobs[i].selector, quality);
  });
  return out;
}

// ---------------------------------------------------------------------------

MetricGroupKey group_key(const MetricRecord& r) {
  return {r.direction.key(), r.granularity, r.system_id, r.variant};
}

std::vector<MetricSummary> aggregate_metrics(std::span<const MetricRecord> records) {
  if (records.empty()) throw Error("aggregate_metrics: no records");
  struct Acc {
    double lex = 0, len = 0, ppl = 0, quality = 0;
    std::size_t n = 0, nq = 0;
  };
  // summed in record_id order so the result does not depend on input order
  std::map<MetricGroupKey, std::vector<const MetricRecord*>> groups;
  for (const auto& r : records) groups[group_key(r)].push_back(&r);

  std::vector<MetricSummary> out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [](const MetricRecord* a, const MetricRecord* b) {
      return a->record_id < b->record_id;
    });
    Acc acc;
    for (const auto* r : members) {
      acc.lex += r->lexical_density;
      acc.len += r->length_variety;
      acc.ppl += r->ppl;
      ++acc.n;
      if (r->quality) {
        acc.quality += *r->quality;
        ++acc.nq;
      }
    }
    MetricSummary s;
    s.key = key;
    s.n = acc.n;
    const auto n = static_cast<double>(acc.n);
    s.lexical_density = acc.lex / n;
    s.length_variety = acc.len / n;
    s.ppl = acc.ppl / n;
    if (acc.nq) s.quality = acc.quality / static_cast<double>(acc.nq);
    out.push_back(std::move(s));
  }
  return out;
}

std::string metric_table_csv(std::span<const MetricSummary> table) {
  std::string out = csv::format_row({"direction", "granularity", "system", "variant", "lex", "len", "ppl", "quality", "n"});
  for (const auto& s : table) {
    out += csv::format_row({s.key.direction, std::string(to_string(s.key.granularity)), s.key.system_id,
                            std::string(to_string(s.key.variant)), fixed(s.lexical_density, 3),
                            fixed(s.length_variety, 3), fixed(s.ppl, 1),
                            s.quality ? fixed(*s.quality * 100.0, 1) : "", std::to_string(s.n)});
  }
  return out;
}

std::string metric_records_csv(std::span<const MetricRecord> records) {
  std::string out = csv::format_row(
      {"record_id", "direction", "granularity", "system", "variant", "ppl", "lex", "len", "quality"});
  for (const auto& r : records) {
    out += csv::format_row({r.record_id, r.direction.key(), std::string(to_string(r.granularity)), r.system_id,
                            std::string(to_string(r.variant)), exact(r.ppl), exact(r.lexical_density),
                            exact(r.length_variety), r.quality ? exact(*r.quality) : ""});
  }
  return out;
}

namespace {

double parse_double(const std::string& s, std::string_view what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw Error("metrics CSV: bad " + std::string(what) + " value '" + s + "'");
  return v;
}

}  // namespace

std::vector<MetricRecord> parse_metric_records_csv(std::string_view text) {
  const auto table = csv::parse(text);
  const auto c_id = table.column("record_id"), c_dir = table.column("direction"),
             c_gran = table.column("granularity"), c_sys = table.column("system"), c_var = table.column("variant"),
             c_ppl = table.column("ppl"), c_lex = table.column("lex"), c_len = table.column("len"),
             c_q = table.column("quality");
  std::vector<MetricRecord> out;
  for (const auto& row : table.rows) {
    MetricRecord r;
    r.record_id = row[c_id];
    r.direction = Direction::parse(row[c_dir]);
    r.granularity = parse_granularity(row[c_gran]);
    r.system_id = row[c_sys];
    r.variant = parse_variant(row[c_var]);
    r.ppl = parse_double(row[c_ppl], "ppl");
    r.lexical_density = parse_double(row[c_lex], "lex");
    r.length_variety = parse_double(row[c_len], "len");
    if (!row[c_q].empty()) r.quality = parse_double(row[c_q], "quality");
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

double paired_significance(std::span<const double> a, std::span<const double> b, std::uint64_t seed, int iterations) {
  if (a.size() != b.size()) throw ParameterError("paired_significance: length mismatch");
  if (a.size() < 2) throw ParameterError("paired_significance: need at least 2 pairs");
  if (iterations < 1000) throw ParameterError("paired_significance: iterations must be >= 1000");

  const std::size_t n = a.size();
  std::vector<double> diff(n);
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = b[i] - a[i];
    observed += diff[i];
  }
  observed /= static_cast<double>(n);
  for (auto& d : diff) d -= observed;

  const double threshold = std::abs(observed);
  std::mt19937_64 rng(seed);
  long long extreme = 0;
  for (int it = 0; it < iterations; ++it) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += diff[uniform_index(rng, n)];
    if (std::abs(sum / static_cast<double>(n)) >= threshold) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(iterations + 1);
}

}  // namespace curator
