#include "curator/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "curator/csv.hpp"
#include "curator/curation.hpp"
#include "curator/error.hpp"
#include "curator/text.hpp"

namespace curator {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("pearson: length mismatch");
  if (x.size() < 2) throw ParameterError("pearson: need at least 2 points");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) return std::nullopt;
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::vector<QuantileBin> quantile_bins(std::span<const double> x, std::span<const double> y, std::size_t bins) {
  if (x.size() != y.size()) throw ParameterError("quantile_bins: length mismatch");
  if (bins == 0) throw ParameterError("quantile_bins: bins must be >= 1");
  const std::size_t n = x.size();
  bins = std::min(bins, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : (y[a] != y[b] ? y[a] < y[b] : a < b);
  });
  std::vector<QuantileBin> out;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
    QuantileBin bin;
    bin.count = hi - lo;
    bin.x_lo = x[order[lo]];
    bin.x_hi = x[order[hi - 1]];
    for (std::size_t k = lo; k < hi; ++k) {
      bin.mean_x += x[order[k]];
      bin.mean_y += y[order[k]];
    }
    bin.mean_x /= static_cast<double>(bin.count);
    bin.mean_y /= static_cast<double>(bin.count);
    out.push_back(bin);
  }
  return out;
}

CorrelationResult correlate(std::span<const double> x, std::span<const double> y, std::size_t bins) {
  if (x.size() != y.size()) throw ParameterError("correlate: length mismatch");
  if (x.size() < 3) throw ParameterError("correlate: need at least 3 points");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ParameterError("correlate: non-finite value");
  CorrelationResult r;
  r.n = x.size();
  r.pearson_r = pearson(x, y);
  r.spearman_rho = spearman(x, y);
  r.binned_means = quantile_bins(x, y, bins);
  return r;
}

std::vector<PplTsrPoint> join_ppl_tsr(std::span<const MetricRecord> metrics, std::span<const TsrRecord> tsr) {
  std::map<std::pair<std::string, std::string>, double> tsr_by_key;
  for (const auto& t : tsr) tsr_by_key[{t.record_id, t.system_id}] = t.mean_tsr;
  std::map<std::pair<std::string, std::string>, PplTsrPoint> joined;
  for (const auto& m : metrics) {
    auto it = tsr_by_key.find({m.record_id, m.system_id});
    if (it == tsr_by_key.end()) continue;
    if (!joined.emplace(it->first, PplTsrPoint{m.record_id, m.system_id, m.ppl, it->second}).second)
      throw Error("join_ppl_tsr: record '" + m.record_id + "' system '" + m.system_id +
                  "' has several metric rows; restrict to one variant");
  }
  std::vector<PplTsrPoint> out;
  for (auto& [key, p] : joined) out.push_back(std::move(p));
  return out;
}

std::string correlation_csv(std::span<const PplTsrPoint> points, const CorrelationResult& result) {
  auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string("undefined"); };
  std::string out = csv::format_row({"kind", "record_id", "system", "ppl", "tsr"});
  for (const auto& p : points) out += csv::format_row({"point", p.record_id, p.system_id, exact(p.ppl), exact(p.tsr)});
  out += csv::format_row({"summary", "n", std::to_string(result.n), "", ""});
  out += csv::format_row({"summary", "pearson_r", opt(result.pearson_r), "", ""});
  out += csv::format_row({"summary", "spearman_rho", opt(result.spearman_rho), "", ""});
  for (std::size_t i = 0; i < result.binned_means.size(); ++i) {
    const auto& b = result.binned_means[i];
    out += csv::format_row({"bin", std::to_string(i + 1), fixed(b.x_lo, 3) + "-" + fixed(b.x_hi, 3), fixed(b.mean_x, 6),
                            fixed(b.mean_y, 6)});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::lex: return "lex";
    case Metric::len: return "len";
    case Metric::ppl: return "ppl";
    case Metric::quality: return "quality";
  }
  return "?";
}

namespace {

std::optional<double> metric_value(const MetricRecord& r, Metric m) {
  switch (m) {
    case Metric::lex: return r.lexical_density;
    case Metric::len: return r.length_variety;
    case Metric::ppl: return r.ppl;
    case Metric::quality: return r.quality;
  }
  return std::nullopt;
}

std::optional<double> mean_of(const std::map<std::string, const MetricRecord*>& rows, Metric m) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [id, r] : rows) {
    if (auto v = metric_value(*r, m)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

constexpr Metric kMetrics[] = {Metric::lex, Metric::len, Metric::ppl, Metric::quality};

}  // namespace

ComparisonReport compare_variants(std::span<const MetricRecord> records, const std::string& baseline,
                                  const CompareOptions& opts) {
  // group label -> system -> record id -> row
  std::map<std::string, std::map<std::string, std::map<std::string, const MetricRecord*>>> groups;
  std::map<std::string, std::pair<std::string, Granularity>> group_parts;
  for (const auto& r : records) {
    if (opts.variant && r.variant != *opts.variant) continue;
    const auto label = r.direction.key() + "/" + std::string(to_string(r.granularity));
    group_parts[label] = {r.direction.key(), r.granularity};
    if (!groups[label][r.system_id].emplace(r.record_id, &r).second)
      throw Error("compare_variants: system '" + r.system_id + "' has several rows for record '" + r.record_id +
                  "'; restrict to one variant");
  }

  std::set<std::string> baseline_groups, all_systems;
  for (const auto& [label, systems] : groups) {
    if (systems.count(baseline)) baseline_groups.insert(label);
    for (const auto& [s, rows] : systems) all_systems.insert(s);
  }
  if (baseline_groups.empty()) throw Error("compare_variants: baseline system '" + baseline + "' not found");
  std::vector<std::string> problems;
  for (const auto& system : all_systems) {
    for (const auto& [label, systems] : groups) {
      const bool has = systems.count(system) > 0;
      if (has != (baseline_groups.count(label) > 0))
        problems.push_back("system '" + system + "' " + (has ? "has" : "lacks") + " group " + label +
                           (has ? " that the baseline lacks" : " that the baseline has"));
    }
  }
  if (!problems.empty()) {
    std::string msg = "compare_variants: mismatched groups:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(msg);
  }

  ComparisonReport report;
  report.baseline = baseline;
  for (const auto& [label, systems] : groups) {
    const auto& base_rows = systems.at(baseline);
    for (auto m : kMetrics) {
      std::optional<std::pair<double, std::string>> best, worst;
      for (const auto& [system, rows] : systems) {
        auto mean = mean_of(rows, m);
        if (!mean) continue;
        const double score = lower_is_better(m) ? -*mean : *mean;
        if (!best || score > best->first) best = {score, system};
        if (!worst || score < worst->first) worst = {score, system};
      }
      if (best) report.best[{label, m}] = best->second;
      if (worst) report.worst[{label, m}] = worst->second;
    }

    for (const auto& [system, rows] : systems) {
      if (system == baseline) continue;
      VariantComparison row{group_parts[label].first, group_parts[label].second, system, {}};
      for (auto m : kMetrics) {
        auto base_mean = mean_of(base_rows, m);
        auto sys_mean = mean_of(rows, m);
        if (!base_mean || !sys_mean) continue;
        MetricDelta d;
        d.metric = m;
        d.baseline_mean = *base_mean;
        d.system_mean = *sys_mean;
        d.delta = *sys_mean - *base_mean;
        std::vector<double> a, b;
        for (const auto& [id, r] : rows) {
          auto it = base_rows.find(id);
          if (it == base_rows.end()) continue;
          auto va = metric_value(*it->second, m), vb = metric_value(*r, m);
          if (!va || !vb) continue;
          a.push_back(*va);
          b.push_back(*vb);
        }
        d.pairs = a.size();
        if (a.size() >= 2) {
          d.p_value = paired_significance(a, b, opts.seed, opts.iterations);
          d.significant = *d.p_value < opts.alpha;
          d.improved = d.significant && (lower_is_better(m) ? d.delta < 0 : d.delta > 0);
        }
        row.deltas.push_back(d);
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::string comparison_csv(const ComparisonReport& report) {
  std::string out = csv::format_row({"direction", "granularity", "system", "baseline", "metric", "baseline_mean",
                                     "system_mean", "delta", "p_value", "pairs", "flag"});
  for (const auto& row : report.rows) {
    for (const auto& d : row.deltas) {
      const int decimals = d.metric == Metric::ppl ? 1 : 3;
      const double scale = d.metric == Metric::quality ? 100.0 : 1.0;
      std::string flag = d.improved ? "improved" : (d.significant ? "degraded" : "");
      out += csv::format_row({row.direction, std::string(to_string(row.granularity)), row.system_id, report.baseline,
                              std::string(to_string(d.metric)), fixed(d.baseline_mean * scale, decimals),
                              fixed(d.system_mean * scale, decimals), fixed(d.delta * scale, decimals),
                              d.p_value ? fixed(*d.p_value, 4) : "", std::to_string(d.pairs), flag});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SweepEvaluator retained_reference_evaluator(std::span<const MetricRecord> metrics) {
  std::map<std::string, std::pair<double, std::optional<double>>> refs;
  for (const auto& m : metrics)
    if (m.variant == PromptVariant::reference) refs[m.record_id] = {m.ppl, m.quality};
  return [refs = std::move(refs)](const Corpus& retained) {
    SweepEvaluation e;
    double q_sum = 0.0;
    std::size_t n = 0, nq = 0;
    for (const auto& r : retained) {
      auto it = refs.find(r.id);
      if (it == refs.end()) throw Error("sweep evaluator: no reference metrics for record '" + r.id + "'");
      e.mean_ppl += it->second.first;
      ++n;
      if (it->second.second) {
        q_sum += *it->second.second;
        ++nq;
      }
    }
    if (n == 0) throw Error("sweep evaluator: empty evaluation set");
    e.mean_ppl /= static_cast<double>(n);
    if (nq) e.mean_quality = q_sum / static_cast<double>(nq);
    return e;
  };
}

std::vector<SweepPoint> filter_sweep(const Corpus& corpus, std::span<const double> proportions,
                                     const std::map<std::string, double>& ppl, const SweepEvaluator& evaluate) {
  if (proportions.empty()) throw ParameterError("filter_sweep: no proportions");
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    if (!(proportions[i] >= 0.0 && proportions[i] < 1.0)) throw ParameterError("filter_sweep: proportions must be in [0,1)");
    if (i > 0 && !(proportions[i] > proportions[i - 1]))
      throw ParameterError("filter_sweep: proportions must be strictly increasing");
  }
  std::vector<SweepPoint> out;
  for (double p : proportions) {
    const auto filtered = filter_by_perplexity(corpus, ppl, p);
    const auto e = evaluate(filtered.retained);
    out.push_back({p, e.mean_ppl, e.mean_quality, filtered.retained.size()});
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = csv::format_row({"proportion", "mean_ppl", "mean_quality", "retained"});
  for (const auto& p : points)
    out += csv::format_row({fixed(p.proportion, 2), fixed(p.mean_ppl, 3),
                            p.mean_quality ? fixed(*p.mean_quality * 100.0, 2) : "", std::to_string(p.retained)});
  return out;
}

}  // namespace curator
