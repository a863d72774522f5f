#include "curator/report.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "curator/text.hpp"

namespace curator {

namespace {

void table_header(std::string& out, std::initializer_list<std::string_view> cols) {
  std::string head = "|", rule = "|";
  for (auto c : cols) {
    head += " " + std::string(c) + " |";
    rule += " --- |";
  }
  out += head + "\n" + rule + "\n";
}

void table_row(std::string& out, const std::vector<std::string>& cells) {
  out += "|";
  for (const auto& c : cells) out += " " + c + " |";
  out += "\n";
}

std::string opt_fixed(const std::optional<double>& v, int decimals, double scale = 1.0) {
  return v ? fixed(*v * scale, decimals) : "n/a";
}

void naturalness_section(std::string& out, const ReportInputs& in) {
  const auto table = aggregate_metrics(in.metrics);
  out += "## Automatic naturalness\n\n";
  out += "Lexical density (Lex.) and length variety (Len.): higher is more natural. Perplexity (PPL): lower is more natural.\n\n";
  table_header(out, {"Direction", "Granularity", "System", "Variant", "Lex.", "Len.", "PPL", "n"});
  for (const auto& s : table)
    table_row(out, {s.key.direction, std::string(to_string(s.key.granularity)), s.key.system_id,
                    std::string(to_string(s.key.variant)), fixed(s.lexical_density, 3), fixed(s.length_variety, 3),
                    fixed(s.ppl, 1), std::to_string(s.n)});
  out += "\n";

  const bool any_quality = std::any_of(table.begin(), table.end(), [](const MetricSummary& s) { return s.quality.has_value(); });
  if (any_quality) {
    out += "## Translation quality (COMET-QE x100)\n\n";
    table_header(out, {"Direction", "Granularity", "System", "Variant", "Quality", "n"});
    for (const auto& s : table)
      table_row(out, {s.key.direction, std::string(to_string(s.key.granularity)), s.key.system_id,
                      std::string(to_string(s.key.variant)), opt_fixed(s.quality, 1, 100.0), std::to_string(s.n)});
    out += "\n";
  }

  if (in.baseline) {
    const auto cmp = compare_variants(in.metrics, *in.baseline, in.compare);
    out += "## Comparison against `" + *in.baseline + "`\n\n";
    out += fmt::format("Paired bootstrap over shared records, {} resamples, seed {}, alpha {}.\n\n", in.compare.iterations,
                       in.compare.seed, exact(in.compare.alpha));
    table_header(out, {"Direction", "Granularity", "System", "Metric", "Baseline", "System", "Delta", "p", "Flag"});
    for (const auto& row : cmp.rows) {
      for (const auto& d : row.deltas) {
        const int dec = d.metric == Metric::ppl ? 1 : 3;
        const double scale = d.metric == Metric::quality ? 100.0 : 1.0;
        const auto group = row.direction + "/" + std::string(to_string(row.granularity));
        std::string flag = d.improved ? "improved" : (d.significant ? "degraded" : "");
        if (auto it = cmp.best.find({group, d.metric}); it != cmp.best.end() && it->second == row.system_id)
          flag += flag.empty() ? "best" : ", best";
        if (auto it = cmp.worst.find({group, d.metric}); it != cmp.worst.end() && it->second == row.system_id)
          flag += flag.empty() ? "worst" : ", worst";
        table_row(out, {row.direction, std::string(to_string(row.granularity)), row.system_id,
                        std::string(to_string(d.metric)), fixed(d.baseline_mean * scale, dec),
                        fixed(d.system_mean * scale, dec), fixed(d.delta * scale, dec),
                        d.p_value ? fixed(*d.p_value, 4) : "n/a", flag});
      }
    }
    out += "\n";
  }
}

void tsr_section(std::string& out, const ReportInputs& in) {
  const auto systems = system_tsr(in.tsr, in.tsr_threshold);
  out += "## Translationese span ratio\n\n";
  table_header(out, {"System", "Records", "Mean TSR", fmt::format("TSR > {}", exact(in.tsr_threshold))});
  for (const auto& s : systems)
    table_row(out, {s.system_id, std::to_string(s.records), fixed(s.mean_tsr, 3), fixed(s.proportion_significant * 100.0, 1) + "%"});
  out += "\n";

  std::vector<double> values;
  for (const auto& r : in.tsr) values.push_back(r.mean_tsr);
  const auto h = tsr_histogram(values, in.histogram_edges, in.tsr_threshold);
  out += "### TSR distribution\n\n";
  table_header(out, {"Bin", "Count", "Proportion"});
  for (const auto& b : h.bins)
    table_row(out, {fmt::format("{}{}, {}]", b.lo_inclusive ? "[" : "(", exact(b.lo), exact(b.hi)), std::to_string(b.count),
                    fixed(b.proportion, 3)});
  out += fmt::format("\nShare with TSR > {}: {}%\n\n", exact(h.threshold), fixed(h.share_above * 100.0, 1));
}

void category_section(std::string& out, const CategoryTable& table) {
  out += "## Error categories\n\n";
  table_header(out, {"Group", "Category", "Count", "Mean per annotator"});
  for (const auto& [group, cats] : table)
    for (const auto& [cat, c] : cats)
      table_row(out, {group, std::string(to_string(cat)), std::to_string(c.count), fixed(c.mean_per_annotator(), 1)});
  out += "\n";
}

void ranking_section(std::string& out, const ReportInputs& in) {
  out += "## Human ranking\n\n";
  table_header(out, {"System", "Average rank"});
  for (const auto& [system, rank] : average_rank(in.rankings)) table_row(out, {system, fixed(rank, 1)});
  out += "\nLower is more natural.\n\n";
  const auto agreement = pairwise_agreement(in.rankings);
  if (!agreement.empty()) {
    out += "### Inter-annotator agreement (Kendall tau-a)\n\n";
    table_header(out, {"Annotator A", "Annotator B", "Records", "Mean tau"});
    for (const auto& a : agreement)
      table_row(out, {a.annotator_a, a.annotator_b, std::to_string(a.records), fixed(a.mean_tau, 3)});
    out += "\n";
  }
}

void correlation_section(std::string& out, const ReportInputs& in) {
  const auto& c = *in.correlation;
  out += "## Perplexity vs. TSR\n\n";
  out += fmt::format("n = {}, Pearson r = {}, Spearman rho = {}\n\n", c.n, opt_fixed(c.pearson_r, 3),
                     opt_fixed(c.spearman_rho, 3));
  out += "Equal-count PPL bins:\n\n";
  table_header(out, {"PPL range", "Count", "Mean PPL", "Mean TSR"});
  for (const auto& b : c.binned_means)
    table_row(out, {fixed(b.x_lo, 2) + " - " + fixed(b.x_hi, 2), std::to_string(b.count), fixed(b.mean_x, 2),
                    fixed(b.mean_y, 3)});
  out += "\n";
}

void sweep_section(std::string& out, const ReportInputs& in) {
  out += "## Perplexity filtering sweep\n\n";
  table_header(out, {"Filtered", "Retained", "Mean PPL", "Mean quality"});
  for (const auto& p : in.sweep)
    table_row(out, {fixed(p.proportion * 100.0, 0) + "%", std::to_string(p.retained), fixed(p.mean_ppl, 2),
                    opt_fixed(p.mean_quality, 2, 100.0)});
  out += "\n";
}

}  // namespace

std::string render_report(const ReportInputs& in) {
  std::string out = "# Translationese curation report\n\n";
  if (!in.metrics.empty()) naturalness_section(out, in);
  if (!in.tsr.empty()) tsr_section(out, in);
  if (in.categories) category_section(out, *in.categories);
  if (!in.rankings.empty()) ranking_section(out, in);
  if (in.correlation) correlation_section(out, in);
  if (!in.sweep.empty()) sweep_section(out, in);
  out += "---\n\n";
  out += "Span lengths and TSR denominators are counted in unicode characters. ";
  out += "PPL is computed on the target text alone, without source context.\n";
  return out;
}

}  // namespace curator
