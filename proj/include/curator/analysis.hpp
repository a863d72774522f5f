#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curator/annotations.hpp"
#include "curator/corpus.hpp"
#include "curator/metrics.hpp"

namespace curator {

// ---------------------------------------------------------------------------
// Correlation

/// Pearson correlation; nullopt when either vector has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
/// 1-based ranks with ties given their average rank.
std::vector<double> average_ranks(std::span<const double> v);
/// Pearson on average ranks.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct QuantileBin {
  double x_lo = 0.0;
  double x_hi = 0.0;
  std::size_t count = 0;
  double mean_x = 0.0;
  double mean_y = 0.0;
};

/// Equal-count bins over x (sorted ascending, ties by y). Bin sizes differ by
/// at most one; uses min(bins, n) bins.
std::vector<QuantileBin> quantile_bins(std::span<const double> x, std::span<const double> y, std::size_t bins);

struct CorrelationResult {
  std::size_t n = 0;
  std::optional<double> pearson_r;
  std::optional<double> spearman_rho;
  std::vector<QuantileBin> binned_means;
};

/// Requires |x| = |y| >= 3 and finite values.
CorrelationResult correlate(std::span<const double> x, std::span<const double> y, std::size_t bins = 10);

struct PplTsrPoint {
  std::string record_id;
  std::string system_id;
  double ppl = 0.0;
  double tsr = 0.0;
};

/// Joins metric records and TSR records on (record_id, system_id), sorted by key.
std::vector<PplTsrPoint> join_ppl_tsr(std::span<const MetricRecord> metrics, std::span<const TsrRecord> tsr);

/// Per-point rows followed by the summary and bin rows.
std::string correlation_csv(std::span<const PplTsrPoint> points, const CorrelationResult& result);

// ---------------------------------------------------------------------------
// Variant comparison

enum class Metric { lex, len, ppl, quality };
std::string_view to_string(Metric m);
/// PPL is better when lower, everything else when higher.
constexpr bool lower_is_better(Metric m) { return m == Metric::ppl; }

struct MetricDelta {
  Metric metric = Metric::ppl;
  double baseline_mean = 0.0;
  double system_mean = 0.0;
  double delta = 0.0;
  std::optional<double> p_value;  // absent when fewer than 2 pairs
  std::size_t pairs = 0;
  bool significant = false;
  bool improved = false;  // significant and in the better direction
};

struct VariantComparison {
  std::string direction;
  Granularity granularity = Granularity::document;
  std::string system_id;
  std::vector<MetricDelta> deltas;  // present metrics only
};

struct ComparisonReport {
  std::string baseline;
  std::vector<VariantComparison> rows;  // non-baseline systems
  /// (direction/granularity, metric) -> best / worst system across all systems
  std::map<std::pair<std::string, Metric>, std::string> best;
  std::map<std::pair<std::string, Metric>, std::string> worst;
};

struct CompareOptions {
  std::uint64_t seed = 0;
  int iterations = 10000;
  double alpha = 0.01;
  std::optional<PromptVariant> variant;  // restrict to one variant
};

/// Deltas of every system against `baseline` within each (direction,
/// granularity), with paired bootstrap p-values over records both systems share.
ComparisonReport compare_variants(std::span<const MetricRecord> records, const std::string& baseline,
                                  const CompareOptions& opts = {});

std::string comparison_csv(const ComparisonReport& report);

// ---------------------------------------------------------------------------
// Filter sweep

struct SweepPoint {
  double proportion = 0.0;
  double mean_ppl = 0.0;
  std::optional<double> mean_quality;
  std::size_t retained = 0;
};

struct SweepEvaluation {
  double mean_ppl = 0.0;
  std::optional<double> mean_quality;
};

using SweepEvaluator = std::function<SweepEvaluation(const Corpus& retained)>;

/// Mean reference PPL (and quality where present) over the retained records.
SweepEvaluator retained_reference_evaluator(std::span<const MetricRecord> metrics);

/// Proportions must be strictly increasing and in [0,1).
std::vector<SweepPoint> filter_sweep(const Corpus& corpus, std::span<const double> proportions,
                                     const std::map<std::string, double>& ppl, const SweepEvaluator& evaluate);

/// Header `proportion,mean_ppl,mean_quality`, plus the retained count.
std::string sweep_csv(std::span<const SweepPoint> points);

}  // namespace curator
