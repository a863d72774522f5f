#pragma once

#include <optional>
#include <string>
#include <vector>

#include "curator/analysis.hpp"
#include "curator/annotations.hpp"
#include "curator/metrics.hpp"

namespace curator {

struct ReportInputs {
  std::vector<MetricRecord> metrics;
  std::optional<std::string> baseline;
  CompareOptions compare;

  std::vector<TsrRecord> tsr;
  double tsr_threshold = 0.2;
  std::vector<double> histogram_edges = kDefaultTsrEdges;
  std::optional<CategoryTable> categories;

  std::vector<RankingRecord> rankings;

  std::vector<PplTsrPoint> correlation_points;
  std::optional<CorrelationResult> correlation;

  std::vector<SweepPoint> sweep;
};

/// Self-contained Markdown report. Sections with no input are omitted.
std::string render_report(const ReportInputs& in);

}  // namespace curator
