#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "curator/analysis.hpp"
#include "curator/curation.hpp"
#include "curator/error.hpp"
#include "support.hpp"

using namespace curator;

namespace {

// Independent oracles: textbook covariance formula and rank-by-sorting.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) less += w < v[i], equal += w == v[i];
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

MetricRecord row(std::string id, std::string system, double ppl, double lex = 0.5, double len = 0.5) {
  MetricRecord m;
  m.record_id = std::move(id);
  m.direction = Direction::make("en", "zh");
  m.granularity = Granularity::document;
  m.system_id = std::move(system);
  m.variant = PromptVariant::direct;
  m.ppl = ppl;
  m.lexical_density = lex;
  m.length_variety = len;
  return m;
}

}  // namespace

TEST_CASE("correlation examples") {
  std::vector<double> x, y, dec;
  for (int i = 0; i < 10; ++i) {
    x.push_back(i);
    y.push_back(2.0 * i + 1.0);
    dec.push_back(std::exp(-i));
  }
  CHECK(*pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*spearman(x, dec) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_FALSE(pearson(x, std::vector<double>(10, 3.0)).has_value());
  CHECK_THROWS_AS(correlate(std::vector{1.0, 2.0}, std::vector{1.0, 2.0}), ParameterError);
  CHECK_THROWS_AS(correlate(std::vector<double>{1.0, 2.0, NAN}, std::vector{1.0, 2.0, 3.0}), ParameterError);
  CHECK(average_ranks(std::vector{10.0, 20.0, 10.0, 5.0}) == std::vector{2.5, 4.0, 2.5, 1.0});
}

TEST_CASE("pearson and spearman match brute-force oracles on random vectors") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50);
    for (int i = 0; i < 50; ++i) {
      x[i] = g(rng) * 10.0;
      y[i] = 0.3 * x[i] + g(rng) * 5.0;
      if (trial % 4 == 0) x[i] = std::round(x[i]);  // ties for the rank path
    }
    CHECK(std::abs(*pearson(x, y) - oracle_pearson(x, y)) <= 1e-9);
    CHECK(std::abs(*spearman(x, y) - oracle_pearson(oracle_ranks(x), oracle_ranks(y))) <= 1e-9);
  }
}

TEST_CASE("invariance: pearson under positive affine maps, spearman under increasing maps") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(40), y(40), affine(40), mono(40);
    for (int i = 0; i < 40; ++i) {
      x[i] = u(rng);
      y[i] = x[i] * x[i] + u(rng);
    }
    const double a = u(rng), b = u(rng) - 2.5;
    for (int i = 0; i < 40; ++i) {
      affine[i] = a * x[i] + b;
      mono[i] = std::log(x[i]) + x[i] * x[i] * x[i];
    }
    CHECK(*pearson(affine, y) == doctest::Approx(*pearson(x, y)).epsilon(1e-9));
    CHECK(*spearman(mono, y) == doctest::Approx(*spearman(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("quantile bins are equal-count") {
  std::vector<double> x, y;
  for (int i = 0; i < 23; ++i) {
    x.push_back(23 - i);
    y.push_back(i % 2);
  }
  const auto bins = quantile_bins(x, y, 5);
  REQUIRE(bins.size() == 5);
  std::size_t total = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    total += bins[b].count;
    CHECK(bins[b].count >= 4);
    CHECK(bins[b].count <= 5);
    if (b > 0) CHECK(bins[b].x_lo >= bins[b - 1].x_hi);
  }
  CHECK(total == 23);
  CHECK(quantile_bins(x, y, 100).size() == 23);
}

TEST_CASE("ppl/tsr join") {
  const std::vector<MetricRecord> ms{row("a", "s1", 3.0), row("b", "s1", 4.0), row("a", "s2", 5.0)};
  const std::vector<TsrRecord> ts{{"a", "s1", "en-zh", {}, 0.1}, {"a", "s2", "en-zh", {}, 0.3}, {"z", "s1", "en-zh", {}, 0.9}};
  const auto pts = join_ppl_tsr(ms, ts);
  REQUIRE(pts.size() == 2);
  CHECK(pts[1].system_id == "s2");
  CHECK(pts[1].tsr == 0.3);
  auto dup = ms;
  dup.push_back(row("a", "s1", 9.0));
  dup.back().variant = PromptVariant::polishing;
  CHECK_THROWS_AS(join_ppl_tsr(dup, ts), Error);
}

TEST_CASE("compare_variants") {
  SUBCASE("identical tables give zero deltas and p = 1") {
    std::vector<MetricRecord> rs;
    for (int i = 0; i < 10; ++i) {
      rs.push_back(row("r" + std::to_string(i), "sft", 10.0 + i));
      rs.push_back(row("r" + std::to_string(i), "copy", 10.0 + i));
    }
    const auto rep = compare_variants(rs, "sft", {1, 1000, 0.01, std::nullopt});
    REQUIRE(rep.rows.size() == 1);
    for (const auto& d : rep.rows[0].deltas) {
      CHECK(d.delta == 0.0);
      CHECK(*d.p_value == 1.0);
      CHECK_FALSE(d.improved);
    }
  }
  SUBCASE("a consistent PPL drop is flagged as an improvement") {
    std::vector<MetricRecord> rs;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.3);
    for (int i = 0; i < 40; ++i) {
      const double base = 13.8 + g(rng);
      rs.push_back(row("r" + std::to_string(i), "sft", base));
      rs.push_back(row("r" + std::to_string(i), "polished", base - 1.9 + g(rng) * 0.1));
    }
    const auto rep = compare_variants(rs, "sft", {7, 2000, 0.01, std::nullopt});
    const auto& ppl = *std::find_if(rep.rows[0].deltas.begin(), rep.rows[0].deltas.end(),
                                    [](const MetricDelta& d) { return d.metric == Metric::ppl; });
    CHECK(ppl.delta == doctest::Approx(-1.9).epsilon(0.02));
    CHECK(ppl.improved);
    CHECK(rep.best.at({"en-zh/document", Metric::ppl}) == "polished");
    CHECK(rep.worst.at({"en-zh/document", Metric::ppl}) == "sft");
    CHECK(comparison_csv(rep).find("polished,sft,ppl,") != std::string::npos);
  }
  SUBCASE("mismatched groups are rejected") {
    std::vector<MetricRecord> rs{row("a", "sft", 1.0), row("a", "kd", 2.0)};
    auto other = row("b", "kd", 3.0);
    other.granularity = Granularity::sentence;
    rs.push_back(other);
    CHECK_THROWS_WITH_AS(compare_variants(rs, "sft"), doctest::Contains("mismatched groups"), Error);
    CHECK_THROWS_WITH_AS(compare_variants(rs, "nobody"), doctest::Contains("not found"), Error);
  }
}

TEST_CASE("filter sweep") {
  // 20 records; the 4 highest-PPL ones carry injected noise in their scores
  std::vector<ParallelRecord> rs;
  std::vector<MetricRecord> ms;
  for (int i = 0; i < 20; ++i) {
    const auto id = "s" + std::to_string(100 + i);
    rs.push_back(testing::record(id, "en", "zh", "src", "tgt"));
    auto m = row(id, "gold", i < 16 ? 8.0 + 0.1 * i : 60.0 + i);
    m.variant = PromptVariant::reference;
    m.quality = i < 16 ? 0.8 : 0.4;
    ms.push_back(m);
  }
  const Corpus c(rs);
  const auto ppl = reference_ppl(ms);
  const auto eval = retained_reference_evaluator(ms);

  const std::vector<double> only_zero{0.0};
  const auto identity = filter_sweep(c, only_zero, ppl, eval);
  REQUIRE(identity.size() == 1);
  CHECK(identity[0].mean_ppl == eval(c).mean_ppl);
  CHECK(identity[0].retained == 20);

  const std::vector<double> props{0.0, 0.1, 0.2, 0.3};
  const auto pts = filter_sweep(c, props, ppl, eval);
  CHECK(pts[2].mean_ppl < pts[0].mean_ppl);
  CHECK(*pts[2].mean_quality == doctest::Approx(0.8));
  CHECK(pts[2].retained == 16);
  CHECK(sweep_csv(pts).rfind("proportion,mean_ppl,mean_quality,retained\n0.00,", 0) == 0);

  CHECK_THROWS_AS(filter_sweep(c, std::vector{0.2, 0.1}, ppl, eval), ParameterError);
  CHECK_THROWS_AS(filter_sweep(c, std::vector{0.1, 0.1}, ppl, eval), ParameterError);
  CHECK_THROWS_AS(filter_sweep(c, std::vector{1.0}, ppl, eval), ParameterError);
}
