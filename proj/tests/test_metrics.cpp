#include <doctest.h>

#include <cmath>
#include <random>

#include "curator/error.hpp"
#include "curator/metrics.hpp"
#include "support.hpp"

using namespace curator;

namespace {

std::vector<TokenScore> scores(std::initializer_list<double> lps) {
  std::vector<TokenScore> out;
  for (double v : lps) out.push_back({"t", v});
  return out;
}

TaggedText tags(std::initializer_list<Upos> us) {
  TaggedText out;
  for (auto u : us) out.push_back({"w", u});
  return out;
}

MetricRecord metric(std::string id, std::string system, double ppl, double lex, double len) {
  MetricRecord m;
  m.record_id = std::move(id);
  m.direction = Direction::make("en", "zh");
  m.granularity = Granularity::document;
  m.system_id = std::move(system);
  m.variant = PromptVariant::reference;
  m.ppl = ppl;
  m.lexical_density = lex;
  m.length_variety = len;
  return m;
}

}  // namespace

TEST_CASE("perplexity examples") {
  CHECK(perplexity(scores({std::log(0.5), std::log(0.5), std::log(0.5), std::log(0.5)})) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(perplexity(scores({0.0})) == 1.0);
  CHECK(perplexity(scores({-1.0, -3.0})) == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
  std::vector<TokenScore> first_absent{{"<s>", std::nullopt}, {"a", -1.0}, {"b", -3.0}};
  CHECK(perplexity(first_absent) == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(perplexity(std::vector<TokenScore>{{"x", std::nullopt}}), Error);
}

TEST_CASE("lexical density examples") {
  CHECK(lexical_density(tags({Upos::NOUN, Upos::VERB, Upos::DET, Upos::ADP})) == 0.5);
  CHECK(lexical_density(tags({Upos::ADJ, Upos::NOUN})) == 1.0);
  CHECK(lexical_density(tags({Upos::NOUN, Upos::PUNCT, Upos::VERB, Upos::AUX})) == doctest::Approx(2.0 / 3.0));
  CHECK(lexical_density(tags({Upos::PROPN, Upos::ADV, Upos::PRON})) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(lexical_density(tags({Upos::PUNCT})), Error);
  CHECK_FALSE(is_content_word(Upos::AUX));
  CHECK_FALSE(is_content_word(Upos::NUM));
}

TEST_CASE("length variety examples") {
  CHECK(length_variety(10, 10) == 0.0);
  CHECK(length_variety(10, 13) == doctest::Approx(0.3));
  CHECK(length_variety(8, 2) == 0.75);
  CHECK_THROWS_AS(length_variety(0, 3), Error);
}

TEST_CASE("score_translation composes the three metrics") {
  auto r = testing::record("doc1", "en", "zh", "The cat sat .", "猫 坐 了 。");
  r.translations.push_back({"gpt4", PromptVariant::polishing, "猫 坐 下 了 呢 。"});

  auto cfg = testing::fast_config("http://10.255.255.1/v1");
  const auto url = cfg.base_url + "/completions";
  ReplayStore store;
  store.add(request_hash(url, cfg.model_id, score_request_body(cfg, "猫 坐 下 了 呢 。")),
            testing::score_body({"猫", "坐", "下", "了", "呢", "。"}, {std::nullopt, -1.0, -2.0, -0.5, -1.5, -1.0}));
  store.add(request_hash(url, cfg.model_id, score_request_body(cfg, "猫 坐 了 。")),
            testing::score_body({"猫 坐 了 。"}, {0.0}));
  const auto client = InferenceClient::with_replay(cfg, store);

  FixtureTagger tagger;
  tagger.add("en", "The cat sat .", {{"The", Upos::DET}, {"cat", Upos::NOUN}, {"sat", Upos::VERB}, {".", Upos::PUNCT}});
  tagger.add("zh", "猫 坐 下 了 呢 。",
             {{"猫", Upos::NOUN}, {"坐", Upos::VERB}, {"下", Upos::VERB}, {"了", Upos::PART}, {"呢", Upos::PART}, {"。", Upos::PUNCT}});
  tagger.add("zh", "猫 坐 了 。", {{"猫", Upos::NOUN}, {"坐", Upos::VERB}, {"了", Upos::AUX}, {"。", Upos::PUNCT}});

  FixtureQuality quality;
  quality.add("The cat sat .", "猫 坐 下 了 呢 。", 0.81);

  const auto m = score_translation(client, tagger, r, {"gpt4", PromptVariant::polishing}, &quality);
  CHECK(m.record_id == "doc1");
  CHECK(m.system_id == "gpt4");
  CHECK(m.variant == PromptVariant::polishing);
  // mean of five present logprobs = -6/5
  CHECK(m.ppl == doctest::Approx(std::exp(1.2)).epsilon(1e-12));
  // 3 content of 5 non-punctuation
  CHECK(m.lexical_density == doctest::Approx(0.6));
  // 4 source tokens vs 6 target tokens
  CHECK(m.length_variety == doctest::Approx(0.5));
  REQUIRE(m.quality.has_value());
  CHECK(*m.quality == 0.81);

  // certain single token, and a quality estimator that cannot answer
  const auto ref = score_translation(client, tagger, r, {"gold", PromptVariant::reference}, &quality);
  CHECK(ref.ppl == 1.0);
  CHECK(ref.length_variety == 0.0);
  CHECK_FALSE(ref.quality.has_value());

  CHECK_THROWS_WITH_AS(score_translation(client, tagger, r, {"llama", std::nullopt}), doctest::Contains("translation not found"),
                       Error);
}

TEST_CASE("aggregate_metrics") {
  const std::vector<MetricRecord> rs{metric("a", "sft", 10.0, 0.5, 0.6), metric("b", "sft", 20.0, 0.518, 0.678),
                                     metric("a", "pol", 7.0, 0.6, 0.7)};
  const auto table = aggregate_metrics(rs);
  REQUIRE(table.size() == 2);
  CHECK(table[0].key.system_id == "pol");
  CHECK(table[0].ppl == 7.0);
  CHECK(table[0].n == 1);
  CHECK(table[1].ppl == 15.0);
  CHECK(table[1].lexical_density == doctest::Approx(0.509));
  CHECK(table[1].length_variety == doctest::Approx(0.639));
  CHECK_FALSE(table[1].quality.has_value());
  CHECK(metric_table_csv(table) ==
        "direction,granularity,system,variant,lex,len,ppl,quality,n\n"
        "en-zh,document,pol,reference,0.600,0.700,7.0,,1\n"
        "en-zh,document,sft,reference,0.509,0.639,15.0,,2\n");
  CHECK_THROWS_AS(aggregate_metrics({}), Error);

  // input order does not matter, bit for bit
  std::vector<MetricRecord> shuffled{rs[2], rs[1], rs[0]};
  CHECK(metric_table_csv(aggregate_metrics(shuffled)) == metric_table_csv(table));
}

TEST_CASE("metric records csv round-trips exactly") {
  auto a = metric("x,1", "sft", std::exp(1.2), 1.0 / 3.0, 0.1 + 0.2);
  a.quality = 0.123456789012345;
  const std::vector<MetricRecord> rs{a, metric("y", "kd", 2.0, 0.5, 0.0)};
  CHECK(parse_metric_records_csv(metric_records_csv(rs)) == rs);
}

TEST_CASE("paired significance examples") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> a(50);
  for (auto& v : a) v = noise(rng);
  CHECK(paired_significance(a, a, 1) == 1.0);

  std::vector<double> b = a;
  for (auto& v : b) v += 100.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(paired_significance(a, b, seed) < 0.01);

  CHECK_THROWS_AS(paired_significance(a, b, 0, 999), ParameterError);
  CHECK_THROWS_AS(paired_significance(std::vector<double>{1.0}, std::vector<double>{2.0}, 0), ParameterError);
  CHECK_THROWS_AS(paired_significance(a, std::vector<double>(49, 0.0), 0), ParameterError);
  CHECK(paired_significance(a, b, 9, 2000) == paired_significance(a, b, 9, 2000));
}

TEST_CASE("paired significance agrees with an independent resampling oracle") {
  // Same statistic with a simple loop; the RNG draw sequence is shared by design
  // (uniform draws by rejection on mt19937_64) so the p-values must match exactly.
  std::mt19937_64 data(17);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> a(30), b(30);
  for (std::size_t i = 0; i < 30; ++i) {
    a[i] = noise(data);
    b[i] = a[i] + 0.3 + noise(data);
  }
  const std::uint64_t seed = 123;
  const int iters = 4000;
  std::vector<double> d(30);
  double mean = 0.0;
  for (std::size_t i = 0; i < 30; ++i) mean += (d[i] = b[i] - a[i]);
  mean /= 30.0;
  std::mt19937_64 rng(seed);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % 30;
  int hits = 0;
  for (int it = 0; it < iters; ++it) {
    double s = 0.0;
    for (int k = 0; k < 30; ++k) {
      std::uint64_t x;
      do x = rng();
      while (x >= limit);
      s += d[x % 30] - mean;
    }
    if (std::abs(s / 30.0) >= std::abs(mean)) ++hits;
  }
  CHECK(paired_significance(a, b, seed, iters) == doctest::Approx((hits + 1.0) / (iters + 1.0)).epsilon(1e-12));
}

TEST_CASE("perplexity monotonicity property") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> lp(-12.0, 0.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng() % 40;
    std::vector<TokenScore> s(n);
    for (auto& t : s) t.logprob = lp(rng);
    CHECK(perplexity(s) >= 1.0);
    auto lowered = s;
    const auto k = rng() % n;
    lowered[k].logprob = *lowered[k].logprob - 0.5;
    CHECK(perplexity(lowered) > perplexity(s));
  }
}
