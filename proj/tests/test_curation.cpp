#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "curator/curation.hpp"
#include "curator/csv.hpp"
#include "curator/error.hpp"
#include "curator/text.hpp"
#include "support.hpp"

using namespace curator;

namespace {

const std::filesystem::path kGolden = CURATOR_GOLDEN_DIR;

Corpus twenty_records() {
  std::vector<ParallelRecord> rs;
  for (int i = 0; i < 20; ++i) {
    const auto id = "r" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    if (i % 2 == 0) rs.push_back(testing::record(id, "en", "zh", "Source sentence " + id + ".", "译文" + id));
    else rs.push_back(testing::record(id, "de", "en", "Quellsatz " + id + ".", "Translation " + id + "."));
  }
  return Corpus(std::move(rs));
}

CurationJob polish_job(const EndpointConfig& cfg) {
  CurationJob job;
  job.mode = CurationMode::polish;
  job.endpoint = cfg;
  return job;
}

/// Replay store answering the polishing prompt of every record except `skip`.
ReplayStore polish_fixture(const Corpus& c, const EndpointConfig& cfg, std::set<std::string> skip = {}) {
  ReplayStore store;
  for (const auto& r : c) {
    if (skip.count(r.id)) continue;
    const auto& ref = r.translations.front().text;
    testing::record_chat(store, cfg, render_prompt(PromptVariant::polishing, r, ref), "  polished " + r.id + "\n");
  }
  return store;
}

Corpus ppl_corpus(const std::vector<std::pair<std::string, std::string>>& id_dir) {
  std::vector<ParallelRecord> rs;
  for (const auto& [id, dir] : id_dir) {
    const auto d = Direction::parse(dir);
    rs.push_back(testing::record(id, d.source_lang, d.target_lang, "s" + id, "t" + id));
  }
  return Corpus(std::move(rs));
}

std::set<std::string> removed_ids(const FilterResult& f) {
  std::set<std::string> out;
  for (const auto& r : f.removed) out.insert(r.record_id);
  return out;
}

}  // namespace

TEST_CASE("prompts are byte-exact against the golden files") {
  int checked = 0;
  for (const auto& line : split_lines(read_file(kGolden / "inputs.tsv"))) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t'), t2 = line.find('\t', t1 + 1);
    const auto key = line.substr(0, t1), source = line.substr(t1 + 1, t2 - t1 - 1), target = line.substr(t2 + 1);
    const auto d = Direction::parse(key);
    const auto src = language_name(d.source_lang), tgt = language_name(d.target_lang);
    CHECK(render_prompt(PromptVariant::direct, src, tgt, source) == read_file(kGolden / ("direct." + key + ".txt")));
    CHECK(render_prompt(PromptVariant::specified, src, tgt, source) == read_file(kGolden / ("specified." + key + ".txt")));
    CHECK(render_prompt(PromptVariant::polishing, src, tgt, source, target) ==
          read_file(kGolden / ("polishing." + key + ".txt")));
    ++checked;
  }
  CHECK(checked == 2);
}

TEST_CASE("prompt rendering examples") {
  const auto direct = render_prompt(PromptVariant::direct, "English", "Chinese", "Hello");
  CHECK(direct.rfind("Please translate the following English text to Chinese.", 0) == 0);
  const auto pol = render_prompt(PromptVariant::polishing, "German", "English", "Hallo", "Hi there");
  CHECK(pol.find("### Original Translation: Hi there") != std::string::npos);
  CHECK_THROWS_AS(render_prompt(PromptVariant::direct, "English", "Chinese", "Hello", "Hi"), ParameterError);
  CHECK_THROWS_AS(render_prompt(PromptVariant::polishing, "English", "Chinese", "Hello"), ParameterError);
  CHECK_THROWS_AS(prompt_template(PromptVariant::reference), ParameterError);

  const auto rec = testing::record("x", "de", "en", "Guten Tag", "Good day");
  CHECK(render_prompt(PromptVariant::direct, rec) == render_prompt(PromptVariant::direct, "German", "English", "Guten Tag"));
}

TEST_CASE("substitution is single-pass") {
  const auto p = render_prompt(PromptVariant::direct, "English", "Chinese", "Use {target_language} and {source_text}.");
  CHECK(p.find("### Source text: Use {target_language} and {source_text}.\n") != std::string::npos);
  const std::string tricky = "a\n### Translation: b";
  CHECK(extract_source_text(render_prompt(PromptVariant::direct, "English", "Chinese", tricky), "English", "Chinese") == tricky);
  CHECK_FALSE(extract_source_text("Something else", "English", "Chinese").has_value());
}

TEST_CASE("polish: replayed answers replace references and originals are kept") {
  const auto c = twenty_records();
  const auto cfg = testing::fast_config("http://10.255.255.1/v1", "gpt-4");
  const auto client = InferenceClient::with_replay(cfg, polish_fixture(c, cfg));
  const auto res = polish_references(c, client, polish_job(cfg));
  CHECK(res.failures.empty());
  CHECK(res.attempted == 20);
  for (const auto& r : res.corpus) {
    CHECK(r.find("gold", PromptVariant::reference)->text == "polished " + r.id);
    CHECK(r.find("gold", PromptVariant::reference_original)->text == c.find(r.id)->translations.front().text);
  }
  // re-polishing needs force, and starts from the original
  CHECK_THROWS_WITH_AS(polish_references(res.corpus, client, polish_job(cfg)), doctest::Contains("already polished"), Error);
  auto job = polish_job(cfg);
  job.force = true;
  const auto again = polish_references(res.corpus, client, job);
  CHECK(export_jsonl(again.corpus) == export_jsonl(res.corpus));
}

TEST_CASE("polish failure threshold") {
  const auto c = twenty_records();
  const auto cfg = testing::fast_config("http://10.255.255.1/v1", "gpt-4");
  SUBCASE("1 of 20 at 5% completes and reports the failure") {
    const auto client = InferenceClient::with_replay(cfg, polish_fixture(c, cfg, {"r07"}));
    const auto res = polish_references(c, client, polish_job(cfg));
    REQUIRE(res.failures.size() == 1);
    CHECK(res.failures[0].record_id == "r07");
    const auto* r7 = res.corpus.find("r07");
    CHECK(r7->find("gold", PromptVariant::reference)->text == c.find("r07")->translations.front().text);
    CHECK(r7->find("gold", PromptVariant::reference_original) == nullptr);
    const auto summary = nlohmann::json::parse(res.summary_json());
    CHECK(summary["failed"] == 1);
    CHECK(summary["failures"][0]["record_id"] == "r07");
  }
  SUBCASE("2 of 20 at 5% aborts") {
    const auto client = InferenceClient::with_replay(cfg, polish_fixture(c, cfg, {"r03", "r12"}));
    CHECK_THROWS_WITH_AS(polish_references(c, client, polish_job(cfg)), doctest::Contains("2 of 20"), Error);
  }
}

TEST_CASE("kd translations") {
  const auto c = twenty_records();
  const auto cfg = testing::fast_config("http://10.255.255.1/v1", "gpt-4");
  ReplayStore store;
  for (const auto& r : c) testing::record_chat(store, cfg, render_prompt(PromptVariant::direct, r), "kd " + r.id);
  const auto client = InferenceClient::with_replay(cfg, store);
  CurationJob job;
  job.mode = CurationMode::kd;
  job.endpoint = cfg;
  const auto a = kd_translate(c, client, job);
  const auto b = kd_translate(c, client, job);
  CHECK(export_jsonl(a.corpus) == export_jsonl(b.corpus));
  CHECK(a.corpus.find("r05")->find("kd", PromptVariant::direct)->text == "kd r05");

  CHECK_THROWS_WITH_AS(kd_translate(a.corpus, client, job), doctest::Contains("already has"), Error);
  job.force = true;
  CHECK(export_jsonl(kd_translate(a.corpus, client, job).corpus) == export_jsonl(a.corpus));
  CHECK_THROWS_AS(kd_translate(Corpus{}, client, job), Error);
}

TEST_CASE("job validation lists every problem") {
  CurationJob job;
  job.mode = CurationMode::filter;
  job.abort_threshold = 2.0;
  try {
    job.validate();
    FAIL("expected an error");
  } catch (const ParameterError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("filter_proportion") != std::string::npos);
    CHECK(msg.find("abort_threshold") != std::string::npos);
  }
}

TEST_CASE("filter examples") {
  std::vector<std::pair<std::string, std::string>> ids;
  std::map<std::string, double> ppl;
  for (int i = 1; i <= 10; ++i) {
    const auto id = "p" + std::to_string(i);
    ids.emplace_back(id, "en-zh");
    ppl[id] = i;
  }
  const auto c = ppl_corpus(ids);
  const auto f = filter_by_perplexity(c, ppl, 0.2);
  CHECK(removed_ids(f) == std::set<std::string>{"p10", "p9"});
  CHECK(f.retained.size() == 8);
  CHECK(manifest_csv(f.removed) == "record_id,direction,ppl,rank\np10,en-zh,10,1\np9,en-zh,9,2\n");

  const auto identity = filter_by_perplexity(c, ppl, 0.0);
  CHECK(identity.removed.empty());
  CHECK(identity.retained.records() == c.records());

  CHECK_THROWS_AS(filter_by_perplexity(c, ppl, 1.0), ParameterError);
  ppl.erase("p3");
  CHECK_THROWS_WITH_AS(filter_by_perplexity(c, ppl, 0.2), doctest::Contains("p3"), Error);
}

TEST_CASE("filter tie-break: equal PPL at the cut removes the smaller id") {
  // five records, p = 0.2 -> one slot; "b" and "a" tie at the top
  const auto c = ppl_corpus({{"c", "de-en"}, {"b", "de-en"}, {"a", "de-en"}, {"d", "de-en"}, {"e", "de-en"}});
  const std::map<std::string, double> ppl{{"a", 5.0}, {"b", 5.0}, {"c", 1.0}, {"d", 2.0}, {"e", 3.0}};
  const auto f = filter_by_perplexity(c, ppl, 0.2);
  CHECK(removed_ids(f) == std::set<std::string>{"a"});
}

TEST_CASE("filter properties on random corpora") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 400;
    std::vector<std::pair<std::string, std::string>> ids;
    std::map<std::string, double> ppl;
    for (std::size_t i = 0; i < n; ++i) {
      const auto id = "id" + std::to_string(i);
      ids.emplace_back(id, rng() % 3 == 0 ? "de-en" : "en-zh");
      ppl[id] = 1.0 + static_cast<double>(rng() % 50);  // plenty of ties
    }
    const auto c = ppl_corpus(ids);
    const double p1 = static_cast<double>(rng() % 50) / 100.0, p2 = p1 + static_cast<double>(1 + rng() % 49) / 100.0;
    const auto f1 = filter_by_perplexity(c, ppl, p1), f2 = filter_by_perplexity(c, ppl, p2);
    for (const auto& dir : c.directions()) {
      std::size_t total = 0, removed = 0;
      double retained_max = 0.0, removed_min = 1e300;
      for (const auto& r : c) total += r.direction == dir;
      for (const auto& r : f1.removed)
        if (r.direction == dir.key()) ++removed, removed_min = std::min(removed_min, r.ppl);
      for (const auto& r : f1.retained)
        if (r.direction == dir) retained_max = std::max(retained_max, ppl.at(r.id));
      CHECK(removed == proportion_floor(p1, total));
      if (removed > 0 && removed < total) CHECK(retained_max <= removed_min);
    }
    const auto r1 = removed_ids(f1), r2 = removed_ids(f2);
    CHECK(std::includes(r2.begin(), r2.end(), r1.begin(), r1.end()));
  }
}

TEST_CASE("sft emission") {
  testing::TempDir dir;
  std::vector<ParallelRecord> rs{testing::record("b", "en", "zh", "Two", "二"), testing::record("a", "en", "zh", "One", "一"),
                                 testing::record("c", "de", "en", "Drei", "Three")};
  const Corpus c(rs);
  const TranslationSelector ref{std::nullopt, PromptVariant::reference};
  const auto out = emit_sft_dataset(c, ref, dir.path());
  const auto first = read_file(out.train_file);
  CHECK(split_lines(first).size() == 3);
  CHECK(first.rfind(R"({"id":"a","prompt":"Please translate the following English text to Chinese.\n### Source text: One\n### Translation:","completion":"一","direction":"en-zh"})", 0) == 0);
  emit_sft_dataset(c, ref, dir.path());
  CHECK(read_file(out.train_file) == first);

  const auto config = read_file(out.config_file);
  CHECK(config.find("lora_rank = 16\n") != std::string::npos);
  CHECK(config.find("train_file = sft-train.jsonl\n") != std::string::npos);

  rs[1].translations.push_back({"gold", PromptVariant::reference_original, "壹"});
  const Corpus partial(rs);
  const TranslationSelector polished_only{std::nullopt, PromptVariant::reference_original};
  CHECK_THROWS_WITH_AS(emit_sft_dataset(partial, polished_only, dir.path()), doctest::Contains("'b'"), Error);

  const auto with_dev = emit_sft_dataset(c, ref, dir.path(), SplitSpec{0.34, 1});
  CHECK(with_dev.dev_count == 1);
  CHECK(with_dev.train_count == 2);
  CHECK(read_file(with_dev.config_file).find("dev_file = sft-dev.jsonl\n") != std::string::npos);
}
