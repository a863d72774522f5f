#include "curator/tagger.hpp"

#include <array>

#include "curator/error.hpp"
#include "curator/inference.hpp"
#include "curator/text.hpp"

namespace curator {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Upos, std::string_view>, 17> kUposNames = {{
    {Upos::ADJ, "ADJ"},     {Upos::ADP, "ADP"},     {Upos::ADV, "ADV"},   {Upos::AUX, "AUX"},
    {Upos::CCONJ, "CCONJ"}, {Upos::DET, "DET"},     {Upos::INTJ, "INTJ"}, {Upos::NOUN, "NOUN"},
    {Upos::NUM, "NUM"},     {Upos::PART, "PART"},   {Upos::PRON, "PRON"}, {Upos::PROPN, "PROPN"},
    {Upos::PUNCT, "PUNCT"}, {Upos::SCONJ, "SCONJ"}, {Upos::SYM, "SYM"},   {Upos::VERB, "VERB"},
    {Upos::X, "X"},
}};

TaggedToken token_from_json(const json& t) {
  std::string surface, tag;
  if (t.is_array() && t.size() == 2) {
    surface = t[0].get<std::string>();
    tag = t[1].get<std::string>();
  } else if (t.is_object()) {
    surface = t.at("surface").get<std::string>();
    tag = t.at("upos").get<std::string>();
  } else {
    throw Error("token must be [surface, upos] or {surface, upos}");
  }
  auto upos = parse_upos(tag);
  if (!upos) throw Error("unknown UPOS tag '" + tag + "'");
  if (surface.empty()) throw Error("empty token surface");
  return {std::move(surface), *upos};
}

}  // namespace

std::string_view to_string(Upos tag) {
  for (const auto& [t, name] : kUposNames)
    if (t == tag) return name;
  return "X";
}

std::optional<Upos> parse_upos(std::string_view s) {
  for (const auto& [t, name] : kUposNames)
    if (name == s) return t;
  return std::nullopt;
}

TaggedText Tagger::tag_one(std::string_view lang, const std::string& text) const {
  auto out = tag(lang, {text});
  if (out.size() != 1) throw Error(describe() + ": returned " + std::to_string(out.size()) + " results for 1 text");
  return std::move(out.front());
}

// ---------------------------------------------------------------------------

FixtureTagger FixtureTagger::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed tagger fixture (" + e.what() + ")");
  }
}

FixtureTagger FixtureTagger::from_json(const json& j) {
  FixtureTagger out;
  for (const auto& [lang, texts] : j.items()) {
    for (const auto& [text, tokens] : texts.items()) {
      TaggedText tagged;
      for (const auto& t : tokens) tagged.push_back(token_from_json(t));
      out.add(lang, text, std::move(tagged));
    }
  }
  return out;
}

void FixtureTagger::add(std::string lang, std::string text, TaggedText tokens) {
  table_[std::move(lang)][std::move(text)] = std::move(tokens);
}

json FixtureTagger::to_json() const {
  json j = json::object();
  for (const auto& [lang, texts] : table_) {
    for (const auto& [text, tokens] : texts) {
      json arr = json::array();
      for (const auto& t : tokens) arr.push_back({t.surface, to_string(t.upos)});
      j[lang][text] = std::move(arr);
    }
  }
  return j;
}

std::vector<TaggedText> FixtureTagger::tag(std::string_view lang, const std::vector<std::string>& texts) const {
  auto lang_it = table_.find(lang);
  std::vector<TaggedText> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    if (lang_it == table_.end()) throw Error("fixture tagger has no entries for language '" + std::string(lang) + "'");
    auto it = lang_it->second.find(text);
    if (it == lang_it->second.end())
      throw Error("fixture tagger has no entry for " + std::string(lang) + " text '" + text.substr(0, 60) + "'");
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<TaggedText> SidecarTagger::tag(std::string_view lang, const std::vector<std::string>& texts) const {
  std::vector<TaggedText> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += kMaxBatch) {
    const auto stop = std::min(texts.size(), start + kMaxBatch);
    json body = {{"lang", std::string(lang)},
                 {"texts", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                    texts.begin() + static_cast<std::ptrdiff_t>(stop))}};
    auto res = client_->post_json("/tag", body);
    try {
      if (!res.is_array() || res.size() != stop - start)
        throw Error("sidecar /tag returned " + std::to_string(res.is_array() ? res.size() : 0) + " results for " +
                    std::to_string(stop - start) + " texts");
      for (const auto& item : res) {
        TaggedText tagged;
        for (const auto& t : item.at("tokens")) tagged.push_back(token_from_json(t));
        out.push_back(std::move(tagged));
      }
    } catch (const json::exception& e) {
      throw InferenceError(std::string("malformed /tag response: ") + e.what());
    }
  }
  return out;
}

std::string SidecarTagger::describe() const { return "sidecar-tagger@" + client_->config().base_url; }

// ---------------------------------------------------------------------------

FixtureQuality FixtureQuality::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed quality fixture (" + e.what() + ")");
  }
}

FixtureQuality FixtureQuality::from_json(const json& j) {
  FixtureQuality out;
  for (const auto& e : j) out.add(e.at("source").get<std::string>(), e.at("translation").get<std::string>(), e.at("score").get<double>());
  return out;
}

void FixtureQuality::add(std::string source, std::string translation, double score) {
  if (!(score >= 0.0 && score <= 1.0)) throw Error("quality score out of [0,1]: " + exact(score));
  table_[{std::move(source), std::move(translation)}] = score;
}

std::vector<double> FixtureQuality::score(const std::vector<QualityPair>& pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto it = table_.find({p.source, p.translation});
    if (it == table_.end()) throw Error("fixture quality has no entry for translation '" + p.translation.substr(0, 60) + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<double> SidecarQuality::score(const std::vector<QualityPair>& pairs) const {
  if (pairs.empty()) throw ParameterError("quality: pairs must be non-empty");
  json arr = json::array();
  for (const auto& p : pairs)
    arr.push_back({{"src_lang", p.src_lang}, {"tgt_lang", p.tgt_lang}, {"source", p.source}, {"translation", p.translation}});
  auto res = client_->post_json("/quality", {{"pairs", std::move(arr)}});
  std::vector<double> out;
  try {
    for (const auto& s : res.at("scores")) {
      const double v = s.get<double>();
      if (!(v >= 0.0 && v <= 1.0)) throw InferenceError("sidecar /quality score out of [0,1]: " + exact(v));
      out.push_back(v);
    }
  } catch (const json::exception& e) {
    throw InferenceError(std::string("malformed /quality response: ") + e.what());
  }
  if (out.size() != pairs.size())
    throw InferenceError("sidecar /quality returned " + std::to_string(out.size()) + " scores for " +
                         std::to_string(pairs.size()) + " pairs");
  return out;
}

std::string SidecarQuality::describe() const { return "sidecar-quality@" + client_->config().base_url; }

}  // namespace curator
