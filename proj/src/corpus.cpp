#include "promptdoctor/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/metrics.hpp"
#include "promptdoctor/text_util.hpp"

namespace promptdoctor::corpus {

std::string stratum_label(std::size_t hole_count) {
  return hole_count >= 6 ? std::string("6+") : std::to_string(hole_count);
}

nlohmann::json to_json(const CorpusStats& s) {
  return nlohmann::json{{"total", s.total},
                        {"retained", s.retained},
                        {"removed_short", s.removed_short},
                        {"removed_non_english", s.removed_non_english},
                        {"strata", s.strata}};
}

bool is_allowed_codepoint(char32_t cp) {
  if (cp < 0x80) return true;
  return (cp >= 0x1F600 && cp <= 0x1F64F)     // Emoticons
         || (cp >= 0x1F300 && cp <= 0x1F5FF)  // Miscellaneous Symbols and Pictographs
         || (cp >= 0x1F680 && cp <= 0x1F6FF)  // Transport and Map Symbols
         || (cp >= 0x1F900 && cp <= 0x1F9FF);  // Supplemental Symbols and Pictographs
}

std::pair<std::vector<CanonicalPrompt>, CorpusStats> clean(const std::vector<CanonicalPrompt>& corpus) {
  CorpusStats stats;
  for (std::size_t i = 0; i < kStrataCount; ++i) stats.strata[stratum_label(i)] = 0;
  std::vector<CanonicalPrompt> kept;
  stats.total = corpus.size();
  for (const auto& p : corpus) {
    auto cps = text::decode_utf8(p.text());
    if (cps.size() <= kMaxShortLength) {
      ++stats.removed_short;
      continue;
    }
    if (!std::all_of(cps.begin(), cps.end(), is_allowed_codepoint)) {
      ++stats.removed_non_english;
      continue;
    }
    ++stats.strata[stratum_label(p.hole_count())];
    kept.push_back(p);
  }
  stats.retained = kept.size();
  return {std::move(kept), std::move(stats)};
}

double z_for_confidence(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw PreconditionError("confidence must be in (0, 1)");
  boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 1.0 - (1.0 - confidence) / 2.0);
}

std::size_t cochran_sample_size(std::size_t population, double confidence, double error) {
  if (!(error > 0.0 && error < 1.0)) throw PreconditionError("error must be in (0, 1)");
  if (population == 0) return 0;
  double z = z_for_confidence(confidence);
  double n0 = z * z * 0.25 / (error * error);
  double n = n0 / (1.0 + (n0 - 1.0) / static_cast<double>(population));
  auto size = static_cast<std::size_t>(std::ceil(n));
  return std::min(size, population);
}

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  // Rejection sampling keeps the draw sequence independent of the standard
  // library's distribution implementation.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

SampleResult stratified_sample(const std::vector<CanonicalPrompt>& corpus, double confidence, double error,
                               std::uint64_t seed) {
  if (corpus.empty()) throw PreconditionError("stratified_sample: empty corpus");
  (void)z_for_confidence(confidence);
  if (!(error > 0.0 && error < 1.0)) throw PreconditionError("error must be in (0, 1)");

  std::vector<std::vector<std::size_t>> buckets(kStrataCount);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    buckets[std::min<std::size_t>(corpus[i].hole_count(), kStrataCount - 1)].push_back(i);
  }
  SampleResult out;
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < kStrataCount; ++b) {
    auto& idx = buckets[b];
    StratumDraw draw{stratum_label(b), idx.size(), 0};
    if (idx.empty()) {
      out.warnings.push_back("stratum " + draw.label + " is empty; skipped");
      out.strata.push_back(draw);
      continue;
    }
    draw.sample = cochran_sample_size(idx.size(), confidence, error);
    // Partial Fisher-Yates: the first `sample` slots become the draw.
    for (std::size_t k = 0; k < draw.sample; ++k) {
      auto r = k + static_cast<std::size_t>(uniform_below(rng, idx.size() - k));
      std::swap(idx[k], idx[r]);
    }
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<long>(draw.sample));
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) out.prompts.push_back(corpus[i]);
    out.strata.push_back(draw);
  }
  return out;
}

std::string_view to_string(TaskCategory c) {
  switch (c) {
    case TaskCategory::qa: return "qa";
    case TaskCategory::grammar_correction: return "grammar_correction";
    case TaskCategory::summarization: return "summarization";
    case TaskCategory::translation: return "translation";
    case TaskCategory::uncategorized: return "uncategorized";
  }
  return "uncategorized";
}

TaskCategory category_from_string(std::string_view s) {
  if (s == "qa") return TaskCategory::qa;
  if (s == "grammar_correction" || s == "grammar") return TaskCategory::grammar_correction;
  if (s == "summarization") return TaskCategory::summarization;
  if (s == "translation") return TaskCategory::translation;
  if (s == "uncategorized") return TaskCategory::uncategorized;
  throw PreconditionError("unknown task category '" + std::string(s) + "'");
}

namespace {

const std::set<std::string>& question_openers() {
  static const std::set<std::string> words{"who",  "what", "when",   "where", "why",    "how",    "which",
                                           "whom", "whose", "is",    "are",   "can",    "could",  "do",
                                           "does", "did",  "would",  "should", "will",  "was",    "were",
                                           "may",  "might", "shall", "have",  "has",    "am"};
  return words;
}

const std::set<std::string>& instruction_verbs() {
  static const std::set<std::string> verbs{
      "act",        "add",       "adjust",    "advise",     "analyze",    "analyse",    "answer",    "apply",
      "arrange",    "ask",       "assess",    "assign",     "assist",     "assume",     "avoid",     "begin",
      "break",      "brainstorm", "build",    "calculate",  "categorize", "change",     "check",     "choose",
      "clarify",    "classify",  "clean",     "collect",    "combine",    "come",       "compare",   "compile",
      "complete",   "compose",   "compute",   "condense",   "consider",   "construct",  "continue",  "convert",
      "copy",       "correct",   "count",     "craft",      "create",     "critique",   "decide",    "decode",
      "define",     "delete",    "describe",   "design",    "detail",     "detect",     "determine", "develop",
      "devise",     "diagnose",  "discuss",   "do",         "draft",      "draw",       "edit",      "elaborate",
      "emulate",    "enhance",   "ensure",    "enumerate",  "estimate",   "evaluate",   "examine",   "expand",
      "explain",    "explore",   "express",   "extract",    "fill",       "filter",     "find",      "finish",
      "fix",        "flag",      "focus",     "follow",     "forget",     "format",     "formulate", "gather",
      "generate",   "get",       "give",      "go",         "group",      "guess",      "help",      "highlight",
      "identify",   "ignore",    "illustrate", "imagine",   "implement",  "improve",    "include",   "indicate",
      "infer",      "inform",    "insert",    "interpret",  "introduce",  "invent",     "keep",      "label",
      "let",        "list",      "locate",    "look",       "make",       "map",        "match",     "mention",
      "merge",      "modify",    "name",      "note",       "offer",      "organize",   "organise",  "outline",
      "paraphrase", "parse",     "perform",   "pick",       "plan",       "play",       "point",     "polish",
      "predict",    "prepare",   "present",   "pretend",    "prioritize", "produce",    "proofread", "propose",
      "provide",    "put",       "rank",      "rate",       "read",       "recommend",  "reformat",  "reformulate",
      "refine",     "reflect",   "remember",  "remove",     "rename",     "reorder",    "rephrase",  "replace",
      "reply",      "report",    "represent", "rephrase",   "research",   "resolve",    "respond",   "restate",
      "restructure", "retrieve", "return",    "review",     "revise",     "rewrite",    "roleplay",  "say",
      "score",      "search",    "select",    "send",       "separate",   "share",      "show",      "simplify",
      "simulate",   "solve",     "sort",      "specify",    "split",      "start",      "state",     "stay",
      "suggest",    "summarize", "summarise", "supply",     "take",       "talk",       "teach",     "tell",
      "test",       "think",     "transcribe", "transform", "translate",  "treat",      "try",       "turn",
      "update",     "use",       "validate",  "verify",     "view",       "walk",       "write"};
  return verbs;
}

/// First alphabetic word, lowercased, skipping hole markers and politeness.
std::string first_word(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i])) && s[i] != '{') ++i;
    if (i < s.size() && s[i] == '{') {
      auto close = s.find('}', i);
      i = close == std::string_view::npos ? s.size() : close + 1;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && (std::isalpha(static_cast<unsigned char>(s[j])) || s[j] == '\'')) ++j;
    auto w = text::to_lower(s.substr(i, j - i));
    if (w == "please" || w == "kindly" || w == "now") {
      i = j;
      continue;
    }
    return w;
  }
  return {};
}

bool keyword_in(std::string_view lower_text, const std::vector<std::string>& keywords) {
  for (const auto& kw : keywords) {
    auto k = text::to_lower(kw);
    std::size_t pos = 0;
    while ((pos = lower_text.find(k, pos)) != std::string_view::npos) {
      if (pos == 0 || !std::isalnum(static_cast<unsigned char>(lower_text[pos - 1]))) return true;
      ++pos;
    }
  }
  return false;
}

}  // namespace

Mood classify_mood(std::string_view text) {
  auto w = first_word(text);
  if (text.find('?') != std::string_view::npos || question_openers().count(w)) return Mood::interrogative;
  if (instruction_verbs().count(w)) return Mood::imperative;
  return Mood::other;
}

Categorizer::Categorizer(CategorizerOptions options, EmbedFn embed)
    : options_(std::move(options)), embed_(std::move(embed)) {
  add_exemplar(TaskCategory::grammar_correction, "Correct the grammar and spelling of the following text: {text}");
  add_exemplar(TaskCategory::grammar_correction, "Proofread this paragraph and fix any punctuation errors: {text}");
  add_exemplar(TaskCategory::translation, "Translate the following sentence into French: {text}");
  add_exemplar(TaskCategory::summarization, "Summarize the following article in three sentences: {text}");
}

void Categorizer::add_exemplar(TaskCategory category, std::string text) {
  exemplars_.emplace_back(category, std::move(text));
}

std::optional<TaskCategory> Categorizer::keyword_category(std::string_view text) const {
  auto lower = text::to_lower(text);
  if (keyword_in(lower, options_.grammar_keywords)) return TaskCategory::grammar_correction;
  if (keyword_in(lower, options_.translation_keywords)) return TaskCategory::translation;
  if (keyword_in(lower, options_.summarization_keywords)) return TaskCategory::summarization;
  return std::nullopt;
}

TaskCategory Categorizer::categorize(const CanonicalPrompt& p) const {
  if (auto k = keyword_category(p.text())) return *k;
  if (embed_ && !exemplars_.empty()) {
    try {
      std::vector<std::string> texts{p.text()};
      for (const auto& [cat, t] : exemplars_) texts.push_back(t);
      auto vecs = embed_(texts);
      if (vecs.size() == texts.size()) {
        double best = -1.0;
        std::optional<TaskCategory> best_cat;
        for (std::size_t i = 0; i < exemplars_.size(); ++i) {
          double sim = metrics::cosine(vecs[0], vecs[i + 1]).value;
          if (sim > best) {
            best = sim;
            best_cat = exemplars_[i].first;
          }
        }
        if (best_cat && best >= options_.similarity_threshold) return *best_cat;
      }
    } catch (const std::exception&) {
      // keyword-only mode
    }
  }
  auto len = text::codepoint_length(p.text());
  if (len >= options_.qa_min_length && len <= options_.qa_max_length && classify_mood(p.text()) != Mood::other) {
    return TaskCategory::qa;
  }
  return TaskCategory::uncategorized;
}

}  // namespace promptdoctor::corpus
