#include "promptdoctor/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "promptdoctor/bias.hpp"
#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/parallel.hpp"
#include "promptdoctor/text_util.hpp"

namespace promptdoctor {

namespace {

constexpr const char* kPrinciples[] = {
    "No need to be polite with LLM so there is no need to add phrases like \"please\", \"if you don't mind\", \"thank you\", \"I would like to\", etc., and get straight to the point.",
    "Integrate the intended audience in the prompt, e.g., the audience is an expert in the field.",
    "Break down the complex tasks into a sequence of simpler prompts in an interactive conversation.",
    "Employ affirmative directives such as 'do,' while steering clear of negative language like 'don't'.",
    "When you need clarity or a deeper understanding of a topic, idea, or any piece of information, utilize the following prompts:\n- Explain [insert specific topic] in simple terms.\n- Explain to me like I'm 11 years old.\n- Explain to me as if I'm a beginner in [field].\n- Write the [essay/text/paragraph] using simple English like you're explaining something to a 5-year-old.",
    "Add \"I'm going to tip $xxx for a better solution!\"",
    "Implement example-driven prompting (Use few-shot prompting).",
    "When formatting your prompt, start with '###Instruction###', followed by either '###Example###* or '###Question###' if relevant. Subsequently, present your content. Use one or more line breaks to separate instructions, examples, questions, context, and input data.",
    "Incorporate the following phrases: \"Your task is\" and \"You MUST\".",
    "Incorporate the following phrases: \"You will be penalized\".",
    "Use the phrase \"Answer a question given in a natural, human-like manner\" in your prompts.",
    "Use leading words like writing \"think step by step”.",
    "Add to your prompt the following phrase \"Ensure that your answer is unbiased and does not rely on stereotypes\".",
    "Allow the model to elicit precise details and requirements from you by asking you questions until he has enough information to provide the needed output (for example, \"From now on, I would like you to ask me questions to...\").",
    "To inquire about a specific topic or idea or any information and you want to test your understanding, you can use the following phrase: \"Teach me the [Any theorem/topic/rule name] and include a test at the end, but don't give me the answers and then tell me if I got the answer right when I respond\".",
    "Assign a role to the large language models.",
    "Use Delimiters.",
    "Repeat a specific word or phrase multiple times within a prompt.",
    "Combine Chain-of-thought (CoT) with few-Shot prompts.",
    "Use output primers, which involve concluding your prompt with the beginning of the desired output. Utilize output primers by ending your prompt with the start of the anticipated response.",
    "To write an essay/text/paragraph/article or any type of text that should be detailed: \"Write a detailed [essay/text/paragraph] for me on [topic] in detail by adding all the information necessary\".",
    "To correct/change specific text without changing its style: \"Try to revise every paragraph sent by users. You should only improve the user's grammar and vocabulary and make sure it sounds natural. You should not change the writing style, such as making a formal paragraph casual\".",
    "When you have a complex coding prompt that may be in different files: \"From now and on whenever you generate code that spans more than one file, generate a [programming language ] script that can be run to automatically create the specified files or make changes to existing files to insert the generated code. [your question]\".",
    "When you want to initiate or continue a text using specific words, phrases, or sentences, utilize the following prompt:\n- I'm providing you with the beginning [song lyrics/story/paragraph/essay...]: [Insert lyrics/words/sentence]'. Finish it based on the words provided. Keep the flow consistent.",
    "Clearly state the requirements that the model must follow in order to produce content, in the form of the keywords, regulations, hint, or instructions.",
    "To write any text, such as an essay or paragraph, that is intended to be similar to a provided sample, include the following instructions:\n- Please use the same language based on the provided paragraph[/title/text/essay/answer].",
};
}  // namespace

const std::vector<SeedPrinciple>& seed_principles() {
  static const std::vector<SeedPrinciple> bank = [] {
    std::vector<SeedPrinciple> v;
    int i = 0;
    for (const char* p : kPrinciples) v.push_back({++i, p});
    return v;
  }();
  return bank;
}

nlohmann::json OptimizerHyperparams::to_json() const {
  return {{"n_seeds", n_seeds},
          {"prompts_per_step", prompts_per_step},
          {"train_count", train_count},
          {"test_count", test_count},
          {"top_n", top_n},
          {"epsilon", epsilon},
          {"patience", patience},
          {"max_steps", max_steps},
          {"principles_per_seed", principles_per_seed},
          {"seed_attempts", seed_attempts},
          {"temperature_ladder", temperature_ladder}};
}

OptimizerHyperparams OptimizerHyperparams::from_json(const nlohmann::json& j) {
  OptimizerHyperparams h;
  try {
    h.n_seeds = j.value("n_seeds", h.n_seeds);
    h.prompts_per_step = j.value("prompts_per_step", h.prompts_per_step);
    h.train_count = j.value("train_count", h.train_count);
    h.test_count = j.value("test_count", h.test_count);
    h.top_n = j.value("top_n", h.top_n);
    h.epsilon = j.value("epsilon", h.epsilon);
    h.patience = j.value("patience", h.patience);
    h.max_steps = j.value("max_steps", h.max_steps);
    h.principles_per_seed = j.value("principles_per_seed", h.principles_per_seed);
    h.seed_attempts = j.value("seed_attempts", h.seed_attempts);
    h.temperature_ladder = j.value("temperature_ladder", h.temperature_ladder);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("optimizer hyperparameters: ") + e.what());
  }
  if (h.n_seeds == 0 || h.prompts_per_step == 0 || h.train_count == 0 || h.test_count == 0 || h.top_n == 0 ||
      h.patience == 0 || h.seed_attempts == 0) {
    throw ConfigError("optimizer counts must be positive");
  }
  if (h.principles_per_seed == 0 || h.principles_per_seed > seed_principles().size()) {
    throw ConfigError("principles_per_seed must be between 1 and " + std::to_string(seed_principles().size()));
  }
  if (h.temperature_ladder.empty()) throw ConfigError("temperature ladder is empty");
  return h;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::improved: return "improved";
    case Verdict::degraded: return "degraded";
    case Verdict::unchanged: return "unchanged";
  }
  return "unchanged";
}

Verdict decide_verdict(double train_source, double train_best, double test_source, double test_best) {
  if (test_best > test_source) return Verdict::improved;
  if (train_best > train_source) return Verdict::degraded;
  return Verdict::unchanged;
}

namespace {

nlohmann::json score_json(const metrics::Score& s) {
  nlohmann::json j{{"value", s.value}, {"metric", metrics::to_string(s.metric)}};
  if (s.empty_input) j["empty_input"] = true;
  return j;
}

nlohmann::json scored_json(const ScoredPrompt& p) {
  return {{"prompt", p.prompt.text()}, {"holes", p.prompt.hole_names()}, {"train_score", score_json(p.train_score)},
          {"step", p.step}};
}

metrics::Metric metric_for(corpus::TaskCategory c) {
  switch (c) {
    case corpus::TaskCategory::translation: return metrics::Metric::bleu;
    case corpus::TaskCategory::summarization: return metrics::Metric::cosine;
    case corpus::TaskCategory::grammar_correction: return metrics::Metric::gleu;
    case corpus::TaskCategory::qa: return metrics::Metric::judge;
    case corpus::TaskCategory::uncategorized: break;
  }
  throw PreconditionError("uncategorized prompts cannot be optimized");
}

std::string format_score(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

nlohmann::json to_json(const OptimizationRun& run) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : run.steps) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : s.candidates) cands.push_back(scored_json(c));
    steps.push_back({{"step", s.step}, {"candidates", cands}, {"best_so_far", s.best_so_far}, {"discarded", s.discarded}});
  }
  nlohmann::json j{{"source", run.source.text()},
                   {"source_holes", run.source.hole_names()},
                   {"prompt_id", run.source.origin() ? nlohmann::json(*run.source.origin()) : nlohmann::json(nullptr)},
                   {"category", corpus::to_string(run.category)},
                   {"hyperparams", run.hyperparams.to_json()},
                   {"judge_template", run.judge_template ? nlohmann::json(*run.judge_template) : nlohmann::json(nullptr)},
                   {"steps", steps},
                   {"source_scored", scored_json(run.source_scored)},
                   {"best", scored_json(run.best)},
                   {"verdict", to_string(run.verdict)},
                   {"partial", run.partial},
                   {"warnings", run.warnings}};
  if (run.test_scores) {
    j["test_scores"] = {{"source", score_json(run.test_scores->source)}, {"best", score_json(run.test_scores->best)}};
  } else {
    j["test_scores"] = nullptr;
  }
  return j;
}

bool judge_says_yes(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && !std::isalnum(static_cast<unsigned char>(reply[i]))) ++i;
  if (reply.size() - i < 3) return false;
  return text::to_lower(reply.substr(i, 3)) == "yes" &&
         (i + 3 == reply.size() || !std::isalnum(static_cast<unsigned char>(reply[i + 3])));
}

Optimizer::Optimizer(llm::Gateway& gateway, OptimizerHyperparams hyperparams, const MetaPromptBank& bank)
    : gateway_(gateway), hp_(std::move(hyperparams)), bank_(bank) {}

std::vector<CanonicalPrompt> Optimizer::generate_seeds(const CanonicalPrompt& source, std::size_t n,
                                                       std::uint64_t seed) {
  if (n == 0) throw PreconditionError("generate_seeds requires n >= 1");
  const auto& bank = seed_principles();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(bank.size());
  std::vector<CanonicalPrompt> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t attempt = 0; attempt < hp_.seed_attempts; ++attempt) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<long>(hp_.principles_per_seed));
      std::sort(chosen.begin(), chosen.end());
      std::string principles;
      for (auto idx : chosen) principles += "- " + bank[idx].text + "\n";
      auto req = llm::ChatRequest::user(
          bank_.render("seed", {{"principles", principles}, {"prompt", source.text()}, {"holes", describe_holes(source)}}));
      req.temperature = hp_.temperature_ladder[i % hp_.temperature_ladder.size()];
      req.seed = mix_seed(seed, i * 16 + attempt);
      try {
        auto obj = gateway_.chat_json(llm::Role::generator, req, {{"prompt", llm::FieldKind::string}});
        auto cp = CanonicalPrompt::parse(obj["prompt"].get<std::string>(), source.origin());
        if (cp.same_holes(source)) {
          out.push_back(std::move(cp));
          break;
        }
      } catch (const MalformedResponse&) {
      } catch (const CanonicalizationError&) {
      }
    }
  }
  if (out.size() < std::max<std::size_t>(1, n / 2)) {
    throw SeedShortfall("only " + std::to_string(out.size()) + " of " + std::to_string(n) + " seeds kept their holes");
  }
  return out;
}

CanonicalPrompt Optimizer::make_judge_prompt(const CanonicalPrompt& source, std::uint64_t seed) {
  std::string last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto req = llm::ChatRequest::user(bank_.render("judge_generator", {{"prompt", source.text()}}));
    req.seed = mix_seed(seed, static_cast<std::uint64_t>(attempt));
    auto obj = gateway_.chat_json(llm::Role::generator, req, {{"question", llm::FieldKind::string}});
    last = obj["question"].get<std::string>();
    try {
      auto cp = CanonicalPrompt::parse(last);
      std::size_t occurrences = 0;
      for (auto pos = cp.text().find("{text}"); pos != std::string::npos; pos = cp.text().find("{text}", pos + 1)) {
        ++occurrences;
      }
      if (cp.hole_count() == 1 && cp.has_hole("text") && occurrences == 1) return cp;
    } catch (const CanonicalizationError&) {
    }
  }
  throw MalformedResponse("judge template lacks a single {text} hole", last);
}

metrics::Score Optimizer::evaluate(const CanonicalPrompt& p, const SyntheticDataset& dataset,
                                   corpus::TaskCategory category, const std::optional<CanonicalPrompt>& judge) {
  const auto metric = metric_for(category);
  if (dataset.rows.empty()) throw PreconditionError("cannot evaluate on an empty dataset");
  if (metric == metrics::Metric::judge && !judge) throw PreconditionError("qa evaluation needs a judge template");
  if (metric != metrics::Metric::judge) {
    for (const auto& row : dataset.rows) {
      if (!row.reference) throw PreconditionError("grounded evaluation needs a reference on every row");
    }
  }
  const std::size_t k = dataset.rows.size();
  std::vector<std::optional<double>> scores(k);
  parallel_for(k, gateway_.config().concurrency, [&](std::size_t i) {
    const auto& row = dataset.rows[i];
    auto req = llm::ChatRequest::user(substitute(p, row.patch.as_map()));
    req.temperature = 0.0;
    req.seed = i;
    try {
      auto reply = gateway_.chat(llm::Role::responder, req).content;
      switch (metric) {
        case metrics::Metric::bleu: scores[i] = metrics::bleu(reply, *row.reference).value; break;
        case metrics::Metric::gleu: scores[i] = metrics::gleu(reply, *row.reference).value; break;
        case metrics::Metric::cosine: {
          auto v = gateway_.embed({reply, *row.reference});
          try {
            scores[i] = metrics::cosine(v[0], v[1]).value;
          } catch (const ZeroVector&) {
            scores[i] = 0.0;
          }
          break;
        }
        case metrics::Metric::judge: {
          auto jreq = llm::ChatRequest::user(substitute(*judge, {{"text", reply}}));
          jreq.temperature = 0.0;
          scores[i] = judge_says_yes(gateway_.chat(llm::Role::judge, jreq).content) ? 1.0 : 0.0;
          break;
        }
      }
    } catch (const BudgetExceeded&) {
      throw;
    } catch (const TransportError&) {
      scores[i].reset();
    }
  });
  std::size_t failed = 0;
  double sum = 0.0;
  for (const auto& s : scores) {
    if (s) sum += *s;
    else ++failed;
  }
  if (failed * 5 >= k) {
    throw EvaluationFailed(std::to_string(failed) + " of " + std::to_string(k) + " rows failed in transport");
  }
  return metrics::Score{sum / static_cast<double>(k - failed), metric, false, std::nullopt};
}

OptimizationRun Optimizer::optimize(const CanonicalPrompt& source, corpus::TaskCategory category,
                                    const SyntheticDataset& train, const SyntheticDataset& test, std::uint64_t seed) {
  (void)metric_for(category);
  OptimizationRun run;
  run.source = source;
  run.category = category;
  run.hyperparams = hp_;

  std::optional<CanonicalPrompt> judge;
  if (category == corpus::TaskCategory::qa) {
    judge = make_judge_prompt(source, mix_seed(seed, 0x4a));
    run.judge_template = judge->text();
  }

  std::map<std::string, metrics::Score> cache;
  auto score = [&](const CanonicalPrompt& p) {
    auto it = cache.find(p.text());
    if (it != cache.end()) return it->second;
    auto s = evaluate(p, train, category, judge);
    cache.emplace(p.text(), s);
    return s;
  };

  std::vector<ScoredPrompt> alive;
  std::set<std::string> seen;
  auto better = [](const ScoredPrompt& a, const ScoredPrompt& b) { return a.train_score.value > b.train_score.value; };

  // Step 0: the source and its seeds.
  OptimizationStep step0;
  run.source_scored = {source, score(source), 0};
  step0.candidates.push_back(run.source_scored);
  seen.insert(source.text());
  alive.push_back(run.source_scored);
  for (auto& s : generate_seeds(source, hp_.n_seeds, mix_seed(seed, 0x5eed))) {
    ScoredPrompt sp{s, score(s), 0};
    step0.candidates.push_back(sp);
    if (seen.insert(s.text()).second) alive.push_back(std::move(sp));
  }
  run.best = run.source_scored;
  for (const auto& c : step0.candidates) {
    if (better(c, run.best)) run.best = c;
  }
  step0.best_so_far = run.best.train_score.value;
  run.steps.push_back(std::move(step0));

  std::size_t stale = 0;
  try {
    for (std::size_t step = 1; step <= hp_.max_steps && stale < hp_.patience; ++step) {
      std::vector<ScoredPrompt> top = alive;
      std::stable_sort(top.begin(), top.end(), better);
      if (top.size() > hp_.top_n) top.resize(hp_.top_n);
      std::reverse(top.begin(), top.end());
      std::string listing;
      for (const auto& t : top) {
        listing += "Template:\n" + t.prompt.text() + "\nScore: " + format_score(t.train_score.value) + "\n\n";
      }
      auto req = llm::ChatRequest::user(bank_.render("optimize", {{"holes", describe_holes(source)},
                                                                  {"scored_prompts", listing},
                                                                  {"count", std::to_string(hp_.prompts_per_step)}}));
      req.temperature = hp_.temperature_ladder[step % hp_.temperature_ladder.size()];
      req.seed = mix_seed(seed, step);

      OptimizationStep rec;
      rec.step = static_cast<int>(step);
      std::vector<std::string> texts;
      try {
        auto obj = gateway_.chat_json(llm::Role::generator, req, {{"prompts", llm::FieldKind::string_array}});
        texts = obj["prompts"].get<std::vector<std::string>>();
      } catch (const MalformedResponse& e) {
        run.warnings.push_back("step " + std::to_string(step) + ": " + e.what());
      }
      std::size_t dup = 0;
      auto fresh = admissible_rewrites(texts, source, seen, hp_.prompts_per_step, &rec.discarded, &dup);
      const double before = run.best.train_score.value;
      for (auto& c : fresh) {
        ScoredPrompt sp{c, score(c), static_cast<int>(step)};
        if (better(sp, run.best)) run.best = sp;
        rec.candidates.push_back(sp);
        alive.push_back(std::move(sp));
      }
      rec.best_so_far = run.best.train_score.value;
      run.steps.push_back(std::move(rec));
      stale = run.best.train_score.value > before + hp_.epsilon ? 0 : stale + 1;
    }
    auto test_source = evaluate(source, test, category, judge);
    auto test_best = run.best.prompt.text() == source.text() ? test_source : evaluate(run.best.prompt, test, category, judge);
    run.test_scores = TestScores{test_source, test_best};
    run.verdict = decide_verdict(run.source_scored.train_score.value, run.best.train_score.value, test_source.value,
                                 test_best.value);
  } catch (const BudgetExceeded& e) {
    run.partial = true;
    run.warnings.push_back(e.what());
  }
  return run;
}

}  // namespace promptdoctor
