#include "promptdoctor/bias.hpp"

#include <algorithm>
#include <deque>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/parallel.hpp"

namespace promptdoctor {

std::string_view to_string(BiasType t) {
  switch (t) {
    case BiasType::gender: return "gender";
    case BiasType::race: return "race";
    case BiasType::sexuality: return "sexuality";
  }
  return "gender";
}

BiasType bias_type_from_string(std::string_view s) {
  if (s == "gender") return BiasType::gender;
  if (s == "race") return BiasType::race;
  if (s == "sexuality") return BiasType::sexuality;
  throw ConfigError("unknown bias type '" + std::string(s) + "'");
}

std::string_view to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::clean: return "clean";
    case CandidateStatus::flawed: return "flawed";
    case CandidateStatus::unevaluated: return "unevaluated";
  }
  return "unevaluated";
}

std::string describe_holes(const CanonicalPrompt& cp) {
  if (cp.hole_count() == 0) return "(none)";
  std::string out;
  for (const auto& h : cp.holes()) {
    if (!out.empty()) out += ", ";
    out += "{" + h.name + "}";
  }
  return out;
}

std::vector<CanonicalPrompt> admissible_rewrites(const std::vector<std::string>& texts, const CanonicalPrompt& original,
                                                 std::set<std::string>& seen, std::size_t limit,
                                                 std::size_t* mismatched, std::size_t* duplicates) {
  std::vector<CanonicalPrompt> out;
  for (const auto& t : texts) {
    if (out.size() >= limit) break;
    CanonicalPrompt cp;
    try {
      cp = CanonicalPrompt::parse(t, original.origin());
    } catch (const CanonicalizationError&) {
      if (mismatched) ++*mismatched;
      continue;
    }
    if (!cp.same_holes(original)) {
      if (mismatched) ++*mismatched;
      continue;
    }
    if (!seen.insert(cp.text()).second) {
      if (duplicates) ++*duplicates;
      continue;
    }
    out.push_back(std::move(cp));
  }
  return out;
}

BiasAnalyzer::BiasAnalyzer(llm::Gateway& gateway, const MetaPromptBank& bank, RepairOptions options)
    : gateway_(gateway), bank_(bank), options_(options) {}

BiasFinding BiasAnalyzer::detect(const CanonicalPrompt& cp, const PatchSet& patch, BiasType type) {
  BiasFinding f;
  f.prompt_id = cp.origin();
  f.bias_type = type;
  std::string shown = cp.hole_count() == 0 ? substitute(cp, {}) : substitute(cp, patch.as_map());
  auto req = llm::ChatRequest::user(bank_.render("bias_detect." + std::string(to_string(type)), {{"prompt", shown}}));
  req.temperature = 0.0;
  try {
    auto obj = gateway_.chat_json(llm::Role::judge, req,
                                  {{"explicit", llm::FieldKind::boolean},
                                   {"prone", llm::FieldKind::boolean},
                                   {"reasoning", llm::FieldKind::string}});
    f.is_explicit = obj["explicit"].get<bool>();
    f.prone = obj["prone"].get<bool>();
    f.reasoning = obj["reasoning"].get<std::string>();
    if ((f.is_explicit || f.prone) && f.reasoning.empty()) f.reasoning = "(detector gave no reasoning)";
  } catch (const MalformedResponse& e) {
    f.evaluable = false;
    f.error = e.what();
  }
  return f;
}

std::vector<BiasFinding> BiasAnalyzer::detect_all(const CanonicalPrompt& cp, const PatchSet& patch,
                                                  const std::vector<BiasType>& types) {
  std::vector<BiasFinding> out(types.size());
  parallel_for(types.size(), gateway_.config().concurrency,
               [&](std::size_t i) { out[i] = detect(cp, patch, types[i]); });
  return out;
}

DebiasResult BiasAnalyzer::debias(const CanonicalPrompt& cp, const PatchSet& patch, const BiasFinding& finding) {
  if (!finding.flagged()) throw PreconditionError("debias requires an explicit or bias-prone finding");
  DebiasResult result;
  struct Pending {
    CanonicalPrompt prompt;
    std::string reasoning;
  };
  std::deque<Pending> queue{{cp, finding.reasoning}};
  std::set<std::string> seen{cp.text()};

  while (result.rewrites.size() < options_.target_clean && result.iterations < options_.max_iterations) {
    if (queue.empty()) {
      ++result.queue_restarts;
      queue.push_back({cp, finding.reasoning});
    }
    Pending current = std::move(queue.front());
    queue.pop_front();
    const int distance = static_cast<int>(++result.iterations);

    auto req = llm::ChatRequest::user(bank_.render(
        "bias_rewrite", {{"bias_type", std::string(to_string(finding.bias_type))},
                         {"prompt", current.prompt.text()},
                         {"reasoning", current.reasoning},
                         {"holes", describe_holes(cp)},
                         {"count", std::to_string(options_.rewrites_per_iteration)}}));
    req.seed = mix_seed(distance, fnv1a64(current.prompt.text()));
    std::vector<std::string> texts;
    try {
      auto obj = gateway_.chat_json(llm::Role::generator, req, {{"prompts", llm::FieldKind::string_array}});
      texts = obj["prompts"].get<std::vector<std::string>>();
    } catch (const MalformedResponse&) {
      continue;
    }
    auto candidates = admissible_rewrites(texts, cp, seen, options_.rewrites_per_iteration,
                                          &result.discarded_hole_mismatch, &result.discarded_duplicates);

    std::vector<BiasFinding> verdicts(candidates.size());
    parallel_for(candidates.size(), gateway_.config().concurrency,
                 [&](std::size_t i) { verdicts[i] = detect(candidates[i], patch, finding.bias_type); });
    result.evaluations += candidates.size();

    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto& v = verdicts[i];
      if (v.evaluable && !v.is_explicit && !v.prone) {
        result.rewrites.push_back(
            {candidates[i].text(), candidates[i].hole_set(), distance, CandidateStatus::clean});
      } else {
        queue.push_back({candidates[i], v.evaluable ? v.reasoning : current.reasoning});
      }
    }
  }
  std::stable_sort(result.rewrites.begin(), result.rewrites.end(),
                   [](const auto& a, const auto& b) { return a.distance < b.distance; });
  result.partial = result.rewrites.size() < options_.target_clean;
  return result;
}

}  // namespace promptdoctor
