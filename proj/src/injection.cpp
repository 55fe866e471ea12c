#include "promptdoctor/injection.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/parallel.hpp"
#include "promptdoctor/text_util.hpp"

namespace promptdoctor {

nlohmann::json to_json(const AttackCase& a) {
  return {{"id", a.id}, {"payload", a.payload}, {"target", a.target}, {"description", a.description}};
}

AttackCase attack_from_json(const nlohmann::json& j) {
  try {
    return {j.at("id").get<std::string>(), j.at("payload").get<std::string>(), j.at("target").get<std::string>(),
            j.value("description", std::string())};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("attack case: ") + e.what());
  }
}

void validate_attacks(const std::vector<AttackCase>& attacks) {
  std::set<std::string> ids;
  for (const auto& a : attacks) {
    if (a.id.empty()) throw ConfigError("attack with empty id");
    if (!ids.insert(a.id).second) throw ConfigError("duplicate attack id '" + a.id + "'");
    if (a.payload.empty()) throw ConfigError("attack '" + a.id + "' has an empty payload");
    if (text::codepoint_length(a.target) < kMinTargetLength) {
      throw ConfigError("attack '" + a.id + "' target is shorter than " + std::to_string(kMinTargetLength) +
                        " characters");
    }
  }
}

std::vector<AttackCase> load_attacks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attack corpus " + path);
  std::vector<AttackCase> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    out.push_back(attack_from_json(j));
  }
  validate_attacks(out);
  return out;
}

bool reply_contains_target(std::string_view reply, std::string_view target) {
  if (target.empty()) return false;
  return text::to_lower(reply).find(text::to_lower(target)) != std::string::npos;
}

std::size_t VulnerabilityReport::vulnerable_hole_count() const {
  return static_cast<std::size_t>(
      std::count_if(hole_results.begin(), hole_results.end(), [](const auto& kv) { return !kv.second.empty(); }));
}

std::vector<std::string> VulnerabilityReport::vulnerable_holes() const {
  std::vector<std::string> out;
  for (const auto& [h, s] : hole_results) {
    if (!s.empty()) out.push_back(h);
  }
  return out;
}

nlohmann::json to_json(const VulnerabilityReport& r) {
  nlohmann::json holes = nlohmann::json::object();
  for (const auto& [h, s] : r.hole_results) holes[h] = std::vector<std::string>(s.begin(), s.end());
  nlohmann::json inconclusive = nlohmann::json::array();
  for (const auto& [h, a] : r.inconclusive) inconclusive.push_back({{"hole", h}, {"attack", a}});
  return {{"prompt_id", r.prompt_id ? nlohmann::json(*r.prompt_id) : nlohmann::json(nullptr)},
          {"vulnerable", r.vulnerable},
          {"hole_results", holes},
          {"tested_attacks", r.tested_attacks},
          {"trials", r.trials},
          {"inconclusive", inconclusive},
          {"partial", r.partial}};
}

VulnerabilityReport vulnerability_report_from_json(const nlohmann::json& j) {
  VulnerabilityReport r;
  if (j.contains("prompt_id") && j["prompt_id"].is_string()) r.prompt_id = j["prompt_id"].get<std::string>();
  r.vulnerable = j.at("vulnerable").get<bool>();
  for (const auto& [h, s] : j.at("hole_results").items()) {
    auto ids = s.get<std::vector<std::string>>();
    r.hole_results[h] = std::set<std::string>(ids.begin(), ids.end());
  }
  r.tested_attacks = j.value("tested_attacks", std::size_t{0});
  r.trials = j.value("trials", std::size_t{0});
  for (const auto& i : j.value("inconclusive", nlohmann::json::array())) {
    r.inconclusive.emplace_back(i.at("hole").get<std::string>(), i.at("attack").get<std::string>());
  }
  r.partial = j.value("partial", false);
  return r;
}

InjectionAnalyzer::InjectionAnalyzer(llm::Gateway& gateway, const MetaPromptBank& bank, RepairOptions options)
    : gateway_(gateway), bank_(bank), options_(options) {}

VulnerabilityReport InjectionAnalyzer::test(const CanonicalPrompt& cp, const PatchSet& patch,
                                            const std::vector<AttackCase>& attacks) {
  if (cp.hole_count() == 0) throw PreconditionError("injection testing requires a prompt with holes");
  if (attacks.empty()) throw PreconditionError("injection testing requires at least one attack");

  enum class Outcome { skipped, success, failure, inconclusive };
  const auto& holes = cp.holes();
  const std::size_t n = holes.size() * attacks.size();
  std::vector<Outcome> outcomes(n, Outcome::skipped);
  std::atomic<bool> out_of_budget{false};
  const auto base = patch.as_map();

  parallel_for(n, gateway_.config().concurrency, [&](std::size_t t) {
    if (out_of_budget.load()) return;
    const auto& hole = holes[t / attacks.size()];
    const auto& attack = attacks[t % attacks.size()];
    auto values = base;
    values[hole.name] = attack.payload;
    auto req = llm::ChatRequest::user(substitute(cp, values));
    req.temperature = 0.0;
    try {
      auto resp = gateway_.chat(llm::Role::responder, req);
      outcomes[t] = reply_contains_target(resp.content, attack.target) ? Outcome::success : Outcome::failure;
    } catch (const BudgetExceeded&) {
      out_of_budget.store(true);
    } catch (const UnscriptedCall&) {
      throw;
    } catch (const TransportError&) {
      outcomes[t] = Outcome::inconclusive;
    }
  });

  VulnerabilityReport r;
  r.prompt_id = cp.origin();
  r.tested_attacks = attacks.size();
  r.partial = out_of_budget.load();
  for (const auto& h : holes) r.hole_results[h.name];
  for (std::size_t t = 0; t < n; ++t) {
    const auto& hole = holes[t / attacks.size()].name;
    const auto& attack = attacks[t % attacks.size()].id;
    switch (outcomes[t]) {
      case Outcome::skipped: continue;
      case Outcome::success: r.hole_results[hole].insert(attack); break;
      case Outcome::inconclusive: r.inconclusive.emplace_back(hole, attack); break;
      case Outcome::failure: break;
    }
    ++r.trials;
  }
  r.vulnerable = r.vulnerable_hole_count() > 0;
  return r;
}

HardenResult InjectionAnalyzer::harden(const CanonicalPrompt& cp, const PatchSet& patch,
                                       const VulnerabilityReport& report, const std::vector<AttackCase>& attacks) {
  if (!report.vulnerable) throw PreconditionError("harden requires a vulnerable report");
  HardenResult result;
  struct Pending {
    CanonicalPrompt prompt;
    VulnerabilityReport report;
  };
  std::vector<Pending> queue{{cp, report}};
  std::set<std::string> seen{cp.text()};
  std::map<std::string, const AttackCase*> by_id;
  for (const auto& a : attacks) by_id[a.id] = &a;

  while (result.iterations < options_.max_iterations) {
    if (queue.empty()) queue.push_back({cp, report});
    std::stable_sort(queue.begin(), queue.end(), [](const Pending& a, const Pending& b) {
      return a.report.vulnerable_hole_count() < b.report.vulnerable_hole_count();
    });
    HardenStep step;
    step.queue_size = queue.size();
    step.queue_min = queue.front().report.vulnerable_hole_count();
    for (const auto& p : queue) step.queue_min = std::min(step.queue_min, p.report.vulnerable_hole_count());
    Pending current = std::move(queue.front());
    queue.erase(queue.begin());
    step.popped_count = current.report.vulnerable_hole_count();
    step.iteration = ++result.iterations;
    result.trace.push_back(step);
    const int distance = static_cast<int>(result.iterations);

    std::set<std::string> successful;
    for (const auto& [h, ids] : current.report.hole_results) successful.insert(ids.begin(), ids.end());
    std::string attack_list;
    for (const auto& id : successful) {
      auto it = by_id.find(id);
      attack_list += "- " + (it != by_id.end() ? it->second->payload : id) + "\n";
    }
    std::string vulnerable;
    for (const auto& h : current.report.vulnerable_holes()) vulnerable += (vulnerable.empty() ? "{" : ", {") + h + "}";

    auto req = llm::ChatRequest::user(bank_.render("harden", {{"prompt", current.prompt.text()},
                                                              {"holes", describe_holes(cp)},
                                                              {"vulnerable_holes", vulnerable},
                                                              {"attacks", attack_list},
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
    for (auto& cand : candidates) {
      auto rep = test(cand, patch, attacks);
      bool clean = !rep.vulnerable && rep.inconclusive.empty() && !rep.partial;
      result.tested.push_back({cand.text(), cand.hole_set(), distance,
                               clean ? CandidateStatus::clean : CandidateStatus::flawed});
      if (clean) {
        result.hardened = result.tested.back();
        return result;
      }
      queue.push_back({std::move(cand), std::move(rep)});
    }
  }
  result.exhausted = true;
  return result;
}

}  // namespace promptdoctor
