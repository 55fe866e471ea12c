#include "promptdoctor/report.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"

namespace promptdoctor {

namespace {

std::optional<std::string> get_opt_string(const nlohmann::json& j, const char* key) {
  if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
  return std::nullopt;
}

CandidateStatus status_from_string(std::string_view s) {
  if (s == "clean") return CandidateStatus::clean;
  if (s == "flawed") return CandidateStatus::flawed;
  return CandidateStatus::unevaluated;
}

}  // namespace

bool PromptEntry::has_findings() const {
  for (const auto& b : bias) {
    if (b.finding.flagged()) return true;
  }
  return injection && injection->report.vulnerable;
}

std::vector<RewriteOption> rewrite_options(const PromptEntry& entry) {
  std::vector<RewriteOption> out;
  for (const auto& b : entry.bias) {
    for (const auto& r : b.rewrites) out.push_back({"bias:" + std::string(to_string(b.finding.bias_type)), r.text, r.distance});
  }
  if (entry.injection && entry.injection->hardened) {
    out.push_back({"injection", entry.injection->hardened->text, entry.injection->hardened->distance});
  }
  return out;
}

const PromptEntry* LintReport::find(std::string_view prompt_id) const {
  for (const auto& p : prompts) {
    if (p.prompt_id == prompt_id) return &p;
  }
  return nullptr;
}

std::size_t LintReport::finding_count() const {
  std::size_t n = 0;
  for (const auto& p : prompts) {
    for (const auto& b : p.bias) n += b.finding.flagged() ? 1 : 0;
    if (p.injection && p.injection->report.vulnerable) ++n;
  }
  return n;
}

nlohmann::json to_json(const RewriteCandidate& c) {
  return {{"text", c.text},
          {"distance", c.distance},
          {"holes", std::vector<std::string>(c.holes.begin(), c.holes.end())},
          {"status", to_string(c.status)}};
}

RewriteCandidate rewrite_candidate_from_json(const nlohmann::json& j) {
  RewriteCandidate c;
  c.text = j.at("text").get<std::string>();
  c.distance = j.at("distance").get<int>();
  if (j.contains("holes")) {
    auto h = j["holes"].get<std::vector<std::string>>();
    c.holes = std::set<std::string>(h.begin(), h.end());
  } else {
    c.holes = CanonicalPrompt::parse(c.text).hole_set();
  }
  c.status = status_from_string(j.value("status", std::string("clean")));
  return c;
}

nlohmann::json to_json(const BiasEntry& e, const std::string& prompt_id) {
  nlohmann::json rewrites = nlohmann::json::array();
  for (const auto& r : e.rewrites) rewrites.push_back(to_json(r));
  nlohmann::json j{{"prompt_id", prompt_id},
                   {"bias_type", to_string(e.finding.bias_type)},
                   {"explicit", e.finding.is_explicit},
                   {"prone", e.finding.prone},
                   {"reasoning", e.finding.reasoning},
                   {"rewrites", rewrites},
                   {"partial", e.partial},
                   {"iterations", e.iterations},
                   {"evaluable", e.finding.evaluable}};
  if (!e.finding.error.empty()) j["error"] = e.finding.error;
  return j;
}

namespace {

BiasEntry bias_entry_from_json(const nlohmann::json& j) {
  BiasEntry e;
  e.finding.prompt_id = get_opt_string(j, "prompt_id");
  e.finding.bias_type = bias_type_from_string(j.at("bias_type").get<std::string>());
  e.finding.is_explicit = j.at("explicit").get<bool>();
  e.finding.prone = j.at("prone").get<bool>();
  e.finding.reasoning = j.at("reasoning").get<std::string>();
  e.finding.evaluable = j.value("evaluable", true);
  e.finding.error = j.value("error", std::string());
  for (const auto& r : j.at("rewrites")) e.rewrites.push_back(rewrite_candidate_from_json(r));
  e.partial = j.value("partial", false);
  e.iterations = j.value("iterations", std::size_t{0});
  return e;
}

}  // namespace

nlohmann::json to_json(const PromptEntry& e) {
  nlohmann::json bias = nlohmann::json::array();
  for (const auto& b : e.bias) bias.push_back(to_json(b, e.prompt_id));
  nlohmann::json j{{"prompt_id", e.prompt_id},
                   {"file", e.file},
                   {"span", {e.span.start, e.span.end}},
                   {"raw", e.raw},
                   {"language_hint", to_string(e.language_hint)},
                   {"text", e.text},
                   {"holes", e.holes},
                   {"patch", e.patch ? to_json(*e.patch) : nlohmann::json(nullptr)},
                   {"bias", bias},
                   {"errors", e.errors}};
  if (e.injection) {
    auto inj = to_json(e.injection->report);
    inj["hardened"] = e.injection->hardened ? to_json(*e.injection->hardened) : nlohmann::json(nullptr);
    inj["exhausted"] = e.injection->exhausted;
    inj["iterations"] = e.injection->iterations;
    j["injection"] = inj;
  } else {
    j["injection"] = nullptr;
  }
  j["optimization"] = e.optimization ? *e.optimization : nlohmann::json(nullptr);
  j["rewrite_options"] = nlohmann::json::array();
  for (const auto& o : rewrite_options(e)) {
    j["rewrite_options"].push_back({{"kind", o.kind}, {"text", o.text}, {"distance", o.distance}});
  }
  return j;
}

PromptEntry prompt_entry_from_json(const nlohmann::json& j) {
  PromptEntry e;
  e.prompt_id = j.at("prompt_id").get<std::string>();
  e.file = j.at("file").get<std::string>();
  e.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
  e.raw = j.at("raw").get<std::string>();
  e.language_hint = j.value("language_hint", std::string("python-like")) == "generic-template"
                        ? LanguageHint::generic_template
                        : LanguageHint::python_like;
  e.text = j.at("text").get<std::string>();
  e.holes = j.at("holes").get<std::vector<std::string>>();
  if (j.contains("patch") && !j["patch"].is_null()) e.patch = patch_set_from_json(j["patch"]);
  for (const auto& b : j.at("bias")) e.bias.push_back(bias_entry_from_json(b));
  if (j.contains("injection") && !j["injection"].is_null()) {
    const auto& inj = j["injection"];
    InjectionEntry ie;
    ie.report = vulnerability_report_from_json(inj);
    if (inj.contains("hardened") && !inj["hardened"].is_null()) ie.hardened = rewrite_candidate_from_json(inj["hardened"]);
    ie.exhausted = inj.value("exhausted", false);
    ie.iterations = inj.value("iterations", std::size_t{0});
    e.injection = std::move(ie);
  }
  if (j.contains("optimization") && !j["optimization"].is_null()) e.optimization = j["optimization"];
  e.errors = j.value("errors", std::vector<std::string>{});
  return e;
}

nlohmann::json to_json(const LintReport& r) {
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& p : r.prompts) prompts.push_back(to_json(p));
  return {{"run_id", r.run_id},
          {"created_at", r.created_at},
          {"prompts", prompts},
          {"config", r.config},
          {"budget", {{"calls", r.budget.calls},
                      {"limit", r.budget.limit ? nlohmann::json(*r.budget.limit) : nlohmann::json(nullptr)},
                      {"exceeded", r.budget.exceeded}}},
          {"summary", {{"prompts", r.prompts.size()}, {"findings", r.finding_count()}}}};
}

LintReport lint_report_from_json(const nlohmann::json& j) {
  LintReport r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    for (const auto& p : j.at("prompts")) r.prompts.push_back(prompt_entry_from_json(p));
    r.config = j.value("config", nlohmann::json::object());
    if (j.contains("budget")) {
      const auto& b = j["budget"];
      r.budget.calls = b.value("calls", std::size_t{0});
      if (b.contains("limit") && !b["limit"].is_null()) r.budget.limit = b["limit"].get<std::size_t>();
      r.budget.exceeded = b.value("exceeded", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string serialize(const LintReport& r) { return to_json(r).dump(2) + "\n"; }

std::string report_digest(const LintReport& r) { return sha256_hex(serialize(r)); }

void save_report(const std::string& path, const LintReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path);
  out << serialize(r);
  if (!out) throw IoError("write failed for " + path);
}

LintReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
  return lint_report_from_json(j);
}

std::string make_run_id(const std::string& created_at, const std::vector<std::string>& prompt_ids) {
  std::string material = created_at;
  for (const auto& id : prompt_ids) material += '\0' + id;
  return "run-" + sha256_hex(material).substr(0, 12);
}

std::string timestamp_now() {
  std::time_t t;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string summarize(const LintReport& r) {
  std::ostringstream os;
  for (const auto& p : r.prompts) {
    std::string where = p.file + ":" + std::to_string(p.span.start);
    for (const auto& b : p.bias) {
      if (!b.finding.evaluable) {
        os << where << ": warning: " << to_string(b.finding.bias_type) << " bias check failed: " << b.finding.error << '\n';
        continue;
      }
      if (!b.finding.flagged()) continue;
      os << where << ": " << to_string(b.finding.bias_type) << " bias ("
         << (b.finding.is_explicit ? "explicit" : "prone") << "), " << b.rewrites.size() << " rewrite(s)"
         << (b.partial ? ", partial" : "") << '\n';
    }
    if (p.injection && p.injection->report.vulnerable) {
      os << where << ": injectable via";
      for (const auto& h : p.injection->report.vulnerable_holes()) os << " {" << h << "}";
      os << (p.injection->hardened ? ", hardened rewrite available" : ", no hardened rewrite") << '\n';
    }
    for (const auto& e : p.errors) os << where << ": error: " << e << '\n';
  }
  os << r.prompts.size() << " prompt(s), " << r.finding_count() << " finding(s), " << r.budget.calls
     << " model call(s)\n";
  return os.str();
}

}  // namespace promptdoctor
