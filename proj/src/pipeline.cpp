#include "promptdoctor/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/patcher.hpp"

namespace promptdoctor {

namespace fs = std::filesystem;

namespace {

bool is_template_file(const fs::path& p) {
  auto ext = p.extension().string();
  return ext == ".prompt" || ext == ".tmpl" || ext == ".txt";
}

bool is_python_file(const fs::path& p) {
  auto ext = p.extension().string();
  return ext == ".py" || ext == ".pyi";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExtractSummary extract_paths(const std::vector<std::string>& paths, const ExtractOptions& options) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      for (auto it = fs::recursive_directory_iterator(p, fs::directory_options::skip_permission_denied, ec);
           it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        if (it->is_regular_file() && (is_python_file(it->path()) || is_template_file(it->path()))) {
          files.push_back(it->path());
        }
      }
      if (ec) throw IoError("cannot walk " + p + ": " + ec.message());
    } else if (fs::is_regular_file(p, ec)) {
      files.emplace_back(p);
    } else {
      throw IoError("no such file or directory: " + p);
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());

  ExtractSummary out;
  for (const auto& f : files) {
    ++out.files;
    auto src = read_file(f);
    auto hint = is_python_file(f) ? LanguageHint::python_like
                                  : (is_template_file(f) ? LanguageHint::generic_template : language_hint_for_path(f.string()));
    for (auto& sp : extract_prompts(src, hint, f.generic_string(), options, &out.diagnostics)) {
      try {
        auto cp = canonicalize(sp);
        out.records.push_back({std::move(sp), std::move(cp)});
      } catch (const CanonicalizationError&) {
        ++out.canonicalization_errors;
      }
    }
  }
  return out;
}

namespace {

std::vector<CanonicalPrompt> tagged_prompts(const std::vector<CorpusRecord>& records) {
  std::vector<CanonicalPrompt> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back(records[i].prompt);
    out.back().set_origin(std::to_string(i));
  }
  return out;
}

std::vector<CorpusRecord> untag(const std::vector<CorpusRecord>& records, const std::vector<CanonicalPrompt>& kept) {
  std::vector<CorpusRecord> out;
  out.reserve(kept.size());
  for (const auto& p : kept) out.push_back(records.at(std::stoul(*p.origin())));
  return out;
}

}  // namespace

std::pair<std::vector<CorpusRecord>, corpus::CorpusStats> clean_records(const std::vector<CorpusRecord>& records) {
  auto [kept, stats] = corpus::clean(tagged_prompts(records));
  return {untag(records, kept), stats};
}

RecordSample sample_records(const std::vector<CorpusRecord>& records, double confidence, double error,
                            std::uint64_t seed) {
  auto res = corpus::stratified_sample(tagged_prompts(records), confidence, error, seed);
  return {untag(records, res.prompts), std::move(res.strata), std::move(res.warnings)};
}

nlohmann::json ProgressEvent::to_json() const {
  return {{"kind", kind}, {"prompt_id", prompt_id}, {"message", message}, {"index", index}, {"total", total}};
}

CorpusRecord adhoc_record(const std::string& prompt_text) {
  if (prompt_text.empty()) throw PreconditionError("prompt text is empty");
  SourcePrompt sp;
  sp.file = "<adhoc>";
  sp.span = {0, prompt_text.size()};
  sp.raw = prompt_text;
  sp.language_hint = LanguageHint::generic_template;
  sp.id = SourcePrompt::make_id(sp.file, sp.span, sp.raw);
  auto cp = canonicalize(sp);
  return {std::move(sp), std::move(cp)};
}

LintReport lint(const std::vector<CorpusRecord>& records, llm::Gateway& gateway, const LintOptions& options,
                const ProgressFn& progress) {
  if (options.check_injection && options.attacks.empty()) {
    throw ConfigError("injection checks need an attack corpus");
  }
  LintReport report;
  report.created_at = options.created_at.empty() ? timestamp_now() : options.created_at;
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.source.id);
  report.run_id = make_run_id(report.created_at, ids);
  report.config = options.config_snapshot;
  report.budget.limit = gateway.budget();
  const std::size_t calls_before = gateway.calls_used();

  auto emit = [&](std::string kind, const std::string& id, std::string message, std::size_t index) {
    if (progress) progress({std::move(kind), id, std::move(message), index, records.size()});
  };

  Patcher patcher(gateway);
  BiasAnalyzer bias(gateway, MetaPromptBank::standard(), options.repair_options);
  InjectionAnalyzer injection(gateway, MetaPromptBank::standard(), options.repair_options);

  emit("run_started", "", std::to_string(records.size()) + " prompt(s)", 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    PromptEntry entry;
    entry.prompt_id = rec.source.id;
    entry.file = rec.source.file;
    entry.span = rec.source.span;
    entry.raw = rec.source.raw;
    entry.language_hint = rec.source.language_hint;
    entry.text = rec.prompt.text();
    entry.holes = rec.prompt.hole_names();
    CanonicalPrompt cp = rec.prompt;
    cp.set_origin(rec.source.id);
    emit("prompt_started", entry.prompt_id, rec.source.file, i);

    try {
      PatchSet patch;
      patch.prompt_id = entry.prompt_id;
      if (cp.hole_count() > 0) {
        try {
          patch = patcher.patch(cp, PatchMode::sequential, mix_seed(options.seed, i));
          entry.patch = patch;
        } catch (const MalformedResponse& e) {
          entry.errors.push_back(std::string("patching failed: ") + e.what());
          report.prompts.push_back(std::move(entry));
          emit("prompt_finished", rec.source.id, "patching failed", i);
          continue;
        }
      }

      if (options.check_bias) {
        auto findings = bias.detect_all(cp, patch, options.bias_types);
        for (auto& f : findings) {
          BiasEntry be;
          be.finding = std::move(f);
          if (options.repair && be.finding.flagged()) {
            emit("debias_started", entry.prompt_id, std::string(to_string(be.finding.bias_type)), i);
            auto res = bias.debias(cp, patch, be.finding);
            be.rewrites = std::move(res.rewrites);
            be.partial = res.partial;
            be.iterations = res.iterations;
          }
          entry.bias.push_back(std::move(be));
        }
      }

      if (options.check_injection && cp.hole_count() > 0) {
        InjectionEntry ie;
        ie.report = injection.test(cp, patch, options.attacks);
        if (options.repair && ie.report.vulnerable && !ie.report.partial) {
          emit("harden_started", entry.prompt_id, "", i);
          auto res = injection.harden(cp, patch, ie.report, options.attacks);
          ie.hardened = std::move(res.hardened);
          ie.exhausted = res.exhausted;
          ie.iterations = res.iterations;
        }
        if (ie.report.partial) report.budget.exceeded = true;
        entry.injection = std::move(ie);
      }
    } catch (const BudgetExceeded& e) {
      entry.errors.push_back(e.what());
      report.budget.exceeded = true;
    } catch (const TransportError& e) {
      entry.errors.push_back(std::string("model call failed: ") + e.what());
    } catch (const MalformedResponse& e) {
      entry.errors.push_back(std::string("unusable model reply: ") + e.what());
    }
    bool flagged = entry.has_findings();
    report.prompts.push_back(std::move(entry));
    emit("prompt_finished", rec.source.id, flagged ? "findings" : "clean", i);
    if (report.budget.exceeded) {
      emit("budget_exceeded", rec.source.id, "call budget exhausted", i);
      break;
    }
  }
  report.budget.calls = gateway.calls_used() - calls_before;
  emit("run_finished", "", std::to_string(report.finding_count()) + " finding(s)", records.size());
  return report;
}

}  // namespace promptdoctor
