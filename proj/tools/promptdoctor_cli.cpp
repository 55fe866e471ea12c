#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "promptdoctor/backends.hpp"
#include "promptdoctor/corpus.hpp"
#include "promptdoctor/errors.hpp"
#include "promptdoctor/fix.hpp"
#include "promptdoctor/gateway.hpp"
#include "promptdoctor/injection.hpp"
#include "promptdoctor/metrics.hpp"
#include "promptdoctor/optimizer.hpp"
#include "promptdoctor/patcher.hpp"
#include "promptdoctor/pipeline.hpp"
#include "promptdoctor/report.hpp"
#include "promptdoctor/service.hpp"

namespace pd = promptdoctor;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFindings = 1,
  kConfig = 2,
  kIo = 3,
  kBudget = 4,
  kFailure = 5,
};

struct Globals {
  std::string config_path;
  std::string backend = "http";
  std::string mock_script;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> concurrency;
  std::uint64_t seed = 0;
  std::string created_at;
  bool quiet = false;
};

struct Session {
  pd::llm::GatewayConfig config;
  std::unique_ptr<pd::llm::Gateway> gateway;
};

pd::llm::GatewayConfig load_config(const Globals& g) {
  auto cfg = g.config_path.empty() ? pd::llm::GatewayConfig::defaults() : pd::llm::load_gateway_config(g.config_path);
  if (g.budget) cfg.budget = g.budget;
  if (g.concurrency) cfg.concurrency = *g.concurrency;
  return cfg;
}

Session open_session(const Globals& g) {
  Session s;
  s.config = load_config(g);
  s.gateway = std::make_unique<pd::llm::Gateway>(s.config, pd::llm::make_backend(s.config, g.backend, g.mock_script));
  return s;
}

nlohmann::json config_snapshot(const Globals& g, const pd::llm::GatewayConfig& cfg) {
  auto j = cfg.to_json();
  j["backend"] = g.backend;
  j["seed"] = g.seed;
  return j;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pd::IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw pd::IoError("cannot write " + path);
  out << text;
  if (!out) throw pd::IoError("write failed for " + path);
}

std::vector<pd::BiasType> parse_bias_types(const std::vector<std::string>& names) {
  if (names.empty()) return {std::begin(pd::kAllBiasTypes), std::end(pd::kAllBiasTypes)};
  std::vector<pd::BiasType> out;
  for (const auto& n : names) out.push_back(pd::bias_type_from_string(n));
  return out;
}

int finish_report(const pd::LintReport& report, const std::string& out_path, bool fail_on_findings, bool quiet) {
  if (!out_path.empty()) pd::save_report(out_path, report);
  else std::cout << pd::serialize(report);
  if (!quiet) std::cerr << pd::summarize(report);
  if (report.budget.exceeded) {
    std::cerr << "error: model call budget exhausted; report is partial\n";
    return kBudget;
  }
  return fail_on_findings && report.finding_count() > 0 ? kFindings : kOk;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lint, repair and optimize LLM prompt templates embedded in source code."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Gateway config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--backend", g.backend, "Model backend")->check(CLI::IsMember({"http", "mock"}));
  app.add_option("--mock-script", g.mock_script, "Scripted replies for --backend mock (JSONL)")->check(CLI::ExistingFile);
  app.add_option("--budget", g.budget, "Maximum model calls");
  app.add_option("--concurrency", g.concurrency, "Maximum in-flight model calls");
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--created-at", g.created_at, "Timestamp recorded in reports (defaults to now or SOURCE_DATE_EPOCH)");
  app.add_flag("-q,--quiet", g.quiet, "Suppress the human summary");

  std::function<int()> action;

  // extract
  auto* extract = app.add_subcommand("extract", "Find prompts in source files and canonicalize them");
  std::vector<std::string> extract_paths;
  std::string extract_out;
  std::size_t min_length = 32;
  extract->add_option("paths", extract_paths, "Files or directories")->required();
  extract->add_option("-o,--out", extract_out, "Corpus JSONL (stdout when omitted)");
  extract->add_option("--min-length", min_length, "Shortest literal considered a prompt");
  extract->callback([&] {
    action = [&] {
      pd::ExtractOptions opts;
      opts.min_length = min_length;
      auto res = pd::extract_paths(extract_paths, opts);
      if (extract_out.empty()) {
        for (const auto& r : res.records) std::cout << pd::to_json(r).dump() << '\n';
      } else {
        pd::write_corpus_jsonl(extract_out, res.records);
      }
      if (!g.quiet) {
        std::cerr << res.records.size() << " prompt(s) from " << res.files << " file(s); skipped: "
                  << res.diagnostics.too_short << " short, " << res.diagnostics.multi_branch << " multi-branch, "
                  << res.diagnostics.unparseable << " unparseable, " << res.diagnostics.lex_errors << " lex error(s), "
                  << res.canonicalization_errors << " canonicalization error(s)\n";
      }
      return kOk;
    };
  });

  // clean
  auto* clean = app.add_subcommand("clean", "Drop short and non-English prompts");
  std::string clean_in, clean_out, clean_stats;
  clean->add_option("-i,--in", clean_in, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  clean->add_option("-o,--out", clean_out, "Cleaned corpus JSONL")->required();
  clean->add_option("--stats", clean_stats, "Write statistics JSON here");
  clean->callback([&] {
    action = [&] {
      auto [kept, stats] = pd::clean_records(pd::read_corpus_jsonl(clean_in));
      pd::write_corpus_jsonl(clean_out, kept);
      if (!clean_stats.empty()) write_text(clean_stats, pd::corpus::to_json(stats).dump(2) + "\n");
      if (!g.quiet) {
        std::cerr << stats.retained << " of " << stats.total << " kept (" << stats.removed_short << " short, "
                  << stats.removed_non_english << " non-English)\n";
      }
      return kOk;
    };
  });

  // sample
  auto* sample = app.add_subcommand("sample", "Stratified sample by hole count");
  std::string sample_in, sample_out;
  double confidence = 0.95, margin = 0.05;
  sample->add_option("-i,--in", sample_in, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  sample->add_option("-o,--out", sample_out, "Sample JSONL")->required();
  sample->add_option("--confidence", confidence, "Confidence level")->check(CLI::Range(0.5, 0.9999));
  sample->add_option("--error", margin, "Margin of error")->check(CLI::Range(0.001, 0.5));
  sample->callback([&] {
    action = [&] {
      auto res = pd::sample_records(pd::read_corpus_jsonl(sample_in), confidence, margin, g.seed);
      pd::write_corpus_jsonl(sample_out, res.records);
      if (!g.quiet) {
        for (const auto& s : res.strata) {
          std::cerr << "stratum " << s.label << ": " << s.sample << " of " << s.population << '\n';
        }
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      }
      return kOk;
    };
  });

  // lint-bias / lint-injection / lint
  struct LintArgs {
    std::string in, out, attacks;
    std::vector<std::string> types;
    bool no_repair = false;
    bool fail_on_findings = false;
  };
  auto lint_args = std::make_shared<LintArgs>();
  auto add_lint = [&](const std::string& name, const std::string& desc, bool bias, bool injection) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->add_option("-i,--in", lint_args->in, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", lint_args->out, "Report JSON (stdout when omitted)");
    if (bias) cmd->add_option("--types", lint_args->types, "Bias types (gender, race, sexuality)");
    if (injection) {
      cmd->add_option("--attacks", lint_args->attacks, "Attack corpus JSONL")->required()->check(CLI::ExistingFile);
    }
    cmd->add_flag("--no-repair", lint_args->no_repair, "Detect only");
    cmd->add_flag("--fail-on-findings", lint_args->fail_on_findings, "Exit 1 when anything is flagged");
    cmd->callback([&, bias, injection] {
      action = [&, bias, injection] {
        auto s = open_session(g);
        pd::LintOptions opts;
        opts.check_bias = bias;
        opts.check_injection = injection;
        opts.repair = !lint_args->no_repair;
        opts.bias_types = parse_bias_types(lint_args->types);
        if (injection) opts.attacks = pd::load_attacks(lint_args->attacks);
        opts.seed = g.seed;
        opts.created_at = g.created_at;
        opts.config_snapshot = config_snapshot(g, s.config);
        auto report = pd::lint(pd::read_corpus_jsonl(lint_args->in), *s.gateway, opts);
        return finish_report(report, lint_args->out, lint_args->fail_on_findings, g.quiet);
      };
    });
  };
  add_lint("lint-bias", "Detect and repair bias-prone prompts", true, false);
  add_lint("lint-injection", "Test holes for prompt injection and harden vulnerable prompts", false, true);
  add_lint("lint", "Run bias and injection checks", true, true);

  // optimize
  auto* optimize = app.add_subcommand("optimize", "Search for a better-performing rewrite of one prompt");
  std::string opt_prompt, opt_prompt_file, opt_corpus, opt_id, opt_category, opt_hp, opt_out, opt_dataset;
  optimize->add_option("--prompt", opt_prompt, "Prompt text in canonical form");
  optimize->add_option("--prompt-file", opt_prompt_file, "File holding the prompt")->check(CLI::ExistingFile);
  optimize->add_option("--corpus", opt_corpus, "Corpus JSONL to take the prompt from")->check(CLI::ExistingFile);
  optimize->add_option("--id", opt_id, "Prompt id within --corpus")->needs("--corpus");
  optimize->add_option("--category", opt_category, "qa, grammar-correction, summarization or translation");
  optimize->add_option("--hyperparams", opt_hp, "Hyperparameter overrides (JSON)")->check(CLI::ExistingFile);
  optimize->add_option("--dataset", opt_dataset, "Write the synthetic dataset here (JSONL)");
  optimize->add_option("-o,--out", opt_out, "OptimizationRun JSON (stdout when omitted)");
  optimize->callback([&] {
    action = [&] {
      pd::CanonicalPrompt source;
      int given = !opt_prompt.empty() + !opt_prompt_file.empty() + !opt_id.empty();
      if (given != 1) throw pd::ConfigError("give exactly one of --prompt, --prompt-file or --corpus/--id");
      if (!opt_prompt.empty()) source = pd::CanonicalPrompt::parse(opt_prompt);
      else if (!opt_prompt_file.empty()) source = pd::CanonicalPrompt::parse(read_text(opt_prompt_file));
      else {
        bool found = false;
        for (const auto& r : pd::read_corpus_jsonl(opt_corpus)) {
          if (r.source.id == opt_id) {
            source = r.prompt;
            found = true;
          }
        }
        if (!found) throw pd::ConfigError("no prompt " + opt_id + " in " + opt_corpus);
      }
      auto hp = opt_hp.empty() ? pd::OptimizerHyperparams{}
                               : pd::OptimizerHyperparams::from_json(nlohmann::json::parse(read_text(opt_hp)));
      auto s = open_session(g);
      pd::corpus::TaskCategory category;
      if (!opt_category.empty()) {
        category = pd::corpus::category_from_string(opt_category);
      } else {
        auto* gw = s.gateway.get();
        pd::corpus::Categorizer cat({}, [gw](const std::vector<std::string>& t) { return gw->embed(t); });
        category = cat.categorize(source);
      }
      if (category == pd::corpus::TaskCategory::uncategorized) {
        throw pd::ConfigError("prompt is uncategorized; pass --category");
      }
      pd::Patcher patcher(*s.gateway);
      auto [train, test] = patcher.synthesize_dataset(source, category, hp.train_count, hp.test_count, g.seed);
      if (!opt_dataset.empty()) pd::write_dataset_jsonl(opt_dataset, {&train, &test});
      pd::Optimizer opt(*s.gateway, hp);
      auto run = opt.optimize(source, category, train, test, g.seed);
      write_text(opt_out, pd::to_json(run).dump(2) + "\n");
      if (!g.quiet) {
        std::cerr << "verdict: " << pd::to_string(run.verdict) << "; train " << run.source_scored.train_score.value
                  << " -> " << run.best.train_score.value << '\n';
        for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
      }
      return run.partial ? kBudget : kOk;
    };
  });

  // report
  auto* report_cmd = app.add_subcommand("report", "Summarize a stored report");
  std::string report_in;
  std::string report_format = "text";
  bool report_fail = false;
  report_cmd->add_option("-i,--in", report_in, "Report JSON")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));
  report_cmd->add_flag("--fail-on-findings", report_fail, "Exit 1 when anything is flagged");
  report_cmd->callback([&] {
    action = [&] {
      auto r = pd::load_report(report_in);
      if (report_format == "json") std::cout << pd::serialize(r);
      else std::cout << pd::summarize(r);
      return report_fail && r.finding_count() > 0 ? kFindings : kOk;
    };
  });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "extract, clean, lint-bias and lint-injection in one go");
  std::vector<std::string> pipe_paths;
  std::string pipe_out_dir = "promptdoctor-out", pipe_attacks;
  bool pipe_fail = false;
  pipeline->add_option("paths", pipe_paths, "Files or directories")->required();
  pipeline->add_option("--attacks", pipe_attacks, "Attack corpus JSONL")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--out-dir", pipe_out_dir, "Where artifacts go");
  pipeline->add_flag("--fail-on-findings", pipe_fail, "Exit 1 when anything is flagged");
  pipeline->callback([&] {
    action = [&] {
      auto s = open_session(g);
      std::error_code ec;
      std::filesystem::create_directories(pipe_out_dir, ec);
      if (ec) throw pd::IoError("cannot create " + pipe_out_dir + ": " + ec.message());
      auto dir = std::filesystem::path(pipe_out_dir);
      auto extracted = pd::extract_paths(pipe_paths);
      pd::write_corpus_jsonl((dir / "corpus.jsonl").string(), extracted.records);
      auto [kept, stats] = pd::clean_records(extracted.records);
      pd::write_corpus_jsonl((dir / "cleaned.jsonl").string(), kept);
      pd::LintOptions opts;
      opts.attacks = pd::load_attacks(pipe_attacks);
      opts.seed = g.seed;
      opts.created_at = g.created_at;
      opts.config_snapshot = config_snapshot(g, s.config);
      auto report = pd::lint(kept, *s.gateway, opts);
      pd::ReportStore store((dir / "reports").string());
      auto path = store.save(report);
      if (!g.quiet) {
        std::cerr << pd::summarize(report) << "report " << path << " sha256 " << pd::report_digest(report) << '\n';
      }
      if (report.budget.exceeded) return kBudget;
      return pipe_fail && report.finding_count() > 0 ? kFindings : kOk;
    };
  });

  // apply
  auto* apply = app.add_subcommand("apply", "Write a suggested rewrite back into its source file");
  std::string apply_report, apply_id, apply_root = ".";
  std::size_t apply_index = 0;
  apply->add_option("--report", apply_report, "Report JSON")->required()->check(CLI::ExistingFile);
  apply->add_option("--prompt-id", apply_id, "Prompt id")->required();
  apply->add_option("--index", apply_index, "Index into the prompt's rewrite options")->required();
  apply->add_option("--source-root", apply_root, "Directory relative report paths resolve against");
  apply->callback([&] {
    action = [&] {
      auto r = pd::load_report(apply_report);
      const auto* entry = r.find(apply_id);
      if (!entry) throw pd::ConfigError("no prompt " + apply_id + " in " + apply_report);
      auto options = pd::rewrite_options(*entry);
      if (apply_index >= options.size()) {
        throw pd::ConfigError("prompt has " + std::to_string(options.size()) + " rewrite option(s)");
      }
      pd::FixAction a;
      a.prompt_id = apply_id;
      a.chosen_rewrite = options[apply_index].text;
      a.file = entry->file;
      if (std::filesystem::path(a.file).is_relative()) a.file = (std::filesystem::path(apply_root) / a.file).string();
      a.span = entry->span;
      a.original_raw = entry->raw;
      auto res = pd::apply_fix(a);
      std::cout << pd::to_json(res).dump(2) << '\n';
      return res.status == pd::FixStatus::applied ? kOk : kFindings;
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API and review UI");
  pd::ServiceOptions sopts;
  std::string host = "127.0.0.1", serve_attacks;
  int port = 8765;
  serve->add_option("--reports", sopts.reports_dir, "Report store directory");
  serve->add_option("--ui-dir", sopts.ui_dir, "Static UI assets")->check(CLI::ExistingDirectory);
  serve->add_option("--source-root", sopts.source_root, "Directory relative report paths resolve against");
  serve->add_option("--attacks", serve_attacks, "Attack corpus for /api/analyze")->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->callback([&] {
    action = [&] {
      auto s = open_session(g);
      if (!serve_attacks.empty()) sopts.attacks = pd::load_attacks(serve_attacks);
      sopts.analyze_options.repair = false;
      sopts.analyze_options.seed = g.seed;
      pd::Service service(sopts, s.gateway.get());
      int bound = service.start(host, port);
      std::cerr << "serving on http://" << host << ":" << bound << '\n';
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      service.stop();
      return kOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    return action();
  } catch (const pd::BudgetExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBudget;
  } catch (const pd::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const pd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const pd::PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
