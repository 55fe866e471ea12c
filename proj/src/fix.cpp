#include "promptdoctor/fix.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include <unistd.h>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"

namespace promptdoctor {

namespace fs = std::filesystem;

std::string_view to_string(FixStatus s) {
  switch (s) {
    case FixStatus::pending: return "pending";
    case FixStatus::applied: return "applied";
    case FixStatus::conflicted: return "conflicted";
  }
  return "pending";
}

FixStatus fix_status_from_string(std::string_view s) {
  if (s == "applied") return FixStatus::applied;
  if (s == "conflicted") return FixStatus::conflicted;
  return FixStatus::pending;
}

nlohmann::json to_json(const FixAction& a) {
  nlohmann::json j{{"prompt_id", a.prompt_id},
                   {"chosen_rewrite", a.chosen_rewrite},
                   {"file", a.file},
                   {"span", {a.span.start, a.span.end}},
                   {"original_raw", a.original_raw},
                   {"status", to_string(a.status)},
                   {"message", a.message}};
  j["new_span"] = a.new_span ? nlohmann::json{a.new_span->start, a.new_span->end} : nlohmann::json(nullptr);
  j["backup_path"] = a.backup_path ? nlohmann::json(*a.backup_path) : nlohmann::json(nullptr);
  return j;
}

FixAction fix_action_from_json(const nlohmann::json& j) {
  FixAction a;
  a.prompt_id = j.at("prompt_id").get<std::string>();
  a.chosen_rewrite = j.at("chosen_rewrite").get<std::string>();
  a.file = j.at("file").get<std::string>();
  a.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
  a.original_raw = j.value("original_raw", std::string());
  a.status = fix_status_from_string(j.value("status", std::string("pending")));
  a.message = j.value("message", std::string());
  if (j.contains("new_span") && j["new_span"].is_array()) {
    a.new_span = Span{j["new_span"][0].get<std::size_t>(), j["new_span"][1].get<std::size_t>()};
  }
  if (j.contains("backup_path") && j["backup_path"].is_string()) a.backup_path = j["backup_path"].get<std::string>();
  return a;
}

std::string python_literal(std::string_view value, char quote, bool fstring) {
  std::string out;
  if (fstring) out += 'f';
  out += quote;
  for (unsigned char c : value) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c == static_cast<unsigned char>(quote)) {
          out += '\\';
          out += static_cast<char>(c);
        } else if (c < 0x20 || c == 0x7f) {
          char buf[5];
          std::snprintf(buf, sizeof buf, "\\x%02x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += quote;
  return out;
}

namespace {

struct Segment {
  bool is_hole = false;
  /// Canonical-escaped literal text, or the hole name.
  std::string value;
};

std::vector<Segment> segments(const CanonicalPrompt& cp) {
  std::vector<Segment> out;
  const std::string& t = cp.text();
  auto lit = [&](std::string_view s) {
    if (out.empty() || out.back().is_hole) out.push_back({false, {}});
    out.back().value += s;
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    if ((t[i] == '{' || t[i] == '}') && i + 1 < t.size() && t[i + 1] == t[i]) {
      lit(t.substr(i, 2));
      ++i;
    } else if (t[i] == '{') {
      auto close = t.find('}', i);
      out.push_back({true, t.substr(i + 1, close - i - 1)});
      i = close;
    } else {
      lit(t.substr(i, 1));
    }
  }
  return out;
}

bool is_synthetic(const std::string& name) { return name.rfind("PLACEHOLDER_", 0) == 0; }

/// `.format(a=1)` + `b=expr` -> `.format(a=1, b=expr)`.
std::string extend_format_suffix(const std::string& suffix, const std::vector<std::pair<std::string, std::string>>& kw) {
  auto close = suffix.rfind(')');
  auto open = suffix.find('(');
  if (close == std::string::npos || open == std::string::npos || open > close) {
    throw RenderError("unrecognised format call");
  }
  auto end = close;
  while (end > open + 1 && std::string_view(" \t\r\n,").find(suffix[end - 1]) != std::string_view::npos) --end;
  std::string out = suffix.substr(0, end);
  bool first = end == open + 1;
  for (const auto& [k, v] : kw) {
    out += (first ? "" : ", ") + k + "=" + v;
    first = false;
  }
  return out + suffix.substr(close);
}

}  // namespace

std::string render_rewrite(const SourcePrompt& original, const CanonicalPrompt& rewrite) {
  if (original.language_hint == LanguageHint::generic_template) return rewrite.text();
  CanonicalForm form = canonicalize_detailed(original);
  if (!rewrite.same_holes(form.prompt)) throw RenderError("rewrite does not keep the original holes");

  std::map<std::string, std::optional<std::string>> binding;
  for (const auto& b : form.bindings) binding[b.name] = b.expr;
  std::size_t bound = 0;
  for (const auto& h : rewrite.holes()) {
    if (binding[h.name]) ++bound;
    else if (is_synthetic(h.name)) throw RenderError("hole '" + h.name + "' has no name or expression to render");
  }
  auto segs = segments(rewrite);

  if (bound == 0) return python_literal(rewrite.text(), form.quote) + form.format_suffix;

  if (bound == rewrite.hole_count()) {
    char quote = form.quote;
    auto clashes = [&](char q) {
      for (const auto& h : rewrite.holes()) {
        if (binding[h.name]->find(q) != std::string::npos) return true;
      }
      return false;
    };
    if (clashes(quote)) quote = quote == '"' ? '\'' : '"';
    if (clashes(quote)) throw RenderError("hole expressions use both quote characters");
    std::string out = "f";
    out += quote;
    for (const auto& s : segs) {
      if (s.is_hole) {
        out += "{" + *binding[s.value] + "}";
      } else {
        auto lit = python_literal(s.value, quote);
        out += lit.substr(1, lit.size() - 2);
      }
    }
    out += quote;
    return out;
  }

  if (!form.format_suffix.empty()) {
    std::vector<std::pair<std::string, std::string>> kw;
    for (const auto& h : rewrite.holes()) {
      if (binding[h.name]) kw.emplace_back(h.name, *binding[h.name]);
    }
    return python_literal(rewrite.text(), form.quote) + extend_format_suffix(form.format_suffix, kw);
  }

  std::vector<std::string> parts;
  std::string pending;
  for (const auto& s : segs) {
    if (s.is_hole && binding[s.value]) {
      if (!pending.empty()) parts.push_back(python_literal(pending, form.quote));
      pending.clear();
      parts.push_back(*binding[s.value]);
    } else {
      pending += s.is_hole ? "{" + s.value + "}" : s.value;
    }
  }
  if (!pending.empty()) parts.push_back(python_literal(pending, form.quote));
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " + " : "") + parts[i];
  return out;
}

namespace {

std::mutex& file_lock(const std::string& path) {
  static std::mutex registry_mu;
  static std::map<std::string, std::unique_ptr<std::mutex>> locks;
  std::lock_guard lock(registry_mu);
  std::error_code ec;
  auto key = fs::weakly_canonical(path, ec).string();
  if (ec) key = path;
  auto& m = locks[key];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomically(const std::string& path, const std::string& content, std::optional<fs::perms> perms) {
  std::string tmp = path + ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for " + tmp);
    }
  }
  std::error_code ec;
  if (perms) fs::permissions(tmp, *perms, ec);
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot replace " + path + ": " + ec.message());
  }
}

}  // namespace

FixAction apply_fix(FixAction action) {
  if (action.status != FixStatus::pending) {
    throw PreconditionError("fix for " + action.prompt_id + " is already " + std::string(to_string(action.status)));
  }
  std::lock_guard guard(file_lock(action.file));
  std::string content = read_all(action.file);
  const auto& sp = action.span;
  if (sp.start >= sp.end || sp.end > content.size() ||
      sha256_hex(std::string_view(content).substr(sp.start, sp.end - sp.start)) != sha256_hex(action.original_raw)) {
    action.status = FixStatus::conflicted;
    action.message = "the prompt in " + action.file + " changed since the report was written";
    return action;
  }
  SourcePrompt original{action.prompt_id, action.file, sp, action.original_raw, language_hint_for_path(action.file)};
  std::string rendered = render_rewrite(original, CanonicalPrompt::parse(action.chosen_rewrite));

  std::error_code ec;
  std::optional<fs::perms> keep;
  if (auto st = fs::status(action.file, ec); !ec) keep = st.permissions();
  std::string backup = action.file + ".bak";
  write_atomically(backup, content, keep);
  std::string updated = content.substr(0, sp.start) + rendered + content.substr(sp.end);
  write_atomically(action.file, updated, keep);

  action.status = FixStatus::applied;
  action.new_span = Span{sp.start, sp.start + rendered.size()};
  action.backup_path = backup;
  action.message = "applied";
  return action;
}

}  // namespace promptdoctor
