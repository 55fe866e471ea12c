#include "promptdoctor/patcher.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"

namespace promptdoctor {

std::string_view to_string(PatchMode m) { return m == PatchMode::sequential ? "sequential" : "parallel"; }

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::map<std::string, std::string> PatchSet::as_map() const { return {values.begin(), values.end()}; }

nlohmann::json to_json(const PatchSet& p) {
  nlohmann::json values = nlohmann::json::array();
  for (const auto& [k, v] : p.values) values.push_back({{"hole", k}, {"value", v}});
  return {{"prompt_id", p.prompt_id ? nlohmann::json(*p.prompt_id) : nlohmann::json(nullptr)},
          {"mode", to_string(p.mode)},
          {"values", values}};
}

PatchSet patch_set_from_json(const nlohmann::json& j) {
  PatchSet p;
  if (j.contains("prompt_id") && j["prompt_id"].is_string()) p.prompt_id = j["prompt_id"].get<std::string>();
  p.mode = j.value("mode", std::string("sequential")) == "parallel" ? PatchMode::parallel : PatchMode::sequential;
  for (const auto& v : j.at("values")) p.values.emplace_back(v.at("hole").get<std::string>(), v.at("value").get<std::string>());
  return p;
}

nlohmann::json to_json(const DatasetRow& row, Split split) {
  nlohmann::json values = nlohmann::json::object();
  for (const auto& [k, v] : row.patch.values) values[k] = v;
  auto opt = [](const std::optional<std::string>& s) { return s ? nlohmann::json(*s) : nlohmann::json(nullptr); };
  return {{"values", values}, {"source", opt(row.source)}, {"reference", opt(row.reference)}, {"split", to_string(split)}};
}

void write_dataset_jsonl(const std::string& path, const std::vector<const SyntheticDataset*>& sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto* set : sets) {
    for (const auto& row : set->rows) out << to_json(row, set->split).dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

std::pair<SyntheticDataset, SyntheticDataset> read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  SyntheticDataset train, test;
  test.split = Split::test;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError(path + ": invalid dataset row");
    DatasetRow row;
    auto values = j.value("values", nlohmann::json::object());
    if (!values.is_object()) throw ConfigError(path + ": dataset row values must be an object");
    for (const auto& [k, v] : values.items()) {
      if (!v.is_string()) throw ConfigError(path + ": value for '" + k + "' is not a string");
      row.patch.values.emplace_back(k, v.get<std::string>());
    }
    if (j.contains("source") && j["source"].is_string()) row.source = j["source"].get<std::string>();
    if (j.contains("reference") && j["reference"].is_string()) row.reference = j["reference"].get<std::string>();
    (j.value("split", std::string("train")) == "test" ? test : train).rows.push_back(std::move(row));
  }
  return {std::move(train), std::move(test)};
}

bool is_grounded(corpus::TaskCategory c) {
  using corpus::TaskCategory;
  return c == TaskCategory::translation || c == TaskCategory::summarization ||
         c == TaskCategory::grammar_correction;
}

Patcher::Patcher(llm::Gateway& gateway, const MetaPromptBank& bank) : gateway_(gateway), bank_(bank) {}

std::string Patcher::value_for(const std::string& shown_prompt, const std::string& hole, std::uint64_t seed,
                               std::optional<double> temperature, const std::vector<std::string>& avoid) {
  std::string avoid_block;
  if (!avoid.empty()) {
    avoid_block = "These values were already used for it, so choose something different:\n";
    for (const auto& a : avoid) avoid_block += "- " + a + "\n";
  }
  auto req = llm::ChatRequest::user(
      bank_.render("patch", {{"prompt", shown_prompt}, {"variable", hole}, {"avoid", avoid_block}}));
  req.temperature = temperature;
  req.seed = seed;
  auto obj = gateway_.chat_json(llm::Role::generator, req,
                                {{"variable", llm::FieldKind::string}, {"value", llm::FieldKind::string}});
  return obj["value"].get<std::string>();
}

PatchSet Patcher::patch(const CanonicalPrompt& cp, PatchMode mode, std::uint64_t seed,
                        std::optional<double> temperature,
                        const std::map<std::string, std::vector<std::string>>& avoid) {
  if (cp.hole_count() == 0) throw PreconditionError("patch requires a prompt with at least one hole");
  PatchSet out;
  out.prompt_id = cp.origin();
  out.mode = mode;
  std::map<std::string, std::string> filled;
  static const std::vector<std::string> kNone;
  for (const auto& h : cp.holes()) {
    std::string shown = mode == PatchMode::sequential ? instantiate(cp, filled) : cp.text();
    auto it = avoid.find(h.name);
    auto value = value_for(shown, h.name, mix_seed(seed, h.index), temperature, it == avoid.end() ? kNone : it->second);
    filled[h.name] = value;
    out.values.emplace_back(h.name, std::move(value));
  }
  return out;
}

namespace {

std::string_view task_description(corpus::TaskCategory c) {
  switch (c) {
    case corpus::TaskCategory::translation: return "translation";
    case corpus::TaskCategory::summarization: return "summarization";
    case corpus::TaskCategory::grammar_correction: return "grammar correction";
    default: return "question answering";
  }
}

}  // namespace

std::string Patcher::generate_reference(corpus::TaskCategory category, const std::string& filled_prompt,
                                        std::uint64_t seed) {
  auto req = llm::ChatRequest::user(
      bank_.render("reference", {{"task", std::string(task_description(category))}, {"input", filled_prompt}}));
  req.seed = seed;
  req.temperature = 0.0;
  auto obj = gateway_.chat_json(llm::Role::generator, req, {{"reference", llm::FieldKind::string}});
  return obj["reference"].get<std::string>();
}

std::pair<SyntheticDataset, SyntheticDataset> Patcher::synthesize_dataset(const CanonicalPrompt& cp,
                                                                          corpus::TaskCategory category,
                                                                          std::size_t train_count,
                                                                          std::size_t test_count, std::uint64_t seed,
                                                                          const DatasetOptions& options) {
  if (train_count == 0 || test_count == 0) throw PreconditionError("dataset counts must be at least 1");
  if (cp.hole_count() == 0) throw PreconditionError("dataset synthesis requires a prompt with holes");
  if (options.temperature_ladder.empty()) throw PreconditionError("temperature ladder is empty");

  SyntheticDataset train, test;
  train.prompt_id = test.prompt_id = cp.origin();
  train.split = Split::train;
  test.split = Split::test;

  std::mt19937_64 rng(seed);
  std::map<std::string, std::vector<std::string>> history;
  std::set<std::map<std::string, std::string>> seen_train, seen_all;
  std::size_t duplicates = 0;
  const std::size_t total = train_count + test_count;

  for (std::size_t r = 0; r < total; ++r) {
    const bool is_test = r >= train_count;
    const double temperature = options.temperature_ladder[r % options.temperature_ladder.size()];
    PatchSet row;
    bool duplicate = true;
    for (std::size_t attempt = 0; attempt <= options.duplicate_retries && duplicate; ++attempt) {
      std::map<std::string, std::vector<std::string>> avoid;
      for (const auto& [hole, prev] : history) {
        std::vector<std::string> pool = prev;
        std::shuffle(pool.begin(), pool.end(), rng);
        if (pool.size() > options.negative_examples) pool.resize(options.negative_examples);
        avoid[hole] = std::move(pool);
      }
      row = patch(cp, PatchMode::sequential, mix_seed(seed, r * 64 + attempt), temperature, avoid);
      duplicate = seen_all.count(row.as_map()) > 0;
      for (const auto& [hole, value] : row.values) history[hole].push_back(value);
    }
    auto key = row.as_map();
    auto& target = is_test ? test : train;
    if (duplicate) {
      ++duplicates;
      if (is_test && seen_train.count(key)) {
        test.warnings.push_back("row " + std::to_string(r) + " duplicates a training row; dropped");
        continue;
      }
      target.warnings.push_back("row " + std::to_string(r) + " is a duplicate after " +
                                std::to_string(options.duplicate_retries) + " retries; kept");
    }
    seen_all.insert(key);
    if (!is_test) seen_train.insert(key);
    DatasetRow dr;
    dr.patch = std::move(row);
    if (is_grounded(category)) {
      dr.source = substitute(cp, key);
      dr.reference = generate_reference(category, *dr.source, mix_seed(seed, 0x5245460000ULL + r));
    }
    target.rows.push_back(std::move(dr));
  }
  if (duplicates * 2 > total) {
    throw DegenerateDataset(std::to_string(duplicates) + " of " + std::to_string(total) +
                            " generated rows are duplicates");
  }
  if (test.rows.empty()) throw DegenerateDataset("every test row duplicated a training row");
  return {std::move(train), std::move(test)};
}

}  // namespace promptdoctor
