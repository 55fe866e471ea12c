#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/corpus.hpp"
#include "promptdoctor/gateway.hpp"
#include "promptdoctor/meta_prompts.hpp"
#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

enum class PatchMode { sequential, parallel };

std::string_view to_string(PatchMode m);

/// Generated values for every hole of one prompt, in hole order.
struct PatchSet {
  std::optional<std::string> prompt_id;
  std::vector<std::pair<std::string, std::string>> values;
  PatchMode mode = PatchMode::sequential;

  std::map<std::string, std::string> as_map() const;
  friend bool operator==(const PatchSet&, const PatchSet&) = default;
};

nlohmann::json to_json(const PatchSet& p);
PatchSet patch_set_from_json(const nlohmann::json& j);

enum class Split { train, test };

std::string_view to_string(Split s);

struct DatasetRow {
  PatchSet patch;
  /// The filled-in prompt; set for grounded categories.
  std::optional<std::string> source;
  std::optional<std::string> reference;
};

struct SyntheticDataset {
  std::optional<std::string> prompt_id;
  std::vector<DatasetRow> rows;
  Split split = Split::train;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return rows.size(); }
};

nlohmann::json to_json(const DatasetRow& row, Split split);
void write_dataset_jsonl(const std::string& path, const std::vector<const SyntheticDataset*>& sets);
/// Rows are split by their "split" field.
std::pair<SyntheticDataset, SyntheticDataset> read_dataset_jsonl(const std::string& path);

struct DatasetOptions {
  std::vector<double> temperature_ladder{0.3, 0.7, 1.0, 1.3};
  std::size_t negative_examples = 3;
  std::size_t duplicate_retries = 5;
};

/// True for categories whose rows carry a reference output.
bool is_grounded(corpus::TaskCategory c);

class Patcher {
 public:
  explicit Patcher(llm::Gateway& gateway, const MetaPromptBank& bank = MetaPromptBank::standard());

  /// Sequential mode shows each request the prompt with earlier holes
  /// already filled; parallel mode shows the unfilled prompt every time.
  /// `avoid` lists earlier values per hole to steer away from.
  PatchSet patch(const CanonicalPrompt& cp, PatchMode mode, std::uint64_t seed,
                 std::optional<double> temperature = std::nullopt,
                 const std::map<std::string, std::vector<std::string>>& avoid = {});

  std::pair<SyntheticDataset, SyntheticDataset> synthesize_dataset(const CanonicalPrompt& cp,
                                                                   corpus::TaskCategory category,
                                                                   std::size_t train_count, std::size_t test_count,
                                                                   std::uint64_t seed,
                                                                   const DatasetOptions& options = {});

  /// Ideal output for a filled-in grounded prompt.
  std::string generate_reference(corpus::TaskCategory category, const std::string& filled_prompt,
                                 std::uint64_t seed);

 private:
  std::string value_for(const std::string& shown_prompt, const std::string& hole, std::uint64_t seed,
                        std::optional<double> temperature, const std::vector<std::string>& avoid);

  llm::Gateway& gateway_;
  const MetaPromptBank& bank_;
};

}  // namespace promptdoctor
