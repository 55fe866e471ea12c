#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptdoctor::metrics {

enum class Metric { bleu, gleu, cosine, judge };

std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view s);

/// A similarity value in [0, 1]. Never NaN.
struct Score {
  double value = 0.0;
  Metric metric = Metric::bleu;
  /// Set when one side tokenized to nothing; value is then 0.
  bool empty_input = false;
  /// Unclamped cosine, kept for diagnostics.
  std::optional<double> raw;
};

/// Lowercases, splits on whitespace, then peels leading and trailing ASCII
/// punctuation off each chunk as one-character tokens. Inner punctuation
/// ("don't", "3.14") stays attached.
std::vector<std::string> tokenize(std::string_view text);

/// Sentence BLEU-4. Clipped n-gram precisions for n = 1..4, add-one smoothing
/// on n >= 2, geometric mean, brevity penalty exp(1 - r/c) when c < r.
/// A zero unigram precision scores 0.
Score bleu(std::string_view candidate, std::string_view reference);

/// Sentence GLEU (Google formulation): matches over all 1..4-grams, divided by
/// the larger of the candidate and reference n-gram totals, i.e.
/// min(precision, recall).
Score gleu(std::string_view candidate, std::string_view reference);

/// dot(a, b) / (|a| |b|), clamped to [0, 1]. Throws ZeroVector on a zero norm
/// and PreconditionError on a dimension mismatch.
Score cosine(std::span<const double> a, std::span<const double> b);

}  // namespace promptdoctor::metrics
