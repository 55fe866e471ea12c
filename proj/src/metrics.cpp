#include "promptdoctor/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/text_util.hpp"

namespace promptdoctor::metrics {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::bleu: return "bleu";
    case Metric::gleu: return "gleu";
    case Metric::cosine: return "cosine";
    case Metric::judge: return "judge";
  }
  return "bleu";
}

Metric metric_from_string(std::string_view s) {
  if (s == "bleu") return Metric::bleu;
  if (s == "gleu") return Metric::gleu;
  if (s == "cosine") return Metric::cosine;
  if (s == "judge") return Metric::judge;
  throw PreconditionError("unknown metric '" + std::string(s) + "'");
}

std::vector<std::string> tokenize(std::string_view input) {
  std::vector<std::string> out;
  auto lower = text::to_lower(input);
  std::string_view s = lower;
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    std::string_view chunk = s.substr(i, j - i);
    std::vector<std::string> tail;
    while (!chunk.empty() && is_punct(chunk.front())) {
      out.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    while (!chunk.empty() && is_punct(chunk.back())) {
      tail.emplace_back(1, chunk.back());
      chunk.remove_suffix(1);
    }
    if (!chunk.empty()) out.emplace_back(chunk);
    out.insert(out.end(), tail.rbegin(), tail.rend());
    i = j;
  }
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

std::size_t clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

constexpr std::size_t kMaxOrder = 4;

}  // namespace

Score bleu(std::string_view candidate, std::string_view reference) {
  Score s{0.0, Metric::bleu, false, std::nullopt};
  auto cand = tokenize(candidate);
  auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) {
    s.empty_input = true;
    return s;
  }
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    auto cc = count_ngrams(cand, n);
    auto rc = count_ngrams(ref, n);
    double matches = static_cast<double>(clipped_matches(cc, rc));
    double total = cand.size() >= n ? static_cast<double>(cand.size() - n + 1) : 0.0;
    if (n == 1) {
      if (matches == 0.0) return s;
      log_sum += std::log(matches / total);
    } else {
      log_sum += std::log((matches + 1.0) / (total + 1.0));
    }
  }
  double c = static_cast<double>(cand.size());
  double r = static_cast<double>(ref.size());
  double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  s.value = std::clamp(bp * std::exp(log_sum / static_cast<double>(kMaxOrder)), 0.0, 1.0);
  return s;
}

Score gleu(std::string_view candidate, std::string_view reference) {
  Score s{0.0, Metric::gleu, false, std::nullopt};
  auto cand = tokenize(candidate);
  auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) {
    s.empty_input = true;
    return s;
  }
  std::size_t matches = 0, cand_total = 0, ref_total = 0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    auto cc = count_ngrams(cand, n);
    auto rc = count_ngrams(ref, n);
    matches += clipped_matches(cc, rc);
    if (cand.size() >= n) cand_total += cand.size() - n + 1;
    if (ref.size() >= n) ref_total += ref.size() - n + 1;
  }
  double precision = static_cast<double>(matches) / static_cast<double>(cand_total);
  double recall = static_cast<double>(matches) / static_cast<double>(ref_total);
  s.value = std::clamp(std::min(precision, recall), 0.0, 1.0);
  return s;
}

Score cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw PreconditionError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine: zero-norm vector");
  double raw = dot / std::sqrt(na * nb);
  if (std::isnan(raw)) throw ZeroVector("cosine: degenerate vector");
  return Score{std::clamp(raw, 0.0, 1.0), Metric::cosine, false, raw};
}

}  // namespace promptdoctor::metrics
