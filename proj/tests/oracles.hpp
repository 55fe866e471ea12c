#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

/// Reference implementations written directly from the textbook definitions,
/// sharing no code with the library.
namespace pdtest::oracle {

/// Two-sided z by bisection on erf, independent of the library's quantile.
inline double z(double confidence) {
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    double mid = (lo + hi) / 2;
    if (std::erf(mid / std::sqrt(2.0)) < confidence) lo = mid;
    else hi = mid;
  }
  return (lo + hi) / 2;
}

inline std::size_t cochran(std::size_t population, double confidence, double error) {
  double zc = z(confidence);
  double n0 = zc * zc * 0.25 / (error * error);
  double n = n0 / (1.0 + (n0 - 1.0) / static_cast<double>(population));
  return std::min(population, static_cast<std::size_t>(std::ceil(n)));
}

using Toks = std::vector<std::string>;

inline bool same_gram(const Toks& a, std::size_t i, const Toks& b, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (a[i + k] != b[j + k]) return false;
  return true;
}

inline std::size_t occurrences(const Toks& hay, const Toks& src, std::size_t at, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t j = 0; j + n <= hay.size(); ++j) c += same_gram(hay, j, src, at, n);
  return c;
}

/// Clipped matches by quadratic scans, counting each distinct candidate gram at its first position.
inline std::size_t brute_matches(const Toks& cand, const Toks& ref, std::size_t n) {
  std::size_t m = 0;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) {
    bool first = true;
    for (std::size_t p = 0; p < i; ++p)
      if (same_gram(cand, p, cand, i, n)) first = false;
    if (!first) continue;
    m += std::min(occurrences(cand, cand, i, n), occurrences(ref, cand, i, n));
  }
  return m;
}

inline std::size_t grams(const Toks& t, std::size_t n) { return t.size() >= n ? t.size() - n + 1 : 0; }

inline double bleu(const Toks& c, const Toks& r) {
  if (c.empty() || r.empty()) return 0.0;
  double p1 = static_cast<double>(brute_matches(c, r, 1)) / static_cast<double>(grams(c, 1));
  if (p1 == 0.0) return 0.0;
  double prod = p1;
  for (std::size_t n = 2; n <= 4; ++n)
    prod *= (static_cast<double>(brute_matches(c, r, n)) + 1.0) / (static_cast<double>(grams(c, n)) + 1.0);
  double bp = c.size() < r.size() ? std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size())) : 1.0;
  return bp * std::pow(prod, 0.25);
}

inline double gleu(const Toks& c, const Toks& r) {
  if (c.empty() || r.empty()) return 0.0;
  double m = 0, tc = 0, tr = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    m += static_cast<double>(brute_matches(c, r, n));
    tc += static_cast<double>(grams(c, n));
    tr += static_cast<double>(grams(r, n));
  }
  return m / std::max(tc, tr);
}

inline std::string join(const Toks& t) {
  std::string s;
  for (const auto& w : t) s += (s.empty() ? "" : " ") + w;
  return s;
}

inline Toks random_tokens(std::mt19937_64& rng, std::size_t vocab) {
  static const Toks words{"the", "cat", "sat", "on", "a", "mat", "dog", "ran", "far", "away", "and", "slept"};
  Toks t(1 + rng() % 20);
  for (auto& w : t) w = words[rng() % std::min(vocab, words.size())];
  return t;
}

/// Unclamped cosine similarity.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace pdtest::oracle
