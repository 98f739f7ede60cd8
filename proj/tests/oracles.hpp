#pragma once

// Exhaustive reference implementations used to cross-check the library.
// They deliberately share no code with the paths they verify.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "e3/sharc.hpp"

namespace e3::testing {

inline std::size_t full_matrix_levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t best = d[i - 1][j] + 1;
      if (d[i][j - 1] + 1 < best) best = d[i][j - 1] + 1;
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      if (sub < best) best = sub;
      d[i][j] = best;
    }
  }
  return d[a.size()][b.size()];
}

inline bool oracle_is_punct(const std::string& t) {
  return t.size() == 1 && static_cast<unsigned char>(t[0]) < 0x80 && std::ispunct(static_cast<unsigned char>(t[0]));
}

inline std::optional<span_match> brute_force_match(const std::vector<std::string>& snippet,
                                                   const std::vector<std::string>& clause) {
  if (clause.empty()) return std::nullopt;
  std::string target;
  for (std::size_t i = 0; i < clause.size(); ++i) target += (i ? " " : "") + clause[i];
  std::optional<span_match> best;
  for (std::size_t s = 0; s < snippet.size(); ++s) {
    for (std::size_t e = s; e < snippet.size(); ++e) {
      if (oracle_is_punct(snippet[s]) || oracle_is_punct(snippet[e])) continue;
      std::string text;
      for (std::size_t k = s; k <= e; ++k) text += (k > s ? " " : "") + snippet[k];
      const auto d = full_matrix_levenshtein(text, target);
      bool take = !best;
      if (best) {
        if (d < best->distance) take = true;
        else if (d == best->distance && e - s < best->end - best->start) take = true;
        else if (d == best->distance && e - s == best->end - best->start && s < best->start) take = true;
      }
      if (take) best = span_match{s, e, d};
    }
  }
  return best;
}

/// Number of disagreements between match_span and the exhaustive oracle over
/// `cases` random (snippet, clause) pairs.
inline std::size_t match_span_mismatches(std::size_t cases, std::mt19937_64& rng) {
  const std::vector<std::string> words{"uk",   "resident", "residents", "pension", "pensions", "tax",
                                       "civil", "service",  "you",       "must",    "be",       "a",
                                       "savings", "income", "over",     "60",      ",",        "."};
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
    std::uniform_int_distribution<std::size_t> len(1, 30);
    std::vector<std::string> snippet(len(rng));
    for (auto& w : snippet) w = words[word(rng)];
    std::uniform_int_distribution<std::size_t> clen(1, 5);
    std::vector<std::string> clause(clen(rng));
    for (auto& w : clause) {
      w = words[word(rng)];
      if (oracle_is_punct(w)) w = "x";
    }
    auto got = match_span(snippet, clause);
    auto want = brute_force_match(snippet, clause);
    if (got.has_value() != want.has_value() || (got && !(*got == *want))) ++mismatches;
  }
  return mismatches;
}

/// For each start above tau, the first end at or after it above tau.
inline std::vector<std::pair<std::size_t, std::size_t>> brute_pair_spans(const std::vector<double>& alpha,
                                                                         const std::vector<double>& beta,
                                                                         double tau) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > tau)) continue;
    std::optional<std::size_t> end;
    for (std::size_t e = beta.size(); e-- > i;) {
      if (beta[e] > tau) end = e;
    }
    if (end) out.emplace_back(i, *end);
  }
  return out;
}

/// argmax over i <= j of s_i * e_j; ties to smallest i, then smallest j.
inline std::pair<std::size_t, std::size_t> brute_best_span(const std::vector<double>& s,
                                                           const std::vector<double>& e) {
  std::pair<std::size_t, std::size_t> best{0, 0};
  double score = -1.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i; j < e.size(); ++j) {
      if (s[i] * e[j] > score) {
        score = s[i] * e[j];
        best = {i, j};
      }
    }
  }
  return best;
}

}  // namespace e3::testing
