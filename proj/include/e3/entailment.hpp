#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "e3/ops.hpp"
#include "e3/text.hpp"

namespace e3 {

/// Harmonic mean of token-set precision (shared / rule) and recall
/// (shared / other). Order and multiplicity are ignored.
inline double overlap_f1(const std::vector<std::string>& rule, const std::vector<std::string>& other) {
  const std::set<std::string> a(rule.begin(), rule.end());
  const std::set<std::string> b(other.begin(), other.end());
  if (a.empty() || b.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& t : a) shared += b.count(t);
  if (shared == 0) return 0.0;
  const double pr = static_cast<double>(shared) / static_cast<double>(a.size());
  const double re = static_cast<double>(shared) / static_cast<double>(b.size());
  return 2.0 * pr * re / (pr + re);
}

struct entailment_scores {
  double g = 0.0;  // against the scenario
  double h = 0.0;  // best match among earlier inquiries
};

/// Scores one rule against the scenario and the previous inquiries. Answers
/// given by the user do not take part, and punctuation tokens are ignored.
inline entailment_scores entail_scores(const std::vector<std::string>& rule,
                                       const std::vector<std::string>& scenario,
                                       const std::vector<std::vector<std::string>>& inquiries) {
  auto words = [](const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens)
      if (!is_punctuation_token(t)) out.push_back(t);
    return out;
  };
  const auto r = words(rule);
  entailment_scores s;
  s.g = overlap_f1(r, words(scenario));
  for (const auto& q : inquiries) s.h = std::max(s.h, overlap_f1(r, words(q)));
  return s;
}

/// [pooled; g; h]. The two scores are constants and carry no gradient.
template <class T>
basic_tensor<T> enrich(const basic_tensor<T>& pooled, const entailment_scores& s) {
  if (!pooled.defined()) throw std::invalid_argument("enrich: rule has no pooled representation");
  if (pooled.rank() != 1) throw shape_error("enrich: pooled vector must be rank 1, got " + shape_str(pooled.shape()));
  auto tail = basic_tensor<T>::vector({static_cast<T>(s.g), static_cast<T>(s.h)});
  return concat(std::vector<basic_tensor<T>>{pooled, tail}, 0);
}

}  // namespace e3
