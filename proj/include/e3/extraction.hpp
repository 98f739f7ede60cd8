#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "e3/ops.hpp"
#include "e3/parameters.hpp"

namespace e3 {

/// A rule span over document tokens, inclusive on both ends.
struct rule_span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const rule_span&) const = default;
  auto operator<=>(const rule_span&) const = default;
};

/// Start and end logits over the document tokens. alpha and beta are their
/// sigmoids.
template <class T>
struct boundary_scores {
  basic_tensor<T> start_logits;  // [n_D]
  basic_tensor<T> end_logits;    // [n_D]

  std::size_t size() const { return start_logits.size(); }

  std::vector<double> alpha() const { return squash(start_logits); }
  std::vector<double> beta() const { return squash(end_logits); }

 private:
  static std::vector<double> squash(const basic_tensor<T>& logits) {
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
    return out;
  }
};

/// For every start with alpha above tau, pairs it with the nearest end at or
/// after it whose beta is above tau. One end may close several starts.
inline std::vector<rule_span> pair_spans(const std::vector<double>& alpha, const std::vector<double>& beta,
                                         double tau) {
  if (alpha.size() != beta.size()) throw std::invalid_argument("pair_spans: alpha and beta differ in length");
  const std::size_t n = alpha.size();
  // next_end[i] = smallest e >= i with beta[e] > tau, or n
  std::vector<std::size_t> next_end(n + 1, n);
  for (std::size_t i = n; i-- > 0;) next_end[i] = beta[i] > tau ? i : next_end[i + 1];
  std::vector<rule_span> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > tau && next_end[i] < n) out.push_back({i, next_end[i]});
  }
  return out;
}

enum class extraction_loss_mode {
  // One multi-hot target per token: 1 if any gold rule starts (ends) there.
  union_targets,
  // Sum over rules of a one-hot BCE per rule.
  per_rule,
};

/// Binary cross entropy of the boundary scores against the gold spans.
template <class T>
basic_tensor<T> extraction_loss(const boundary_scores<T>& scores, const std::vector<rule_span>& gold,
                                extraction_loss_mode mode = extraction_loss_mode::union_targets) {
  const std::size_t n = scores.size();
  for (const auto& g : gold) {
    if (g.start > g.end || g.end >= n)
      throw std::out_of_range("extraction_loss: gold span (" + std::to_string(g.start) + "," +
                              std::to_string(g.end) + ") outside document of " + std::to_string(n) +
                              " tokens");
  }
  if (mode == extraction_loss_mode::union_targets) {
    std::vector<T> ys(n, T(0)), ye(n, T(0));
    for (const auto& g : gold) {
      ys[g.start] = T(1);
      ye[g.end] = T(1);
    }
    return add(bce_with_logits(scores.start_logits, std::span<const T>(ys)),
               bce_with_logits(scores.end_logits, std::span<const T>(ye)));
  }
  if (gold.empty()) {
    std::vector<T> zero(n, T(0));
    return add(bce_with_logits(scores.start_logits, std::span<const T>(zero)),
               bce_with_logits(scores.end_logits, std::span<const T>(zero)));
  }
  basic_tensor<T> total;
  for (const auto& g : gold) {
    std::vector<T> ys(n, T(0)), ye(n, T(0));
    ys[g.start] = T(1);
    ye[g.end] = T(1);
    auto l = add(bce_with_logits(scores.start_logits, std::span<const T>(ys)),
                 bce_with_logits(scores.end_logits, std::span<const T>(ye)));
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

/// Boundary classifiers and the span self-attention pooler.
template <class T = float>
class span_extractor {
 public:
  span_extractor(std::size_t d_model, rng_t& rng, const std::string& prefix = "extract/") : d_(d_model) {
    w_alpha_ = linear_weight<T>(d_model, 1, rng);
    b_alpha_ = basic_tensor<T>::zeros({1}, true);
    w_beta_ = linear_weight<T>(d_model, 1, rng);
    b_beta_ = basic_tensor<T>::zeros({1}, true);
    w_gamma_ = linear_weight<T>(d_model, 1, rng);
    b_gamma_ = basic_tensor<T>::zeros({1}, true);
    params_.add(prefix + "w_alpha", w_alpha_);
    params_.add(prefix + "b_alpha", b_alpha_);
    params_.add(prefix + "w_beta", w_beta_);
    params_.add(prefix + "b_beta", b_beta_);
    params_.add(prefix + "w_gamma", w_gamma_);
    params_.add(prefix + "b_gamma", b_gamma_);
  }

  parameter_set<T>& parameters() { return params_; }
  const parameter_set<T>& parameters() const { return params_; }

  boundary_scores<T> score(const basic_tensor<T>& u_doc) const {
    detail::require_rank(u_doc, 2, "score_boundaries");
    const std::size_t n = u_doc.dim(0);
    return {reshape(add_bias(matmul(u_doc, w_alpha_), b_alpha_), {n}),
            reshape(add_bias(matmul(u_doc, w_beta_), b_beta_), {n})};
  }

  /// Attention weights over the span tokens, shape [len].
  basic_tensor<T> span_attention(const basic_tensor<T>& u_doc, const rule_span& span) const {
    check_span(u_doc, span);
    auto rows = slice_rows(u_doc, span.start, span.length());
    return softmax(reshape(add_bias(matmul(rows, w_gamma_), b_gamma_), {span.length()}), 0);
  }

  /// Attention-weighted sum of the span's token vectors, shape [d].
  basic_tensor<T> pool(const basic_tensor<T>& u_doc, const rule_span& span) const {
    auto gamma = span_attention(u_doc, span);
    auto rows = slice_rows(u_doc, span.start, span.length());
    return reshape(matmul(reshape(gamma, {1, span.length()}), rows), {d_});
  }

 private:
  void check_span(const basic_tensor<T>& u_doc, const rule_span& span) const {
    if (span.start > span.end || span.end >= u_doc.dim(0))
      throw std::out_of_range("span (" + std::to_string(span.start) + "," + std::to_string(span.end) +
                              ") outside document of " + std::to_string(u_doc.dim(0)) + " tokens");
  }

  std::size_t d_;
  parameter_set<T> params_;
  basic_tensor<T> w_alpha_, b_alpha_, w_beta_, b_beta_, w_gamma_, b_gamma_;
};

}  // namespace e3
