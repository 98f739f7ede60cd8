#pragma once

#include <optional>
#include <string>
#include <vector>

#include "e3/labels.hpp"
#include "e3/ops.hpp"
#include "e3/parameters.hpp"

namespace e3 {

template <class T>
struct decision_output {
  basic_tensor<T> summary;  // C, [d]
  basic_tensor<T> z;        // [4], ordered yes, no, irrelevant, inquire
  basic_tensor<T> r;        // [n_rules], undefined when there are no rules

  std::size_t rule_count() const { return r.defined() ? r.size() : 0; }
};

/// The system's move for one turn. `question` is filled in by the editor.
struct model_move {
  decision label = decision::yes;
  std::optional<std::size_t> rule_index;
  std::optional<std::string> question;

  bool operator==(const model_move&) const = default;
};

template <class T>
struct decision_loss_result {
  basic_tensor<T> loss;
  // Gold was inquire but there were no rules to point at.
  bool flagged = false;
};

/// Input summary, class head and per-rule inquiry head.
template <class T = float>
class decision_head {
 public:
  decision_head(std::size_t d_model, rng_t& rng, const std::string& prefix = "decide/") : d_(d_model) {
    w_phi_ = linear_weight<T>(d_model, 1, rng);
    b_phi_ = basic_tensor<T>::zeros({1}, true);
    w_z_ = linear_weight<T>(d_model, decision_count, rng);
    b_z_ = basic_tensor<T>::zeros({decision_count}, true);
    w_r_ = linear_weight<T>(d_model + 2, 1, rng);
    b_r_ = basic_tensor<T>::zeros({1}, true);
    params_.add(prefix + "w_phi", w_phi_);
    params_.add(prefix + "b_phi", b_phi_);
    params_.add(prefix + "w_class", w_z_);
    params_.add(prefix + "b_class", b_z_);
    params_.add(prefix + "w_inquire", w_r_);
    params_.add(prefix + "b_inquire", b_r_);
  }

  parameter_set<T>& parameters() { return params_; }
  const parameter_set<T>& parameters() const { return params_; }

  /// Self-attention weights over all input tokens, shape [n].
  basic_tensor<T> summary_attention(const basic_tensor<T>& u) const {
    detail::require_rank(u, 2, "summarize");
    return softmax(reshape(add_bias(matmul(u, w_phi_), b_phi_), {u.dim(0)}), 0);
  }

  basic_tensor<T> summarize(const basic_tensor<T>& u) const {
    auto phi = summary_attention(u);
    return reshape(matmul(reshape(phi, {1, u.dim(0)}), u), {d_});
  }

  /// `rules` holds the enriched [d+2] vector of every candidate rule.
  decision_output<T> score(const basic_tensor<T>& summary, const std::vector<basic_tensor<T>>& rules) const {
    decision_output<T> out;
    out.summary = summary;
    out.z = reshape(add_bias(matmul(reshape(summary, {1, d_}), w_z_), b_z_), {decision_count});
    if (!rules.empty()) {
      std::vector<basic_tensor<T>> rows;
      rows.reserve(rules.size());
      for (const auto& a : rules) rows.push_back(reshape(a, {1, d_ + 2}));
      out.r = reshape(add_bias(matmul(concat(rows, 0), w_r_), b_r_), {rules.size()});
    }
    return out;
  }

 private:
  std::size_t d_;
  parameter_set<T> params_;
  basic_tensor<T> w_phi_, b_phi_, w_z_, b_z_, w_r_, b_r_;
};

/// -log softmax(z)[gold] - [gold is inquire] log softmax(r)[gold_rule].
template <class T>
decision_loss_result<T> decision_loss(const decision_output<T>& out, decision gold,
                                      std::optional<std::size_t> gold_rule) {
  decision_loss_result<T> res;
  res.loss = cross_entropy(out.z, index_of(gold));
  if (gold != decision::inquire) return res;
  if (out.rule_count() == 0 || !gold_rule) {
    res.flagged = true;
    return res;
  }
  if (*gold_rule >= out.rule_count())
    throw std::out_of_range("decision_loss: gold rule " + std::to_string(*gold_rule) + " of " +
                            std::to_string(out.rule_count()));
  res.loss = add(res.loss, cross_entropy(out.r, *gold_rule));
  return res;
}

/// Argmax over classes with ties going to the earlier class. An inquiry with
/// no rules falls back to the best remaining class.
inline model_move infer_move(const std::vector<double>& z, const std::vector<double>& r) {
  if (z.size() != decision_count) throw std::invalid_argument("infer: expected 4 class scores");
  auto best_of = [&](bool allow_inquire) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < decision_count; ++k) {
      if (!allow_inquire && all_decisions[k] == decision::inquire) continue;
      if (z[k] > z[best]) best = k;
    }
    return all_decisions[best];
  };
  model_move m;
  m.label = best_of(true);
  if (m.label == decision::inquire) {
    if (r.empty()) {
      m.label = best_of(false);
    } else {
      std::size_t i = 0;
      for (std::size_t k = 1; k < r.size(); ++k)
        if (r[k] > r[i]) i = k;
      m.rule_index = i;
    }
  }
  return m;
}

template <class T>
model_move infer_move(const decision_output<T>& out) {
  std::vector<double> z(out.z.data().begin(), out.z.data().end());
  std::vector<double> r;
  if (out.r.defined()) r.assign(out.r.data().begin(), out.r.data().end());
  return infer_move(z, r);
}

}  // namespace e3
