#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "e3/checkpoint.hpp"
#include "e3/decision.hpp"
#include "e3/encoder.hpp"
#include "e3/sharc.hpp"

namespace e3 {

/// Best (i, j) with j >= i under s[i] * e[j]; ties go to the smallest i, then
/// the smallest j. Linear time.
inline std::pair<std::size_t, std::size_t> extract_answer(const std::vector<double>& s, const std::vector<double>& e) {
  if (s.size() != e.size() || s.empty()) throw std::invalid_argument("extract_answer: bad score vectors");
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_score = s[0] * e[0];
  std::size_t arg = 0;  // argmax of s over [0, j], earliest on ties
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (s[j] > s[arg]) arg = j;
    const std::size_t i = e[j] == 0.0 ? 0 : arg;
    const double score = s[i] * e[j];
    if (score > best_score || (score == best_score && i < best.first)) {
      best_score = score;
      best = {i, j};
    }
  }
  return best;
}

/// Assembled input with "yes", "no" and "irrelevant" blocks appended.
struct augmented_input {
  assembled_input input;
  // Token index of each label word, in decision order yes, no, irrelevant.
  std::array<std::size_t, 3> label_positions{};
};

inline augmented_input build_augmented_input(const dialogue_state& state, const vocabulary& vocab,
                                             std::size_t max_length = 512) {
  if (max_length < 7) throw input_error("augmented input needs room for the label blocks");
  augmented_input a;
  a.input = assemble_input(state, vocab, {.max_length = max_length - 6});
  const int seg = a.input.segment_ids.empty() ? 0 : 15;
  std::size_t k = 0;
  for (const char* label : {"yes", "no", "irrelevant"}) {
    a.label_positions[k++] = a.input.size();
    for (const std::string tok : {std::string(label), std::string("[SEP]")}) {
      a.input.tokens.push_back(tok);
      a.input.token_ids.push_back(vocab.id(tok));
      a.input.segment_ids.push_back(seg);
      a.input.position_ids.push_back(static_cast<int>(a.input.position_ids.size()));
    }
  }
  return a;
}

/// Gold (start, end) in the augmented input, or nullopt when an inquiry
/// cannot be matched inside the visible document.
inline std::optional<std::pair<std::size_t, std::size_t>> gold_answer_span(const augmented_input& a,
                                                                           const raw_example& ex) {
  const auto d = ex.gold_decision();
  if (d != decision::inquire) {
    const auto p = a.label_positions[index_of(d)];
    return std::make_pair(p, p);
  }
  const auto doc = tokenize(ex.snippet).tokens;
  auto m = match_span(doc, trim_clause(tokenize(*ex.gold_question()).tokens));
  const auto [d0, d1] = a.input.document_range;
  if (!m || m->end >= d1 - d0) return std::nullopt;
  return std::make_pair(d0 + m->start, d0 + m->end);
}

struct bertqa_output {
  model_move move;
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;
};

/// Extractive baseline: every answer, including the decision labels, is a
/// span of the augmented input.
template <class T = float>
class bertqa_model {
 public:
  bertqa_model(const encoder_config& config, rng_t& rng, std::size_t max_length = 512)
      : max_length_(max_length), encoder_(config, rng, "bertqa/encoder/") {
    w_s_ = linear_weight<T>(config.d_model, 1, rng);
    b_s_ = basic_tensor<T>::zeros({1}, true);
    w_e_ = linear_weight<T>(config.d_model, 1, rng);
    b_e_ = basic_tensor<T>::zeros({1}, true);
    params_.extend(encoder_.parameters());
    params_.add("bertqa/w_start", w_s_);
    params_.add("bertqa/b_start", b_s_);
    params_.add("bertqa/w_end", w_e_);
    params_.add("bertqa/b_end", b_e_);
  }

  const encoder_config& config() const { return encoder_.config(); }
  std::size_t max_length() const { return max_length_; }
  parameter_set<T>& parameters() { return params_; }
  const parameter_set<T>& parameters() const { return params_; }

  augmented_input augment(const dialogue_state& state, const vocabulary& vocab) const {
    return build_augmented_input(state, vocab, std::min(max_length_, encoder_.config().max_position));
  }

  /// Start and end logits, each [n].
  std::pair<basic_tensor<T>, basic_tensor<T>> logits(const augmented_input& a, bool train, rng_t& rng) const {
    auto u = encoder_.encode(a.input, train, rng);
    const std::size_t n = u.dim(0);
    return {reshape(add_bias(matmul(u, w_s_), b_s_), {n}), reshape(add_bias(matmul(u, w_e_), b_e_), {n})};
  }

  /// Cross entropy on the gold start and end; nullopt if the example has no
  /// reachable gold span.
  std::optional<basic_tensor<T>> loss(const raw_example& ex, const vocabulary& vocab, bool train, rng_t& rng) const {
    auto a = augment(ex.state(), vocab);
    auto gold = gold_answer_span(a, ex);
    if (!gold) return std::nullopt;
    auto [ls, le] = logits(a, train, rng);
    return add(cross_entropy(ls, gold->first), cross_entropy(le, gold->second));
  }

  bertqa_output predict(const dialogue_state& state, const vocabulary& vocab) const {
    no_grad_guard guard;
    rng_t rng(0);
    auto a = augment(state, vocab);
    auto [ls, le] = logits(a, false, rng);
    auto s = softmax(ls, 0), e = softmax(le, 0);
    std::vector<double> sv(s.data().begin(), s.data().end()), ev(e.data().begin(), e.data().end());
    auto [i, j] = extract_answer(sv, ev);
    bertqa_output out;
    out.start = i;
    out.end = j;
    out.score = sv[i] * ev[j];
    out.move = decode_span(a, state, i, j);
    return out;
  }

  /// A span starting on a label block is that decision; anything else is an
  /// inquiry phrased as the span text.
  static model_move decode_span(const augmented_input& a, const dialogue_state& state, std::size_t i, std::size_t j) {
    model_move m;
    for (std::size_t k = 0; k < 3; ++k) {
      if (i >= a.label_positions[k] && i < a.label_positions[k] + 2) {
        m.label = all_decisions[k];
        return m;
      }
    }
    m.label = decision::inquire;
    const auto [d0, d1] = a.input.document_range;
    if (i >= d0 && j < d1) {
      const auto toks = tokenize(state.snippet);
      m.question = span_text(state.snippet, toks, i - d0, j - d0);
    } else {
      std::vector<std::string> words(a.input.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                     a.input.tokens.begin() + static_cast<std::ptrdiff_t>(j + 1));
      m.question = detokenize(words);
    }
    return m;
  }

 private:
  std::size_t max_length_;
  encoder<T> encoder_;
  parameter_set<T> params_;
  basic_tensor<T> w_s_, b_s_, w_e_, b_e_;
};

template <class T>
void save_bertqa(const std::filesystem::path& path, const bertqa_model<T>& m, const vocabulary& vocab,
                 nlohmann::json extra = nlohmann::json::object()) {
  extra["vocab_hash"] = vocab.hash();
  extra["encoder"] = to_json(m.config());
  extra["max_length"] = m.max_length();
  extra["kind"] = "bertqa";
  save_checkpoint(path, m.parameters(), extra);
}

template <class T = float>
bertqa_model<T> load_bertqa(const std::filesystem::path& path, const vocabulary& vocab) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.metadata.value("kind", "") != "bertqa")
    throw checkpoint_error("not a baseline checkpoint: " + path.string());
  if (ckpt.metadata.value("vocab_hash", "") != vocab.hash())
    throw checkpoint_error("vocabulary does not match checkpoint " + path.string());
  rng_t rng(0);
  bertqa_model<T> m(encoder_config_from_json(ckpt.metadata.at("encoder")), rng,
                    ckpt.metadata.at("max_length").get<std::size_t>());
  load_parameters(ckpt, m.parameters());
  return m;
}

}  // namespace e3
