#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/encoder.hpp"
#include "e3/lexicon.hpp"
#include "e3/sharc.hpp"
#include "e3/text.hpp"

namespace e3 {

/// Strips leading and trailing adpositions, auxiliaries, conjunctions,
/// determiners and punctuation. At least one token always remains.
inline std::vector<std::string> trim_rule(const std::vector<std::string>& span,
                                          const tag_lexicon& lexicon = tag_lexicon::builtin()) {
  auto removable = [&](const std::string& w) { return lexicon.tag(w) != word_tag::content; };
  std::size_t b = 0, e = span.size();
  while (e - b > 1 && removable(span[b])) ++b;
  while (e - b > 1 && removable(span[e - 1])) --e;
  return {span.begin() + static_cast<std::ptrdiff_t>(b), span.begin() + static_cast<std::ptrdiff_t>(e)};
}

/// pre + span + post, detokenized.
inline std::string compose(const std::vector<std::string>& pre, const std::vector<std::string>& span,
                           const std::vector<std::string>& post) {
  std::vector<std::string> all(pre);
  all.insert(all.end(), span.begin(), span.end());
  all.insert(all.end(), post.begin(), post.end());
  return detokenize(all);
}

/// One editor training pair: the trimmed rule, its document, and the tokens
/// the question adds before and after it.
struct edit_example {
  std::vector<std::string> span;
  std::vector<std::string> document;
  std::vector<std::string> pre;
  std::vector<std::string> post;
};

/// Aligns the trimmed rule inside the gold question. Returns nullopt when the
/// best match differs from the rule in more than half of its characters, or
/// when a target would exceed `max_len` tokens.
inline std::optional<edit_example> make_edit_example(const std::vector<std::string>& rule,
                                                     const std::vector<std::string>& document,
                                                     const std::string& question, std::size_t max_len = 30,
                                                     const tag_lexicon& lexicon = tag_lexicon::builtin()) {
  if (rule.empty()) return std::nullopt;
  auto trimmed = trim_rule(rule, lexicon);
  const auto q = tokenize(question).tokens;
  auto m = match_span(q, trimmed);
  if (!m || 2 * m->distance > join_tokens(trimmed).size()) return std::nullopt;
  edit_example ex;
  ex.span = std::move(trimmed);
  ex.document = document;
  ex.pre.assign(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(m->start));
  ex.post.assign(q.begin() + static_cast<std::ptrdiff_t>(m->end + 1), q.end());
  // the end token counts toward the length
  if (ex.pre.size() + 1 > max_len || ex.post.size() + 1 > max_len) return std::nullopt;
  return ex;
}

enum class edit_side { pre, post };

struct editor_config {
  encoder_config encoder;
  double dropout = 0.4;
  std::size_t max_len = 30;
};

inline nlohmann::json to_json(const editor_config& c) {
  return {{"encoder", to_json(c.encoder)}, {"dropout", c.dropout}, {"max_len", c.max_len}};
}

inline editor_config editor_config_from_json(const nlohmann::json& j) {
  editor_config c;
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.dropout = j.at("dropout");
  c.max_len = j.at("max_len");
  return c;
}

/// Rewrites a rule span into a question with two attentive LSTM decoders,
/// one for the tokens before the span and one for those after. Both decoders
/// read and write through the same embedding matrix.
template <class T = float>
class editor {
 public:
  editor(const editor_config& config, rng_t& rng, const std::string& prefix = "editor/")
      : config_(config), encoder_(config.encoder, rng, prefix + "encoder/") {
    const std::size_t d = config_.encoder.d_model;
    const std::size_t n_v = config_.encoder.vocab_size;
    embed_ = uniform_parameter<T>({n_v, d}, 0.1, rng);
    params_.extend(encoder_.parameters());
    params_.add(prefix + "embedding", embed_);
    for (auto side : {edit_side::pre, edit_side::post}) {
      auto& dec = decoders_[index(side)];
      dec.lstm_w = linear_weight<T>(3 * d, 4 * d, rng);
      std::vector<T> bias(4 * d, T(0));
      for (std::size_t j = d; j < 2 * d; ++j) bias[j] = T(1);  // forget gate
      dec.lstm_b = basic_tensor<T>::vector(std::move(bias), true);
      dec.w_out = linear_weight<T>(2 * d, d, rng);
      dec.b_out = basic_tensor<T>::zeros({d}, true);
      const std::string p = prefix + (side == edit_side::pre ? "pre/" : "post/");
      params_.add(p + "lstm_w", dec.lstm_w);
      params_.add(p + "lstm_b", dec.lstm_b);
      params_.add(p + "w_out", dec.w_out);
      params_.add(p + "b_out", dec.b_out);
    }
  }

  const editor_config& config() const { return config_; }
  parameter_set<T>& parameters() { return params_; }
  const parameter_set<T>& parameters() const { return params_; }
  const basic_tensor<T>& embedding_matrix() const { return embed_; }

  /// Token ids of [span; SEP; document], document tail cut to fit.
  std::vector<int> edit_ids(const std::vector<std::string>& span, const std::vector<std::string>& document,
                            const vocabulary& vocab, std::vector<int>* segments = nullptr) const {
    const std::size_t limit = config_.encoder.max_position;
    if (span.size() + 1 > limit) throw input_error("editor: rule span longer than the encoder limit");
    std::vector<int> ids = vocab.encode(span);
    std::vector<int> seg(ids.size(), 0);
    ids.push_back(vocabulary::sep);
    seg.push_back(0);
    for (const auto& t : document) {
      if (ids.size() >= limit) break;
      ids.push_back(vocab.id(t));
      seg.push_back(1);
    }
    if (segments) *segments = std::move(seg);
    return ids;
  }

  basic_tensor<T> encode(const std::vector<std::string>& span, const std::vector<std::string>& document,
                         const vocabulary& vocab, bool train, rng_t& rng) const {
    std::vector<int> seg;
    auto ids = edit_ids(span, document, vocab, &seg);
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    return encoder_.encode(ids, seg, pos, train, rng);
  }

  /// Teacher-forced negative log-likelihood of `target` followed by the end
  /// token.
  basic_tensor<T> sequence_loss(const basic_tensor<T>& u_edit, edit_side side, const std::vector<int>& target,
                                bool train, rng_t& rng) const {
    auto st = start(u_edit);
    auto vt = transpose(embed_);
    basic_tensor<T> total;
    int prev = vocabulary::bos;
    for (std::size_t t = 0; t <= target.size(); ++t) {
      const int gold = t < target.size() ? target[t] : vocabulary::eos;
      auto logits = step(side, u_edit, vt, st, prev, train, rng);
      auto l = cross_entropy(logits, static_cast<std::size_t>(gold));
      total = total.defined() ? add(total, l) : l;
      prev = gold;
    }
    return total;
  }

  /// L_pre + L_post for one example.
  basic_tensor<T> loss(const edit_example& ex, const vocabulary& vocab, bool train, rng_t& rng) const {
    auto u = encode(ex.span, ex.document, vocab, train, rng);
    return add(sequence_loss(u, edit_side::pre, vocab.encode(ex.pre), train, rng),
               sequence_loss(u, edit_side::post, vocab.encode(ex.post), train, rng));
  }

  /// Output distribution for the first step, for inspection.
  basic_tensor<T> first_step_distribution(const basic_tensor<T>& u_edit, edit_side side) const {
    rng_t rng(0);
    auto st = start(u_edit);
    return softmax(step(side, u_edit, transpose(embed_), st, vocabulary::bos, false, rng), 1);
  }

  /// Greedy decoding until the end token or `max_len` tokens.
  std::vector<int> decode(const basic_tensor<T>& u_edit, edit_side side, std::size_t max_len) const {
    no_grad_guard guard;
    rng_t rng(0);
    auto st = start(u_edit);
    auto vt = transpose(embed_);
    std::vector<int> out;
    int prev = vocabulary::bos;
    while (out.size() < max_len) {
      auto logits = step(side, u_edit, vt, st, prev, false, rng);
      auto x = logits.data();
      const int best = static_cast<int>(std::max_element(x.begin(), x.end()) - x.begin());
      if (best == vocabulary::eos) break;
      out.push_back(best);
      prev = best;
    }
    return out;
  }

  /// Question text for a rule span. The span is trimmed first.
  std::string edit(const std::vector<std::string>& span, const std::vector<std::string>& document,
                   const vocabulary& vocab) const {
    no_grad_guard guard;
    rng_t rng(0);
    const auto trimmed = trim_rule(span);
    auto u = encode(trimmed, document, vocab, false, rng);
    auto words = [&](const std::vector<int>& ids) {
      std::vector<std::string> w;
      for (int id : ids) w.push_back(vocab.token(id));
      return w;
    };
    return compose(words(decode(u, edit_side::pre, config_.max_len)), trimmed,
                   words(decode(u, edit_side::post, config_.max_len)));
  }

 private:
  struct decoder {
    basic_tensor<T> lstm_w, lstm_b, w_out, b_out;
  };

  struct state {
    basic_tensor<T> h, c;  // [1, d]
  };

  static std::size_t index(edit_side s) { return s == edit_side::pre ? 0 : 1; }

  state start(const basic_tensor<T>& u_edit) const {
    return {mean_rows(u_edit), basic_tensor<T>::zeros({1, config_.encoder.d_model})};
  }

  // Advances `st` by one token and returns the [1, n_V] output logits.
  basic_tensor<T> step(edit_side side, const basic_tensor<T>& u_edit, const basic_tensor<T>& embed_t,
                       state& st, int prev, bool train, rng_t& rng) const {
    const auto& dec = decoders_[index(side)];
    const std::size_t d = config_.encoder.d_model;
    const std::size_t n = u_edit.dim(0);
    auto zeta = softmax(reshape(matmul(u_edit, transpose(st.h)), {n}), 0);
    auto a = matmul(reshape(zeta, {1, n}), u_edit);
    a = dropout(a, config_.dropout, train, rng);
    const int id[1] = {prev};
    auto v = embedding(embed_, std::span<const int>(id));
    auto gates = add_bias(matmul(concat(std::vector<basic_tensor<T>>{v, a, st.h}, 1), dec.lstm_w), dec.lstm_b);
    auto i = sigmoid(slice_cols(gates, 0, d));
    auto f = sigmoid(slice_cols(gates, d, d));
    auto g = tanh(slice_cols(gates, 2 * d, d));
    auto o = sigmoid(slice_cols(gates, 3 * d, d));
    st.c = add(mul(f, st.c), mul(i, g));
    st.h = mul(o, tanh(st.c));
    auto out = add_bias(matmul(concat(std::vector<basic_tensor<T>>{st.h, a}, 1), dec.w_out), dec.b_out);
    return matmul(out, embed_t);
  }

  editor_config config_;
  encoder<T> encoder_;
  parameter_set<T> params_;
  basic_tensor<T> embed_;
  decoder decoders_[2];
};

}  // namespace e3
