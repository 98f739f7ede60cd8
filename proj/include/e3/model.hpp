#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/checkpoint.hpp"
#include "e3/decision.hpp"
#include "e3/editor.hpp"
#include "e3/encoder.hpp"
#include "e3/entailment.hpp"
#include "e3/extraction.hpp"
#include "e3/sharc.hpp"

namespace e3 {

struct model_config {
  encoder_config encoder;
  double tau = 0.5;
  // Add bullet spans to the extracted rules at inference time.
  bool bullet_union = true;
  std::size_t max_length = 512;
  extraction_loss_mode loss_mode = extraction_loss_mode::union_targets;
};

inline nlohmann::json to_json(const model_config& c) {
  return {{"encoder", to_json(c.encoder)},
          {"tau", c.tau},
          {"bullet_union", c.bullet_union},
          {"max_length", c.max_length},
          {"loss_mode", c.loss_mode == extraction_loss_mode::per_rule ? "per-rule" : "union"}};
}

inline model_config model_config_from_json(const nlohmann::json& j) {
  model_config c;
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.tau = j.at("tau");
  c.bullet_union = j.at("bullet_union");
  c.max_length = j.at("max_length");
  c.loss_mode = j.value("loss_mode", "union") == "per-rule" ? extraction_loss_mode::per_rule
                                                             : extraction_loss_mode::union_targets;
  return c;
}

/// One supervised turn.
struct training_example {
  std::string utterance_id;
  std::string tree_id;
  dialogue_state state;
  decision gold = decision::yes;
  std::string gold_question;
  // Gold rule spans over the document tokens.
  std::vector<rule_span> gold_spans;
  // Index into gold_spans of the rule the gold question asks about.
  std::optional<std::size_t> gold_rule;
};

/// Joins parsed examples with their tree's supervision spans. The gold rule
/// of an inquiry is the span with the highest token overlap with the gold
/// question (first on ties).
inline std::vector<training_example> make_training_examples(
    const std::vector<raw_example>& raw, const std::map<std::string, supervised_span_set>& supervision) {
  std::vector<training_example> out;
  for (const auto& ex : raw) {
    training_example t;
    t.utterance_id = ex.utterance_id;
    t.tree_id = ex.tree_id;
    t.state = ex.state();
    t.gold = ex.gold_decision();
    t.gold_question = ex.gold_question().value_or("");
    const auto doc = tokenize(ex.snippet).tokens;
    if (auto it = supervision.find(ex.tree_id); it != supervision.end()) {
      for (const auto& s : it->second.spans)
        if (s.start <= s.end && s.end < doc.size()) t.gold_spans.push_back({s.start, s.end});
    }
    if (t.gold == decision::inquire && !t.gold_spans.empty()) {
      const auto q = tokenize(t.gold_question).tokens;
      double best = -1.0;
      for (std::size_t i = 0; i < t.gold_spans.size(); ++i) {
        const auto& s = t.gold_spans[i];
        std::vector<std::string> words(doc.begin() + static_cast<std::ptrdiff_t>(s.start),
                                       doc.begin() + static_cast<std::ptrdiff_t>(s.end + 1));
        const double f = overlap_f1(words, q);
        if (f > best) {
          best = f;
          t.gold_rule = i;
        }
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

/// Vocabulary over every text field of the examples.
inline vocabulary build_vocabulary(const std::vector<raw_example>& examples) {
  vocabulary v;
  v.add_all(std::vector<std::string>{"yes", "no", "irrelevant"});
  for (const auto& ex : examples) {
    v.add_all(tokenize(ex.snippet).tokens);
    v.add_all(tokenize(ex.question).tokens);
    v.add_all(tokenize(ex.scenario).tokens);
    for (const auto& t : ex.history) {
      v.add_all(tokenize(t.inquiry).tokens);
      v.add_all(tokenize(t.answer).tokens);
    }
    v.add_all(tokenize(ex.answer).tokens);
  }
  return v;
}

/// Everything computed for one dialogue state.
template <class T>
struct forward_pass {
  assembled_input input;
  basic_tensor<T> u;
  boundary_scores<T> scores;
  std::vector<rule_span> rules;
  std::vector<entailment_scores> entailment;
  decision_output<T> output;
};

/// Per-rule details of a prediction.
struct rule_report {
  rule_span span;
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive
  double g = 0.0;
  double h = 0.0;
  double r = 0.0;
};

struct prediction {
  model_move move;
  std::vector<rule_report> rules;
  std::array<double, decision_count> z{};
  // Spans from the boundary scores alone.
  std::vector<rule_span> extracted;
};

/// Encoder, extraction, entailment and decision modules trained jointly.
template <class T = float>
class e3_model {
 public:
  e3_model(const model_config& config, rng_t& rng)
      : config_(config),
        encoder_(config.encoder, rng),
        extractor_(config.encoder.d_model, rng),
        decider_(config.encoder.d_model, rng) {
    params_.extend(encoder_.parameters());
    params_.extend(extractor_.parameters());
    params_.extend(decider_.parameters());
  }

  const model_config& config() const { return config_; }
  parameter_set<T>& parameters() { return params_; }
  const parameter_set<T>& parameters() const { return params_; }
  const encoder<T>& encoder_module() const { return encoder_; }
  const span_extractor<T>& extractor() const { return extractor_; }
  const decision_head<T>& decider() const { return decider_; }

  assembled_input assemble(const dialogue_state& state, const vocabulary& vocab) const {
    return assemble_input(state, vocab, {.max_length = std::min(config_.max_length, config_.encoder.max_position)});
  }

  /// Extracted spans plus (optionally) bullet spans, nested ones removed.
  std::vector<rule_span> candidate_rules(const boundary_scores<T>& scores, const dialogue_state& state,
                                         std::size_t doc_tokens) const {
    auto spans = pair_spans(scores.alpha(), scores.beta(), config_.tau);
    if (config_.bullet_union) {
      for (auto [s, e] : bullet_spans(state.snippet, tokenize(state.snippet)))
        if (e < doc_tokens) spans.push_back({s, e});
    }
    return remove_nested(spans);
  }

  /// Runs the network. With `rules` unset the candidate rules are used.
  forward_pass<T> forward(const dialogue_state& state, const vocabulary& vocab, bool train, rng_t& rng,
                          const std::vector<rule_span>* rules = nullptr) const {
    forward_pass<T> fp;
    fp.input = assemble(state, vocab);
    fp.u = encoder_.encode(fp.input, train, rng);
    const auto [d0, d1] = fp.input.document_range;
    auto u_doc = slice_rows(fp.u, d0, d1 - d0);
    fp.scores = extractor_.score(u_doc);
    fp.rules = rules ? *rules : candidate_rules(fp.scores, state, d1 - d0);

    const auto doc = tokenize(state.snippet).tokens;
    const auto scenario = tokenize(state.scenario).tokens;
    std::vector<std::vector<std::string>> inquiries;
    for (const auto& t : state.history) inquiries.push_back(tokenize(t.inquiry).tokens);
    std::vector<basic_tensor<T>> enriched;
    for (const auto& s : fp.rules) {
      std::vector<std::string> words(doc.begin() + static_cast<std::ptrdiff_t>(s.start),
                                     doc.begin() + static_cast<std::ptrdiff_t>(s.end + 1));
      fp.entailment.push_back(entail_scores(words, scenario, inquiries));
      enriched.push_back(enrich(extractor_.pool(u_doc, s), fp.entailment.back()));
    }
    fp.output = decider_.score(decider_.summarize(fp.u), enriched);
    return fp;
  }

  struct losses {
    basic_tensor<T> dec;
    basic_tensor<T> re;
    bool flagged = false;
  };

  /// L_dec and L_re for a supervised turn, using the gold spans as rules.
  losses example_losses(const training_example& ex, const vocabulary& vocab, bool train, rng_t& rng) const {
    std::vector<rule_span> rules;
    std::optional<std::size_t> gold_rule;
    const auto doc_len = assemble(ex.state, vocab).document_range;
    const std::size_t n_doc = doc_len.second - doc_len.first;
    for (std::size_t i = 0; i < ex.gold_spans.size(); ++i) {
      if (ex.gold_spans[i].end >= n_doc) continue;  // cut off by truncation
      if (ex.gold_rule && *ex.gold_rule == i) gold_rule = rules.size();
      rules.push_back(ex.gold_spans[i]);
    }
    auto fp = forward(ex.state, vocab, train, rng, &rules);
    auto dl = decision_loss(fp.output, ex.gold, gold_rule);
    return {dl.loss, extraction_loss(fp.scores, rules, config_.loss_mode), dl.flagged};
  }

  /// Inference without gradient recording.
  prediction predict(const dialogue_state& state, const vocabulary& vocab) const {
    no_grad_guard guard;
    rng_t rng(0);
    auto fp = forward(state, vocab, false, rng);
    prediction p;
    p.move = infer_move(fp.output);
    for (std::size_t k = 0; k < decision_count; ++k) p.z[k] = fp.output.z[k];
    p.extracted = pair_spans(fp.scores.alpha(), fp.scores.beta(), config_.tau);
    const auto tokens = tokenize(state.snippet);
    for (std::size_t i = 0; i < fp.rules.size(); ++i) {
      const auto& s = fp.rules[i];
      rule_report rr;
      rr.span = s;
      rr.char_start = tokens.offsets[s.start].first;
      rr.char_end = tokens.offsets[s.end].second;
      rr.text = state.snippet.substr(rr.char_start, rr.char_end - rr.char_start);
      rr.g = fp.entailment[i].g;
      rr.h = fp.entailment[i].h;
      rr.r = fp.output.r[i];
      p.rules.push_back(std::move(rr));
    }
    return p;
  }

 private:
  model_config config_;
  encoder<T> encoder_;
  span_extractor<T> extractor_;
  decision_head<T> decider_;
  parameter_set<T> params_;
};

// ---------------------------------------------------------------- persistence

template <class T>
void save_model(const std::filesystem::path& path, const e3_model<T>& model, const vocabulary& vocab,
                nlohmann::json extra = nlohmann::json::object()) {
  extra["vocab_hash"] = vocab.hash();
  extra["model"] = to_json(model.config());
  extra["kind"] = "e3";
  save_checkpoint(path, model.parameters(), extra);
}

template <class T = float>
e3_model<T> load_model(const std::filesystem::path& path, const vocabulary& vocab) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.metadata.value("kind", "") != "e3") throw checkpoint_error("not a model checkpoint: " + path.string());
  if (ckpt.metadata.value("vocab_hash", "") != vocab.hash())
    throw checkpoint_error("vocabulary does not match checkpoint " + path.string());
  rng_t rng(0);
  e3_model<T> model(model_config_from_json(ckpt.metadata.at("model")), rng);
  load_parameters(ckpt, model.parameters());
  return model;
}

template <class T>
void save_editor(const std::filesystem::path& path, const editor<T>& ed, const vocabulary& vocab,
                 nlohmann::json extra = nlohmann::json::object()) {
  extra["vocab_hash"] = vocab.hash();
  extra["editor"] = to_json(ed.config());
  extra["kind"] = "editor";
  save_checkpoint(path, ed.parameters(), extra);
}

template <class T = float>
editor<T> load_editor(const std::filesystem::path& path, const vocabulary& vocab) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.metadata.value("kind", "") != "editor")
    throw checkpoint_error("not an editor checkpoint: " + path.string());
  if (ckpt.metadata.value("vocab_hash", "") != vocab.hash())
    throw checkpoint_error("vocabulary does not match checkpoint " + path.string());
  rng_t rng(0);
  editor<T> ed(editor_config_from_json(ckpt.metadata.at("editor")), rng);
  load_parameters(ckpt, ed.parameters());
  return ed;
}

// ---------------------------------------------------------------- full system

/// A trained model plus the way inquiries are phrased: through the editor
/// when one is attached, otherwise as the bare rule text.
template <class T = float>
class e3_system {
 public:
  e3_system(vocabulary vocab, e3_model<T> model, std::optional<editor<T>> ed = std::nullopt)
      : vocab_(std::move(vocab)), model_(std::move(model)), editor_(std::move(ed)) {}

  const vocabulary& vocab() const { return vocab_; }
  const e3_model<T>& model() const { return model_; }
  bool has_editor() const { return editor_.has_value(); }

  prediction respond(const dialogue_state& state) const {
    auto p = model_.predict(state, vocab_);
    if (p.move.label == decision::inquire && p.move.rule_index) {
      const auto& rule = p.rules[*p.move.rule_index];
      if (editor_) {
        const auto doc = tokenize(state.snippet).tokens;
        std::vector<std::string> words(doc.begin() + static_cast<std::ptrdiff_t>(rule.span.start),
                                       doc.begin() + static_cast<std::ptrdiff_t>(rule.span.end + 1));
        p.move.question = editor_->edit(words, doc, vocab_);
      } else {
        p.move.question = rule.text;
      }
    }
    return p;
  }

 private:
  vocabulary vocab_;
  e3_model<T> model_;
  std::optional<editor<T>> editor_;
};

}  // namespace e3
