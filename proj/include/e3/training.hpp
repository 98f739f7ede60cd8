#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/adam.hpp"
#include "e3/bertqa.hpp"
#include "e3/evaluation.hpp"
#include "e3/model.hpp"

namespace e3 {

// ---------------------------------------------------------------- configuration

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct train_config {
  double lambda_re = 400.0;
  double tau = 0.5;
  double learning_rate = 5e-5;
  double warmup = 0.1;
  double dropout = 0.4;
  std::size_t batch_size = 8;
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 13;

  std::size_t d_model = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t feedforward = 256;
  std::size_t max_length = 512;
  bool bullet_union = true;

  std::size_t editor_steps = 400;
  double editor_learning_rate = 1e-3;
  std::size_t editor_d_model = 64;
  std::size_t editor_layers = 1;
  std::size_t editor_heads = 2;
  std::size_t editor_feedforward = 128;
  std::size_t editor_max_len = 30;

  /// Sets one key from its text form. Unknown keys and bad values throw.
  void set(const std::string& key, const std::string& value) {
    auto as_double = [&] {
      try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw config_error("config key '" + key + "' expects a number, got '" + value + "'");
      }
    };
    auto as_size = [&] {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        throw config_error("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
      return v;
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "no") return false;
      throw config_error("config key '" + key + "' expects true or false, got '" + value + "'");
    };
    if (key == "lambda_re") lambda_re = as_double();
    else if (key == "tau") tau = as_double();
    else if (key == "learning_rate") learning_rate = as_double();
    else if (key == "warmup") warmup = as_double();
    else if (key == "dropout") dropout = as_double();
    else if (key == "batch_size") batch_size = as_size();
    else if (key == "max_steps") max_steps = as_size();
    else if (key == "eval_interval") eval_interval = as_size();
    else if (key == "patience") patience = as_size();
    else if (key == "seed") seed = as_size();
    else if (key == "d_model") d_model = as_size();
    else if (key == "layers") layers = as_size();
    else if (key == "heads") heads = as_size();
    else if (key == "feedforward") feedforward = as_size();
    else if (key == "max_length") max_length = as_size();
    else if (key == "bullet_union") bullet_union = as_bool();
    else if (key == "editor_steps") editor_steps = as_size();
    else if (key == "editor_learning_rate") editor_learning_rate = as_double();
    else if (key == "editor_d_model") editor_d_model = as_size();
    else if (key == "editor_layers") editor_layers = as_size();
    else if (key == "editor_heads") editor_heads = as_size();
    else if (key == "editor_feedforward") editor_feedforward = as_size();
    else if (key == "editor_max_len") editor_max_len = as_size();
    else throw config_error("unknown config key '" + key + "'");
  }

  void validate() const {
    if (lambda_re < 0 || learning_rate <= 0 || editor_learning_rate <= 0)
      throw config_error("rates and lambda_re must be positive");
    if (!(tau > 0 && tau < 1)) throw config_error("tau must be in (0,1)");
    if (!(warmup >= 0 && warmup <= 1)) throw config_error("warmup must be in [0,1]");
    if (!(dropout >= 0 && dropout < 1)) throw config_error("dropout must be in [0,1)");
    if (batch_size == 0 || eval_interval == 0) throw config_error("batch_size and eval_interval must be positive");
  }

  model_config model(std::size_t vocab_size) const {
    model_config m;
    m.encoder.vocab_size = vocab_size;
    m.encoder.d_model = d_model;
    m.encoder.layers = layers;
    m.encoder.heads = heads;
    m.encoder.feedforward = feedforward;
    m.encoder.dropout = dropout;
    m.encoder.max_position = std::max<std::size_t>(max_length, 1);
    m.tau = tau;
    m.bullet_union = bullet_union;
    m.max_length = max_length;
    return m;
  }

  editor_config editor(std::size_t vocab_size) const {
    editor_config e;
    e.encoder.vocab_size = vocab_size;
    e.encoder.d_model = editor_d_model;
    e.encoder.layers = editor_layers;
    e.encoder.heads = editor_heads;
    e.encoder.feedforward = editor_feedforward;
    e.encoder.dropout = dropout;
    e.encoder.max_position = std::max<std::size_t>(max_length, 1);
    e.dropout = dropout;
    e.max_len = editor_max_len;
    return e;
  }
};

inline nlohmann::json to_json(const train_config& c) {
  return {{"lambda_re", c.lambda_re},
          {"tau", c.tau},
          {"learning_rate", c.learning_rate},
          {"warmup", c.warmup},
          {"dropout", c.dropout},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"eval_interval", c.eval_interval},
          {"patience", c.patience},
          {"seed", c.seed},
          {"d_model", c.d_model},
          {"layers", c.layers},
          {"heads", c.heads},
          {"feedforward", c.feedforward},
          {"max_length", c.max_length},
          {"bullet_union", c.bullet_union},
          {"editor_steps", c.editor_steps},
          {"editor_learning_rate", c.editor_learning_rate},
          {"editor_d_model", c.editor_d_model},
          {"editor_layers", c.editor_layers},
          {"editor_heads", c.editor_heads},
          {"editor_feedforward", c.editor_feedforward},
          {"editor_max_len", c.editor_max_len}};
}

/// Reads `key = value` lines into `base`. Blank lines and lines starting with
/// '#' are skipped.
inline train_config parse_config(std::string_view text, train_config base = {}) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    if (nl == text.size()) break;
  }
  return base;
}

inline train_config load_config(const std::filesystem::path& path, train_config base = {}) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot read config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), {});
  return parse_config(text, base);
}

// ---------------------------------------------------------------- evaluation

struct dev_metrics {
  eval_report report;
  double span_precision = 0.0;
  double span_recall = 0.0;
  double span_f1 = 0.0;
};

inline nlohmann::json to_json(const dev_metrics& m) {
  auto j = to_json(m.report);
  j["span_precision"] = m.span_precision;
  j["span_recall"] = m.span_recall;
  j["span_f1"] = m.span_f1;
  return j;
}

/// Predicted move per utterance id.
using prediction_map = std::map<std::string, model_move>;

inline nlohmann::json to_json(const prediction_map& preds) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [id, m] : preds) {
    out[id] = {{"decision", std::string(to_string(m.label))}, {"question", m.question.value_or("")}};
  }
  return out;
}

inline prediction_map predictions_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw dataset_error("predictions file must be a JSON object");
  prediction_map out;
  for (const auto& [id, v] : doc.items()) {
    model_move m;
    auto label = parse_decision(v.at("decision").get<std::string>());
    if (!label) throw dataset_error("prediction " + id + " has an unknown decision");
    m.label = *label;
    if (v.contains("question") && !v.at("question").get<std::string>().empty())
      m.question = v.at("question").get<std::string>();
    out[id] = m;
  }
  return out;
}

/// Scores predictions against gold examples. Missing predictions count as
/// wrong ("irrelevant" with no question).
inline eval_report score_predictions(const prediction_map& preds, const std::vector<raw_example>& gold) {
  std::vector<scored_turn> turns;
  for (const auto& ex : gold) {
    scored_turn t;
    t.gold = ex.gold_decision();
    t.gold_question = ex.gold_question().value_or("");
    auto it = preds.find(ex.utterance_id);
    if (it == preds.end()) {
      t.pred = t.gold == decision::irrelevant ? decision::yes : decision::irrelevant;
    } else {
      t.pred = it->second.label;
      t.pred_question = it->second.question.value_or("");
    }
    turns.push_back(std::move(t));
  }
  return evaluate_turns(turns);
}

/// Runs the system over the examples and scores decisions, questions and
/// extracted spans.
template <class T>
dev_metrics evaluate_system(const e3_system<T>& sys, const std::vector<training_example>& examples,
                            prediction_map* predictions = nullptr) {
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  std::vector<scored_turn> turns;
  std::size_t tp = 0, n_pred = 0, n_gold = 0;
  for (const auto& ex : examples) {
    auto p = sys.respond(ex.state);
    scored_turn t{ex.gold, ex.gold_question, p.move.label, p.move.question.value_or("")};
    turns.push_back(t);
    if (predictions) (*predictions)[ex.utterance_id] = p.move;
    n_pred += p.extracted.size();
    n_gold += ex.gold_spans.size();
    for (const auto& s : p.extracted) tp += std::count(ex.gold_spans.begin(), ex.gold_spans.end(), s);
  }
  dev_metrics m;
  m.report = evaluate_turns(turns);
  m.span_precision = n_pred ? 100.0 * static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  m.span_recall = n_gold ? 100.0 * static_cast<double>(tp) / static_cast<double>(n_gold) : 0.0;
  m.span_f1 = m.span_precision + m.span_recall > 0
                  ? 2 * m.span_precision * m.span_recall / (m.span_precision + m.span_recall)
                  : 0.0;
  return m;
}

// ---------------------------------------------------------------- steps

struct step_losses {
  double dec = 0.0;
  double re = 0.0;
  double total = 0.0;
  std::size_t flagged = 0;
};

inline nlohmann::json to_json(const step_losses& l) {
  return {{"l_dec", l.dec}, {"l_re", l.re}, {"total", l.total}, {"flagged", l.flagged}};
}

/// One Adam update on the batch mean of L_dec + lambda * L_re.
template <class T>
step_losses joint_step(e3_model<T>& model, const std::vector<const training_example*>& batch,
                       const vocabulary& vocab, adam<T>& opt, double lambda_re, rng_t& rng) {
  if (batch.empty()) throw std::invalid_argument("joint_step: empty batch");
  model.parameters().zero_grad();
  step_losses out;
  const T inv_b = T(1) / static_cast<T>(batch.size());
  for (const auto* ex : batch) {
    auto l = model.example_losses(*ex, vocab, true, rng);
    auto total = scale(add(l.dec, scale(l.re, static_cast<T>(lambda_re))), inv_b);
    out.dec += static_cast<double>(l.dec.item());
    out.re += static_cast<double>(l.re.item());
    out.total += static_cast<double>(total.item());
    out.flagged += l.flagged;
    if (!std::isfinite(out.total)) throw non_finite_error("non-finite loss in example " + ex->utterance_id);
    total.backward();
  }
  out.dec /= static_cast<double>(batch.size());
  out.re /= static_cast<double>(batch.size());
  opt.step(model.parameters());
  return out;
}

/// Cycles through a dataset in shuffled passes.
class batch_sampler {
 public:
  batch_sampler(std::size_t n, std::size_t batch_size, rng_t& rng) : order_(n), batch_(batch_size), rng_(rng) {
    if (n == 0) throw std::invalid_argument("batch_sampler: empty dataset");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < std::min(batch_, order_.size())) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  rng_t& rng_;
};

// ---------------------------------------------------------------- loops

struct train_summary {
  std::size_t steps = 0;
  std::size_t evaluations = 0;
  bool stopped_early = false;
  std::size_t best_step = 0;
  std::pair<double, double> best_score{-std::numeric_limits<double>::infinity(), 0.0};
  std::vector<step_losses> losses;
};

/// Generic loop with periodic evaluation, best-snapshot retention and early
/// stopping. `evaluate` returns (primary, tie-break) scores plus a JSON record
/// for the log; the best-scoring state is restored at the end.
struct training_hooks {
  std::function<step_losses(std::size_t step)> step;
  std::function<std::pair<std::pair<double, double>, nlohmann::json>()> evaluate;
  std::function<void()> save_best;
  std::function<void()> restore_best;
};

inline train_summary run_training(const train_config& cfg, const training_hooks& hooks, std::ostream* log) {
  train_summary s;
  std::size_t since_best = 0;
  bool have_best = false;
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    auto l = hooks.step(step);
    s.losses.push_back(l);
    s.steps = step;
    if (log) {
      auto rec = to_json(l);
      rec["step"] = step;
      *log << rec.dump() << "\n";
    }
    if (step % cfg.eval_interval != 0 && step != cfg.max_steps) continue;
    auto [score, record] = hooks.evaluate();
    ++s.evaluations;
    if (log) *log << nlohmann::json{{"step", step}, {"dev", record}}.dump() << "\n";
    if (!have_best || score > s.best_score) {
      have_best = true;
      s.best_score = score;
      s.best_step = step;
      since_best = 0;
      if (hooks.save_best) hooks.save_best();
    } else if (++since_best >= cfg.patience) {
      s.stopped_early = true;
      break;
    }
  }
  if (log) log->flush();
  if (have_best && hooks.restore_best) hooks.restore_best();
  return s;
}

/// Joint training of the main model. Dev examples are scored with raw-span
/// questions; the best combined score (micro accuracy breaks ties) is kept.
template <class T>
train_summary train_model(e3_model<T>& model, const vocabulary& vocab, const std::vector<training_example>& train,
                          const std::vector<training_example>& dev, const train_config& cfg,
                          std::ostream* log = nullptr) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw std::invalid_argument("train: empty train or dev split");
  rng_t rng(cfg.seed);
  adam<T> opt({.learning_rate = cfg.learning_rate, .warmup_fraction = cfg.warmup, .total_steps = cfg.max_steps});
  batch_sampler sampler(train.size(), cfg.batch_size, rng);
  std::map<std::string, std::vector<T>> best;
  training_hooks hooks;
  hooks.step = [&](std::size_t) {
    std::vector<const training_example*> batch;
    for (auto i : sampler.next()) batch.push_back(&train[i]);
    return joint_step(model, batch, vocab, opt, cfg.lambda_re, rng);
  };
  hooks.evaluate = [&] {
    e3_system<T> sys(vocab, model);
    auto m = evaluate_system(sys, dev);
    return std::make_pair(std::make_pair(m.report.combined, m.report.micro), to_json(m));
  };
  hooks.save_best = [&] { best = model.parameters().snapshot(); };
  hooks.restore_best = [&] { model.parameters().restore(best); };
  return run_training(cfg, hooks, log);
}

/// Editor pairs for every inquiry turn whose gold rule can be aligned with
/// its question.
inline std::vector<edit_example> make_edit_examples(const std::vector<training_example>& examples,
                                                    std::size_t max_len = 30) {
  std::vector<edit_example> out;
  for (const auto& ex : examples) {
    if (ex.gold != decision::inquire || !ex.gold_rule) continue;
    const auto doc = tokenize(ex.state.snippet).tokens;
    const auto& s = ex.gold_spans[*ex.gold_rule];
    std::vector<std::string> rule(doc.begin() + static_cast<std::ptrdiff_t>(s.start),
                                  doc.begin() + static_cast<std::ptrdiff_t>(s.end + 1));
    if (auto e = make_edit_example(rule, doc, ex.gold_question, max_len)) out.push_back(std::move(*e));
  }
  return out;
}

/// Optimizes L_edit alone for `cfg.editor_steps` updates. Returns the batch
/// mean loss of every step.
template <class T>
std::vector<double> train_editor(editor<T>& ed, const vocabulary& vocab, const std::vector<edit_example>& data,
                                 const train_config& cfg, std::ostream* log = nullptr) {
  if (data.empty()) throw std::invalid_argument("train_editor: no aligned examples");
  rng_t rng(cfg.seed);
  adam<T> opt({.learning_rate = cfg.editor_learning_rate, .warmup_fraction = 0.0});
  batch_sampler sampler(data.size(), cfg.batch_size, rng);
  std::vector<double> losses;
  for (std::size_t step = 1; step <= cfg.editor_steps; ++step) {
    ed.parameters().zero_grad();
    auto idx = sampler.next();
    double total = 0.0;
    for (auto i : idx) {
      auto l = scale(ed.loss(data[i], vocab, true, rng), T(1) / static_cast<T>(idx.size()));
      total += static_cast<double>(l.item());
      if (!std::isfinite(total)) throw non_finite_error("non-finite editor loss at step " + std::to_string(step));
      l.backward();
    }
    opt.step(ed.parameters());
    losses.push_back(total);
    if (log) *log << nlohmann::json{{"step", step}, {"l_edit", total}}.dump() << "\n";
  }
  return losses;
}

// ---------------------------------------------------------------- baseline

template <class T>
eval_report evaluate_bertqa(const bertqa_model<T>& model, const vocabulary& vocab,
                            const std::vector<raw_example>& examples, prediction_map* predictions = nullptr) {
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  prediction_map local;
  auto& preds = predictions ? *predictions : local;
  for (const auto& ex : examples) preds[ex.utterance_id] = model.predict(ex.state(), vocab).move;
  return score_predictions(preds, examples);
}

/// Trains the extractive baseline on start/end cross entropy. Examples whose
/// gold inquiry cannot be located in the document are skipped.
template <class T>
train_summary train_bertqa(bertqa_model<T>& model, const vocabulary& vocab, const std::vector<raw_example>& train,
                           const std::vector<raw_example>& dev, const train_config& cfg,
                           std::ostream* log = nullptr) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw std::invalid_argument("train: empty train or dev split");
  rng_t rng(cfg.seed);
  adam<T> opt({.learning_rate = cfg.learning_rate, .warmup_fraction = cfg.warmup, .total_steps = cfg.max_steps});
  batch_sampler sampler(train.size(), cfg.batch_size, rng);
  std::map<std::string, std::vector<T>> best;
  training_hooks hooks;
  hooks.step = [&](std::size_t) {
    model.parameters().zero_grad();
    step_losses out;
    auto idx = sampler.next();
    for (auto i : idx) {
      auto l = model.loss(train[i], vocab, true, rng);
      if (!l) {
        ++out.flagged;
        continue;
      }
      auto scaled = scale(*l, T(1) / static_cast<T>(idx.size()));
      out.total += static_cast<double>(scaled.item());
      if (!std::isfinite(out.total)) throw non_finite_error("non-finite loss in example " + train[i].utterance_id);
      scaled.backward();
    }
    out.dec = out.total;
    opt.step(model.parameters());
    return out;
  };
  hooks.evaluate = [&] {
    auto r = evaluate_bertqa(model, vocab, dev);
    return std::make_pair(std::make_pair(r.combined, r.micro), to_json(r));
  };
  hooks.save_best = [&] { best = model.parameters().snapshot(); };
  hooks.restore_best = [&] { model.parameters().restore(best); };
  return run_training(cfg, hooks, log);
}

}  // namespace e3
