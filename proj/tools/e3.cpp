#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "e3/e3.hpp"
#include "e3/http_service.hpp"

namespace fs = std::filesystem;
using namespace e3;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(is);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::vector<raw_example> load_examples(const fs::path& path) {
  auto r = parse_dataset(path);
  for (const auto& w : r.warnings) std::cerr << "warning: " << path.string() << ": " << w << "\n";
  return r.examples;
}

train_config make_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  train_config cfg = file ? load_config(*file) : train_config{};
  std::string text;
  for (const auto& o : overrides) text += o + "\n";
  cfg = parse_config(text, cfg);
  cfg.validate();
  return cfg;
}

fs::path vocab_for(const fs::path& checkpoint, const std::optional<fs::path>& vocab) {
  return vocab ? *vocab : checkpoint.parent_path() / "vocab.txt";
}

std::shared_ptr<const e3_system<float>> load_system(const fs::path& checkpoint, const std::optional<fs::path>& vocab_path,
                                                    const std::optional<fs::path>& editor_path) {
  auto vocab = vocabulary::load(vocab_for(checkpoint, vocab_path));
  auto model = load_model<float>(checkpoint, vocab);
  std::optional<editor<float>> ed;
  if (editor_path) ed = load_editor<float>(*editor_path, vocab);
  return std::make_shared<const e3_system<float>>(std::move(vocab), std::move(model), std::move(ed));
}

std::string model_kind(const fs::path& checkpoint) { return read_checkpoint(checkpoint).metadata.value("kind", ""); }

prediction_map predict_all(const std::string& kind, const fs::path& checkpoint, const std::optional<fs::path>& vocab_path,
                           const std::optional<fs::path>& editor_path, const std::vector<raw_example>& data) {
  prediction_map preds;
  if (kind == "bertqa") {
    auto vocab = vocabulary::load(vocab_for(checkpoint, vocab_path));
    auto m = load_bertqa<float>(checkpoint, vocab);
    evaluate_bertqa(m, vocab, data, &preds);
    return preds;
  }
  auto sys = load_system(checkpoint, vocab_path, editor_path);
  for (const auto& ex : data) preds[ex.utterance_id] = sys->respond(ex.state()).move;
  return preds;
}

// ---------------------------------------------------------------- dialogue REPL

void print_turn(const session& s, std::ostream& os) {
  if (s.last_move.label == decision::inquire) {
    os << "system: " << s.last_move.question.value_or("") << "\n";
  } else {
    os << "system: " << to_string(s.last_move.label) << "\n";
  }
}

void print_explain(const session& s, std::ostream& os) {
  os << "spans:\n";
  for (const auto& r : s.explain) {
    os << "  [" << r.char_start << "," << r.char_end << ") \"" << r.text << "\"  g=" << r.g << " h=" << r.h
       << " r=" << r.r << "\n";
  }
  os << "class scores:";
  for (auto d : all_decisions) os << " " << to_string(d) << "=" << s.z[index_of(d)];
  os << "\n";
}

bool read_line(std::istream& is, std::ostream& os, const std::string& prompt, std::string& line) {
  os << prompt << std::flush;
  return static_cast<bool>(std::getline(is, line));
}

void run_repl(session_store<float>& store, const std::optional<std::string>& fixed_snippet, std::istream& is,
              std::ostream& os) {
  while (true) {
    std::string snippet;
    if (fixed_snippet) {
      snippet = *fixed_snippet;
    } else {
      os << "rule text (finish with an empty line):\n";
      std::string line;
      while (std::getline(is, line) && !line.empty()) snippet += (snippet.empty() ? "" : "\n") + line;
      if (!is && snippet.empty()) return;
    }
    std::string question, scenario;
    if (!read_line(is, os, "question: ", question)) return;
    if (!read_line(is, os, "scenario: ", scenario)) return;
    auto s = store.create(snippet, question, scenario);
    print_turn(s, os);
    while (s.status == session_status::awaiting_user) {
      std::string reply;
      if (!read_line(is, os, "you [yes/no/explain/quit]: ", reply)) return;
      if (reply == "quit") return;
      if (reply == "explain") {
        print_explain(s, os);
        continue;
      }
      if (!parse_user_answer(reply)) {
        os << "please answer yes or no\n";
        continue;
      }
      s = store.answer(s.id, reply);
      print_turn(s, os);
    }
    os << "dialogue concluded\n";
    if (fixed_snippet) return;
  }
}

std::function<void()> stop_server;

void on_signal(int) {
  if (stop_server) stop_server();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entailment-driven conversational rule reading"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write the bundled synthetic corpus");
  fs::path synth_out;
  synth->add_option("--out", synth_out, "output JSON file")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "build the vocabulary and rule-span supervision");
  std::vector<fs::path> pre_data;
  fs::path pre_out;
  pre->add_option("--data", pre_data, "dataset JSON files")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "output directory for vocab.txt and supervision.json")->required();

  // train
  auto* train = app.add_subcommand("train", "train the model or the extractive baseline");
  fs::path train_data, dev_data, work;
  std::optional<fs::path> config_file, train_out;
  std::vector<std::string> overrides;
  std::string model_name = "e3";
  train->add_option("--train", train_data, "training dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--dev", dev_data, "development dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--work", work, "directory produced by preprocess")->required()->check(CLI::ExistingDirectory);
  train->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--set", overrides, "override a config key, as key=value");
  train->add_option("--model", model_name, "e3 or bertqa")->check(CLI::IsMember({"e3", "bertqa"}));
  train->add_option("--out", train_out, "checkpoint path (default WORK/model.ckpt or WORK/bertqa.ckpt)");

  // train-editor
  auto* train_ed = app.add_subcommand("train-editor", "train the question editor");
  std::optional<fs::path> ed_out;
  train_ed->add_option("--train", train_data, "training dataset")->required()->check(CLI::ExistingFile);
  train_ed->add_option("--work", work, "directory produced by preprocess")->required()->check(CLI::ExistingDirectory);
  train_ed->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  train_ed->add_option("--set", overrides, "override a config key, as key=value");
  train_ed->add_option("--out", ed_out, "checkpoint path (default WORK/editor.ckpt)");

  // predict
  auto* predict = app.add_subcommand("predict", "write predictions for a dataset");
  fs::path data_path, checkpoint, preds_out;
  std::optional<fs::path> vocab_path, editor_path;
  predict->add_option("--data", data_path, "dataset")->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", checkpoint, "model or baseline checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--vocab", vocab_path, "vocabulary (default: vocab.txt next to the checkpoint)");
  predict->add_option("--editor", editor_path, "editor checkpoint")->check(CLI::ExistingFile);
  predict->add_option("--out", preds_out, "predictions JSON")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score predictions or a checkpoint against gold data");
  fs::path gold_path;
  std::optional<fs::path> preds_in, eval_ckpt, report_out;
  std::string eval_model;
  evaluate->add_option("--gold", gold_path, "gold dataset")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--predictions", preds_in, "predictions JSON")->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint to run instead of a predictions file")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--model", eval_model, "e3 or bertqa (checked against the checkpoint)")
      ->check(CLI::IsMember({"e3", "bertqa"}));
  evaluate->add_option("--vocab", vocab_path, "vocabulary (default: vocab.txt next to the checkpoint)");
  evaluate->add_option("--editor", editor_path, "editor checkpoint")->check(CLI::ExistingFile);
  evaluate->add_option("--report", report_out, "also write the JSON report here");

  // dialogue
  auto* dialogue = app.add_subcommand("dialogue", "interactive dialogue in the terminal");
  std::optional<fs::path> snippet_file, transcript;
  dialogue->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  dialogue->add_option("--vocab", vocab_path, "vocabulary (default: vocab.txt next to the checkpoint)");
  dialogue->add_option("--editor", editor_path, "editor checkpoint")->check(CLI::ExistingFile);
  dialogue->add_option("--snippet-file", snippet_file, "read the rule text from a file")->check(CLI::ExistingFile);
  dialogue->add_option("--transcript", transcript, "append turns to this JSONL file");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP JSON API and static files");
  int port = 8080;
  std::string host = "127.0.0.1";
  std::optional<fs::path> static_dir;
  serve->add_option("--port", port, "port (0 picks a free one)")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--vocab", vocab_path, "vocabulary (default: vocab.txt next to the checkpoint)");
  serve->add_option("--editor", editor_path, "editor checkpoint")->check(CLI::ExistingFile);
  serve->add_option("--static", static_dir, "directory of static files for the browser client")
      ->check(CLI::ExistingDirectory);
  serve->add_option("--transcript", transcript, "append turns to this JSONL file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      write_text(synth_out, synthetic_corpus().dump(2) + "\n");
      std::cout << "wrote " << synth_out.string() << "\n";
    } else if (*pre) {
      std::vector<raw_example> all;
      for (const auto& p : pre_data) {
        auto ex = load_examples(p);
        all.insert(all.end(), ex.begin(), ex.end());
      }
      fs::create_directories(pre_out);
      auto vocab = build_vocabulary(all);
      vocab.save(pre_out / "vocab.txt");
      std::vector<supervised_span_set> sets;
      for (auto& [_, set] : build_all_supervision(all)) sets.push_back(std::move(set));
      write_text(pre_out / "supervision.json", to_json(sets).dump(2) + "\n");
      std::cout << all.size() << " examples, " << sets.size() << " trees, " << vocab.size() << " vocabulary entries\n";
    } else if (*train) {
      auto cfg = make_config(config_file, overrides);
      auto vocab = vocabulary::load(work / "vocab.txt");
      auto train_raw = load_examples(train_data);
      auto dev_raw = load_examples(dev_data);
      std::ofstream log(work / (model_name == "bertqa" ? "bertqa_log.jsonl" : "train_log.jsonl"));
      log << nlohmann::json{{"config", to_json(cfg)}}.dump() << "\n";
      rng_t rng(cfg.seed);
      nlohmann::json meta{{"config", to_json(cfg)}};
      if (model_name == "bertqa") {
        auto mc = cfg.model(vocab.size());
        bertqa_model<float> m(mc.encoder, rng, cfg.max_length);
        auto s = train_bertqa(m, vocab, train_raw, dev_raw, cfg, &log);
        meta["step"] = s.best_step;
        const auto out = train_out.value_or(work / "bertqa.ckpt");
        save_bertqa(out, m, vocab, meta);
        std::cout << "steps " << s.steps << ", best step " << s.best_step << ", best combined " << s.best_score.first
                  << "\ncheckpoint " << out.string() << "\n";
      } else {
        auto sup = supervision_from_json(read_json(work / "supervision.json"));
        auto tr = make_training_examples(train_raw, sup);
        auto dv = make_training_examples(dev_raw, sup);
        e3_model<float> m(cfg.model(vocab.size()), rng);
        auto s = train_model(m, vocab, tr, dv, cfg, &log);
        meta["step"] = s.best_step;
        const auto out = train_out.value_or(work / "model.ckpt");
        save_model(out, m, vocab, meta);
        std::cout << "steps " << s.steps << ", best step " << s.best_step << ", best combined " << s.best_score.first
                  << " (micro " << s.best_score.second << ")\ncheckpoint " << out.string() << "\n";
      }
    } else if (*train_ed) {
      auto cfg = make_config(config_file, overrides);
      auto vocab = vocabulary::load(work / "vocab.txt");
      auto sup = supervision_from_json(read_json(work / "supervision.json"));
      auto data = make_edit_examples(make_training_examples(load_examples(train_data), sup), cfg.editor_max_len);
      std::ofstream log(work / "editor_log.jsonl");
      rng_t rng(cfg.seed);
      editor<float> ed(cfg.editor(vocab.size()), rng);
      auto losses = train_editor(ed, vocab, data, cfg, &log);
      const auto out = ed_out.value_or(work / "editor.ckpt");
      save_editor(out, ed, vocab, {{"config", to_json(cfg)}, {"step", losses.size()}});
      std::cout << data.size() << " aligned pairs, final loss " << (losses.empty() ? 0.0 : losses.back())
                << "\ncheckpoint " << out.string() << "\n";
    } else if (*predict) {
      auto preds = predict_all(model_kind(checkpoint), checkpoint, vocab_path, editor_path, load_examples(data_path));
      write_text(preds_out, to_json(preds).dump(2) + "\n");
      std::cout << preds.size() << " predictions written to " << preds_out.string() << "\n";
    } else if (*evaluate) {
      if (static_cast<bool>(preds_in) == static_cast<bool>(eval_ckpt))
        throw std::runtime_error("evaluate needs exactly one of --predictions or --checkpoint");
      auto gold = load_examples(gold_path);
      prediction_map preds;
      if (preds_in) {
        preds = predictions_from_json(read_json(*preds_in));
      } else {
        const auto kind = model_kind(*eval_ckpt);
        if (!eval_model.empty() && eval_model != kind)
          throw std::runtime_error("--model " + eval_model + " does not match a checkpoint of kind " + kind);
        preds = predict_all(kind, *eval_ckpt, vocab_path, editor_path, gold);
      }
      auto report = score_predictions(preds, gold);
      std::cout << to_json(report).dump() << "\n\n" << format_report(report);
      if (report_out) write_text(*report_out, to_json(report).dump(2) + "\n");
    } else if (*dialogue) {
      session_store<float> store(load_system(checkpoint, vocab_path, editor_path), transcript);
      std::optional<std::string> snippet;
      if (snippet_file) snippet = read_text_file(*snippet_file);
      run_repl(store, snippet, std::cin, std::cout);
    } else if (*serve) {
      session_store<float> store(load_system(checkpoint, vocab_path, editor_path), transcript);
      http_service<float> service(store, static_dir);
      const int bound = service.bind(host, port);
      stop_server = [&] { service.stop(); };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      service.run();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
