#include <catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "e3/bertqa.hpp"
#include "e3/synthetic.hpp"
#include "e3/training.hpp"
#include "oracles.hpp"

using namespace e3;
using Catch::Approx;

namespace {

raw_example synthetic_example(std::size_t i) { return parse_dataset(synthetic_corpus()).examples.at(i); }

encoder_config tiny_encoder(std::size_t vocab) {
  encoder_config c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.feedforward = 32;
  c.dropout = 0.0;
  c.max_position = 128;
  return c;
}

}  // namespace

TEST_CASE("extract_answer examples", "[bertqa]") {
  CHECK(extract_answer({0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}) == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(extract_answer({1.0}, {1.0}) == std::pair<std::size_t, std::size_t>{0, 0});
  // the best end comes before the best start
  CHECK(extract_answer({0.1, 0.9}, {0.9, 0.1}) == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(extract_answer({0.5, 0.5}, {0.5, 0.5}) == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK_THROWS_AS(extract_answer({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(extract_answer({0.5}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("extract_answer matches the exhaustive search", "[bertqa][oracle]") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<std::size_t> len(1, 50), coarse(0, 4);
  std::size_t mismatches = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = len(rng);
    std::vector<double> s(n), e(n);
    // every fourth case uses coarse values so ties occur
    const bool ties = c % 4 == 0;
    for (auto& x : s) x = ties ? static_cast<double>(coarse(rng)) / 4 : u(rng);
    for (auto& x : e) x = ties ? static_cast<double>(coarse(rng)) / 4 : u(rng);
    mismatches += extract_answer(s, e) != testing::brute_best_span(s, e);
  }
  CHECK(mismatches == 0);
}

TEST_CASE("augmented input appends label blocks after the dialogue", "[bertqa]") {
  auto ex = synthetic_example(1);
  auto vocab = build_vocabulary({ex});
  auto a = build_augmented_input(ex.state(), vocab, 512);
  const std::size_t n = a.input.size();
  CHECK(a.label_positions[0] == n - 6);
  CHECK(a.label_positions[1] == n - 4);
  CHECK(a.label_positions[2] == n - 2);
  CHECK(a.input.tokens[n - 6] == "yes");
  CHECK(a.input.tokens[n - 4] == "no");
  CHECK(a.input.tokens[n - 2] == "irrelevant");
  CHECK(a.input.tokens.back() == "[SEP]");
  auto plain = assemble_input(ex.state(), vocab, {});
  CHECK(plain.size() + 6 == n);
  CHECK(a.label_positions[0] >= plain.size());

  auto small = build_augmented_input(ex.state(), vocab, 20);
  CHECK(small.input.size() <= 20);
  CHECK_THROWS_AS(build_augmented_input(ex.state(), vocab, 6), input_error);
}

TEST_CASE("gold answer spans", "[bertqa]") {
  auto yes = synthetic_example(3);
  auto vocab = build_vocabulary({yes});
  auto a = build_augmented_input(yes.state(), vocab);
  REQUIRE(gold_answer_span(a, yes));
  CHECK(*gold_answer_span(a, yes) == std::make_pair(a.label_positions[0], a.label_positions[0]));

  auto ask = synthetic_example(1);  // asks "Are you a UK resident?"
  auto b = build_augmented_input(ask.state(), vocab);
  auto g = gold_answer_span(b, ask);
  REQUIRE(g);
  std::vector<std::string> words(b.input.tokens.begin() + static_cast<std::ptrdiff_t>(g->first),
                                 b.input.tokens.begin() + static_cast<std::ptrdiff_t>(g->second + 1));
  CHECK(join_tokens(words) == "uk resident");
}

TEST_CASE("decoding spans into moves", "[bertqa]") {
  auto ex = synthetic_example(1);
  auto vocab = build_vocabulary({ex});
  auto a = build_augmented_input(ex.state(), vocab);
  CHECK(bertqa_model<float>::decode_span(a, ex.state(), a.label_positions[1], a.label_positions[1]).label ==
        decision::no);
  CHECK(bertqa_model<float>::decode_span(a, ex.state(), a.label_positions[2], a.label_positions[2] + 1).label ==
        decision::irrelevant);
  auto g = gold_answer_span(a, ex);
  auto m = bertqa_model<float>::decode_span(a, ex.state(), g->first, g->second);
  CHECK(m.label == decision::inquire);
  CHECK(m.question == "UK resident");
}

TEST_CASE("baseline scores are distributions", "[bertqa]") {
  auto ex = synthetic_example(0);
  auto vocab = build_vocabulary({ex});
  rng_t rng(1);
  bertqa_model<float> m(tiny_encoder(vocab.size()), rng, 128);
  auto [ls, le] = m.logits(m.augment(ex.state(), vocab), false, rng);
  for (const auto& l : {ls, le}) {
    auto p = softmax(l, 0);
    double s = 0;
    for (auto x : p.values()) s += x;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  auto out = m.predict(ex.state(), vocab);
  CHECK(out.start <= out.end);
}

TEST_CASE("baseline training lowers the loss and checkpoints round-trip", "[bertqa]") {
  auto raw = parse_dataset(synthetic_corpus()).examples;
  auto vocab = build_vocabulary(raw);
  rng_t rng(2);
  bertqa_model<float> m(tiny_encoder(vocab.size()), rng, 128);
  train_config cfg;
  cfg.learning_rate = 3e-3;
  cfg.max_steps = 60;
  cfg.eval_interval = 30;
  cfg.patience = 10;
  auto s = train_bertqa(m, vocab, raw, raw, cfg);
  REQUIRE(s.losses.size() == 60);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += s.losses[i].total;
    last += s.losses[50 + i].total;
  }
  CHECK(last < first);

  auto path = std::filesystem::temp_directory_path() / "e3_bertqa_roundtrip.ckpt";
  save_bertqa(path, m, vocab);
  auto loaded = load_bertqa<float>(path, vocab);
  prediction_map p1, p2;
  auto r1 = evaluate_bertqa(m, vocab, raw, &p1);
  auto r2 = evaluate_bertqa(loaded, vocab, raw, &p2);
  CHECK(p1 == p2);
  CHECK(r1.micro == r2.micro);
  CHECK(r1.bleu4 == r2.bleu4);
  vocabulary other = vocab;
  other.insert("unseen-token");
  CHECK_THROWS_AS(load_bertqa<float>(path, other), checkpoint_error);
  std::filesystem::remove(path);
}
