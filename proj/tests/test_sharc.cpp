#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "e3/sharc.hpp"
#include "e3/synthetic.hpp"
#include "oracles.hpp"

using namespace e3;
using strings = std::vector<std::string>;

namespace {

const std::string fig1_snippet =
    "If you're not a UK resident, you don't usually pay UK tax on your pension. But you might have to pay "
    "tax in the country you live in. There are a few exceptions - for example, UK civil service pensions "
    "will always be taxed in the UK.";

nlohmann::json record(const std::string& uid, const std::string& tree, nlohmann::json history,
                      const std::string& answer) {
  return {{"utterance_id", uid}, {"tree_id", tree},   {"snippet", "* savings\n* income"},
          {"question", "Can I claim?"}, {"scenario", ""}, {"history", std::move(history)},
          {"answer", answer},   {"evidence", nlohmann::json::array()}};
}

nlohmann::json turn(const std::string& q, const std::string& a) {
  return {{"follow_up_question", q}, {"follow_up_answer", a}};
}

}  // namespace

TEST_CASE("parse_dataset reads records and classifies answers", "[sharc]") {
  nlohmann::json doc = nlohmann::json::array({
      record("u1", "t1", nlohmann::json::array(), "Yes"),
      record("u2", "t1", nlohmann::json::array({turn("Do you have savings?", "No")}), "Do you have income?"),
      record("u1", "t2", nlohmann::json::array(), "Irrelevant"),
  });
  auto r = parse_dataset(doc);
  REQUIRE(r.examples.size() == 3);
  CHECK(r.examples[0].history.empty());
  CHECK(r.examples[0].gold_decision() == decision::yes);
  CHECK(r.examples[1].gold_decision() == decision::inquire);
  CHECK(r.examples[1].gold_question() == "Do you have income?");
  CHECK(r.examples[2].gold_decision() == decision::irrelevant);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("u1") != std::string::npos);
}

TEST_CASE("malformed records name the index and the field", "[sharc]") {
  auto bad = record("u1", "t1", nlohmann::json::array(), "Yes");
  bad.erase("scenario");
  nlohmann::json doc = nlohmann::json::array({record("u0", "t0", nlohmann::json::array(), "No"), bad});
  try {
    parse_dataset(doc);
    FAIL("expected dataset_error");
  } catch (const dataset_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("record 1") != std::string::npos);
    CHECK(msg.find("scenario") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dataset(nlohmann::json::object()), dataset_error);
  CHECK_THROWS_AS(parse_dataset(std::filesystem::path("/nonexistent/file.json")), dataset_error);
}

TEST_CASE("reconstruct_trees unions follow-up questions per tree", "[sharc]") {
  nlohmann::json doc = nlohmann::json::array({
      record("a", "t1", nlohmann::json::array({turn("q1", "Yes")}), "Yes"),
      record("b", "t1", nlohmann::json::array({turn("q1", "Yes"), turn("q2", "No")}), "No"),
      record("c", "t2", nlohmann::json::array(), "Do you have savings?"),
  });
  auto trees = reconstruct_trees(parse_dataset(doc).examples);
  REQUIRE(trees.size() == 2);
  CHECK(trees[0].tree_id == "t1");
  CHECK(trees[0].follow_ups == strings{"q1", "q2"});
  CHECK(trees[1].tree_id == "t2");
  CHECK(trees[1].follow_ups == strings{"Do you have savings?"});
}

TEST_CASE("match_span examples", "[sharc]") {
  const auto snippet = tokenize("you must be a uk resident to qualify").tokens;
  auto exact = match_span(snippet, {"uk", "resident"});
  REQUIRE(exact);
  CHECK(exact->start == 4);
  CHECK(exact->end == 5);
  CHECK(exact->distance == 0);

  auto near = match_span(snippet, {"uk", "residents"});
  REQUIRE(near);
  CHECK(near->start == 4);
  CHECK(near->end == 5);
  CHECK(near->distance == 1);
  CHECK(*near == *testing::brute_force_match(snippet, {"uk", "residents"}));

  auto whole = match_span(snippet, snippet);
  REQUIRE(whole);
  CHECK(whole->start == 0);
  CHECK(whole->end == snippet.size() - 1);

  CHECK_FALSE(match_span(snippet, {}));
}

TEST_CASE("trim_clause removes stop words and punctuation", "[sharc]") {
  CHECK(trim_clause(tokenize("Are you a UK resident?").tokens) == strings{"uk", "resident"});
  CHECK(trim_clause(tokenize("Is it?").tokens).empty());
}

TEST_CASE("match_span equals exhaustive search on random cases", "[sharc][oracle]") {
  std::mt19937_64 rng(2024);
  const auto mismatches = testing::match_span_mismatches(100, rng);
  CHECK(mismatches == 0);
}

TEST_CASE("bullet heuristic and containment dedup", "[sharc]") {
  dialogue_tree tree{"t", "* savings\n* income", "q", {}};
  auto set = build_supervision(tree);
  REQUIRE(set.spans.size() == 2);
  CHECK(set.spans[0].text == "savings");
  CHECK(set.spans[1].text == "income");
  CHECK(set.spans[0].source == span_source::bullet);

  struct s { std::size_t start, end; };
  auto kept = remove_nested(std::vector<s>{{2, 6}, {3, 5}});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].start == 2);

  auto overlap = remove_nested(std::vector<s>{{2, 5}, {4, 7}, {4, 7}});
  CHECK(overlap.size() == 2);
}

TEST_CASE("supervision spans on the pension example", "[sharc]") {
  dialogue_tree tree{"fig1", fig1_snippet, "Do I need to pay UK tax on my pension?",
                     {"Are you a UK resident?", "Is it a UK civil service pension?"}};
  auto set = build_supervision(tree);
  strings texts;
  for (const auto& s : set.spans) texts.push_back(s.text);
  CHECK(texts == strings{"UK resident", "UK civil service pensions"});
}

TEST_CASE("supervision is nest-free and deterministic on random trees", "[sharc][property]") {
  std::mt19937_64 rng(77);
  const strings words{"you", "must", "be", "a", "uk", "resident", "savings", "income", "over", "60", "*", "\n", ","};
  for (int trial = 0; trial < 50; ++trial) {
    std::string snippet;
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    for (int i = 0; i < 25; ++i) snippet += words[pick(rng)] + " ";
    dialogue_tree tree{"t", snippet, "q", {"Are you a uk resident?", "Do you have savings?", "over 60?"}};
    auto a = build_supervision(tree);
    auto b = build_supervision(tree);
    REQUIRE(a.spans.size() == b.spans.size());
    for (std::size_t i = 0; i < a.spans.size(); ++i) {
      CHECK(a.spans[i].start == b.spans[i].start);
      CHECK(a.spans[i].end == b.spans[i].end);
      for (std::size_t j = 0; j < a.spans.size(); ++j) {
        if (i == j) continue;
        const bool nested = a.spans[j].start <= a.spans[i].start && a.spans[i].end <= a.spans[j].end;
        CHECK_FALSE(nested);
      }
    }
  }
}

TEST_CASE("supervision JSON round trip", "[sharc]") {
  dialogue_tree tree{"t9", "* savings\n* income", "q", {"Do you have savings?"}};
  std::vector<supervised_span_set> sets{build_supervision(tree)};
  auto back = supervision_from_json(to_json(sets));
  REQUIRE(back.count("t9"));
  CHECK(back.at("t9").spans.size() == sets[0].spans.size());
  CHECK(to_json(sets)["t9"][0]["source"] == "matched-clause");
  CHECK(to_json(sets)["t9"][1]["source"] == "bullet");
}

TEST_CASE("bundled synthetic corpus matches the generator", "[sharc]") {
  std::ifstream is(std::filesystem::path(E3_SOURCE_DIR) / "data" / "synthetic_sharc.json");
  REQUIRE(is);
  CHECK(nlohmann::json::parse(is) == synthetic_corpus());
  auto r = parse_dataset(synthetic_corpus());
  CHECK(r.examples.size() == 32);
  CHECK(r.warnings.empty());
}
