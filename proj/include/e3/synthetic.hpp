#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace e3 {

/// A small eligibility corpus in ShARC layout. Each topic is a bulleted rule
/// text with three rules; its dialogues cover asking, concluding yes or no,
/// scenarios that already settle some rules, and an off-topic question.
inline nlohmann::json synthetic_corpus() {
  struct rule {
    std::string text;
    std::string question;
    std::string statement;
  };
  struct topic {
    std::string name;
    std::vector<rule> rules;
  };
  const std::vector<topic> topics{
      {"Winter Fuel Payment",
       {{"over 60", "Are you over 60?", "I am over 60"},
        {"a UK resident", "Are you a UK resident?", "I am a UK resident"},
        {"getting a State Pension", "Are you getting a State Pension?", "I am getting a State Pension"}}},
      {"Carer's Allowance",
       {{"caring for someone 35 hours a week", "Are you caring for someone 35 hours a week?",
         "I spend 35 hours a week caring for someone"},
        {"aged 16 or over", "Are you aged 16 or over?", "I am aged 16 or over"},
        {"earning less than 128 pounds", "Are you earning less than 128 pounds?",
         "I am earning less than 128 pounds"}}},
      {"Cold Weather Payment",
       {{"receiving Pension Credit", "Are you receiving Pension Credit?", "I am receiving Pension Credit"},
        {"living in England or Wales", "Are you living in England or Wales?", "I am living in England or Wales"},
        {"responsible for a child under 5", "Are you responsible for a child under 5?",
         "I am responsible for a child under 5"}}},
      {"Blue Badge",
       {{"registered blind", "Are you registered blind?", "I am registered blind"},
        {"unable to walk far", "Are you unable to walk far?", "I am unable to walk far"},
        {"a driver with a severe disability", "Are you a driver with a severe disability?",
         "I am a driver with a severe disability"}}},
  };

  nlohmann::json out = nlohmann::json::array();
  for (std::size_t t = 0; t < topics.size(); ++t) {
    const auto& tp = topics[t];
    std::string snippet = "# " + tp.name + "\n\nYou can get " + tp.name + " if you are:\n";
    for (const auto& r : tp.rules) snippet += "\n* " + r.text;
    const std::string question = "Can I get " + tp.name + "?";
    const std::string tree = "synthetic-" + std::to_string(t);
    std::size_t k = 0;
    auto add = [&](const std::string& q, const std::string& scenario, const std::vector<std::pair<std::size_t, bool>>& turns,
                   const std::string& answer) {
      nlohmann::json history = nlohmann::json::array();
      for (auto [ri, yes] : turns)
        history.push_back({{"follow_up_question", tp.rules[ri].question}, {"follow_up_answer", yes ? "Yes" : "No"}});
      out.push_back({{"utterance_id", tree + "-" + std::to_string(k++)},
                     {"tree_id", tree},
                     {"source_url", "synthetic"},
                     {"snippet", snippet},
                     {"question", q},
                     {"scenario", scenario},
                     {"history", history},
                     {"evidence", nlohmann::json::array()},
                     {"answer", answer}});
    };
    const auto& r = tp.rules;
    add(question, "", {}, r[0].question);
    add(question, "", {{0, true}}, r[1].question);
    add(question, "", {{0, true}, {1, true}}, r[2].question);
    add(question, "", {{0, true}, {1, true}, {2, true}}, "Yes");
    add(question, "", {{0, true}, {1, false}}, "No");
    add(question, r[0].statement + ".", {}, r[1].question);
    add(question, r[0].statement + ", " + r[1].statement + " and " + r[2].statement + ".", {}, "Yes");
    const auto& other = topics[(t + 1) % topics.size()];
    add("Can I get " + other.name + "?", "", {}, "Irrelevant");
  }
  return out;
}

}  // namespace e3
