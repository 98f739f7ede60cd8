#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/labels.hpp"
#include "e3/lexicon.hpp"
#include "e3/text.hpp"

namespace e3 {

class dataset_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- records

/// One ShARC utterance.
struct raw_example {
  std::string utterance_id;
  std::string tree_id;
  std::string snippet;
  std::string question;
  std::string scenario;
  std::vector<dialogue_turn> history;
  std::string answer;

  decision gold_decision() const { return classify_answer(answer); }

  std::optional<std::string> gold_question() const {
    if (gold_decision() == decision::inquire) return answer;
    return std::nullopt;
  }

  dialogue_state state() const { return {snippet, question, scenario, history}; }
};

struct parse_result {
  std::vector<raw_example> examples;
  std::vector<std::string> warnings;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& record, const char* field, std::size_t index) {
  if (!record.is_object()) throw dataset_error("record " + std::to_string(index) + " is not an object");
  auto it = record.find(field);
  if (it == record.end() || it->is_null())
    throw dataset_error("record " + std::to_string(index) + " is missing field '" + field + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& record, const char* field, std::size_t index) {
  const auto& v = require_field(record, field, index);
  if (!v.is_string())
    throw dataset_error("record " + std::to_string(index) + " field '" + field + "' is not a string");
  return v.get<std::string>();
}

}  // namespace detail

/// Parses a JSON array of ShARC records. Unknown fields are ignored;
/// duplicate utterance ids are kept and reported as warnings.
inline parse_result parse_dataset(const nlohmann::json& doc) {
  if (!doc.is_array()) throw dataset_error("dataset must be a JSON array of records");
  parse_result out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    raw_example ex;
    ex.utterance_id = detail::require_string(rec, "utterance_id", i);
    ex.tree_id = detail::require_string(rec, "tree_id", i);
    if (ex.tree_id.empty()) throw dataset_error("record " + std::to_string(i) + " has an empty tree_id");
    ex.snippet = detail::require_string(rec, "snippet", i);
    ex.question = detail::require_string(rec, "question", i);
    ex.scenario = detail::require_string(rec, "scenario", i);
    ex.answer = detail::require_string(rec, "answer", i);
    const auto& hist = detail::require_field(rec, "history", i);
    if (!hist.is_array())
      throw dataset_error("record " + std::to_string(i) + " field 'history' is not an array");
    for (std::size_t k = 0; k < hist.size(); ++k) {
      const auto& turn = hist[k];
      dialogue_turn t;
      t.inquiry = detail::require_string(turn, "follow_up_question", i);
      t.answer = detail::require_string(turn, "follow_up_answer", i);
      const auto a = classify_answer(t.answer);
      if (a != decision::yes && a != decision::no)
        throw dataset_error("record " + std::to_string(i) + " history turn " + std::to_string(k) +
                            " answer is not Yes/No");
      ex.history.push_back(std::move(t));
    }
    if (!seen.insert(ex.utterance_id).second)
      out.warnings.push_back("duplicate utterance_id '" + ex.utterance_id + "' at record " + std::to_string(i));
    out.examples.push_back(std::move(ex));
  }
  return out;
}

inline parse_result parse_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw dataset_error("cannot open dataset: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw dataset_error("invalid JSON in " + path.string() + ": " + e.what());
  }
  return parse_dataset(doc);
}

inline nlohmann::json to_json(const raw_example& ex) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& t : ex.history) hist.push_back({{"follow_up_question", t.inquiry}, {"follow_up_answer", t.answer}});
  return {{"utterance_id", ex.utterance_id}, {"tree_id", ex.tree_id}, {"snippet", ex.snippet},
          {"question", ex.question},         {"scenario", ex.scenario}, {"history", hist},
          {"answer", ex.answer}};
}

// ---------------------------------------------------------------- dialogue trees

struct dialogue_tree {
  std::string tree_id;
  std::string snippet;
  std::string question;
  // Every follow-up question seen in the tree, by first appearance.
  std::vector<std::string> follow_ups;
};

/// One tree per tree_id, ordered by tree_id.
inline std::vector<dialogue_tree> reconstruct_trees(const std::vector<raw_example>& examples) {
  std::map<std::string, dialogue_tree> trees;
  std::map<std::string, std::unordered_set<std::string>> seen;
  for (const auto& ex : examples) {
    auto [it, fresh] = trees.try_emplace(ex.tree_id);
    auto& tree = it->second;
    if (fresh) {
      tree.tree_id = ex.tree_id;
      tree.snippet = ex.snippet;
      tree.question = ex.question;
    }
    auto& known = seen[ex.tree_id];
    auto note = [&](const std::string& q) {
      if (known.insert(q).second) tree.follow_ups.push_back(q);
    };
    for (const auto& t : ex.history) note(t.inquiry);
    if (auto q = ex.gold_question()) note(*q);
  }
  std::vector<dialogue_tree> out;
  for (auto& [_, t] : trees) out.push_back(std::move(t));
  return out;
}

// ---------------------------------------------------------------- span matching

/// Character-level Levenshtein distance.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Drops punctuation and stop words.
inline std::vector<std::string> trim_clause(const std::vector<std::string>& tokens,
                                            const stop_word_list& stop_words = stop_word_list::builtin()) {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (is_punctuation_token(t) || stop_words.contains(t)) continue;
    out.push_back(t);
  }
  return out;
}

struct span_match {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::size_t distance = 0;
  bool operator==(const span_match&) const = default;
};

/// Shortest best-match span of `snippet` for a trimmed clause.
///
/// Minimizes the edit distance between the space-joined span tokens and the
/// space-joined clause; ties go to the shorter span, then the earlier start.
/// Spans that begin or end on a punctuation token are not candidates.
/// Returns nullopt for an empty clause.
inline std::optional<span_match> match_span(const std::vector<std::string>& snippet,
                                            const std::vector<std::string>& clause) {
  if (clause.empty() || snippet.empty()) return std::nullopt;
  const std::string target = join_tokens(clause);
  const std::size_t m = target.size();
  std::optional<span_match> best;
  auto better = [&](const span_match& c) {
    if (!best) return true;
    if (c.distance != best->distance) return c.distance < best->distance;
    const auto lc = c.end - c.start, lb = best->end - best->start;
    if (lc != lb) return lc < lb;
    return c.start < best->start;
  };
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t s = 0; s < snippet.size(); ++s) {
    if (is_punctuation_token(snippet[s])) continue;
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    std::size_t chars = 0;
    for (std::size_t e = s; e < snippet.size(); ++e) {
      auto feed = [&](char ch) {
        ++chars;
        cur[0] = chars;
        for (std::size_t j = 1; j <= m; ++j)
          cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ch == target[j - 1] ? 0u : 1u)});
        std::swap(prev, cur);
      };
      if (e > s) feed(' ');
      for (char ch : snippet[e]) feed(ch);
      // distance >= length difference, which only grows from here
      if (best && chars > m && chars - m > best->distance) break;
      if (is_punctuation_token(snippet[e])) continue;
      span_match cand{s, e, prev[m]};
      if (better(cand)) best = cand;
    }
  }
  return best;
}

// ---------------------------------------------------------------- supervision

enum class span_source { matched_clause, bullet };

inline std::string_view to_string(span_source s) {
  return s == span_source::bullet ? "bullet" : "matched-clause";
}

struct supervised_span {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive token index
  std::string text;
  span_source source = span_source::matched_clause;
};

struct supervised_span_set {
  std::string tree_id;
  std::vector<supervised_span> spans;
};

/// Source text of tokens [start, end] (inclusive).
inline std::string span_text(std::string_view source, const token_sequence& tokens, std::size_t start,
                             std::size_t end) {
  const auto b = tokens.offsets.at(start).first;
  const auto e = tokens.offsets.at(end).second;
  return std::string(source.substr(b, e - b));
}

/// Token spans of bullet points: text after a '*' up to the next '*' or
/// newline, with edge punctuation removed.
inline std::vector<std::pair<std::size_t, std::size_t>> bullet_spans(std::string_view snippet,
                                                                     const token_sequence& tokens) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = snippet.find('*'); p != std::string_view::npos; p = snippet.find('*', p + 1)) {
    auto stop = snippet.find_first_of("*\n", p + 1);
    if (stop == std::string_view::npos) stop = snippet.size();
    std::size_t first = tokens.size(), last = 0;
    bool any = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens.offsets[i].first > p && tokens.offsets[i].second <= stop) {
        if (!any) first = i;
        last = i;
        any = true;
      }
    }
    if (!any) continue;
    while (first <= last && is_punctuation_token(tokens.tokens[first])) ++first;
    while (last > first && is_punctuation_token(tokens.tokens[last])) --last;
    if (first > last || is_punctuation_token(tokens.tokens[first])) continue;
    out.emplace_back(first, last);
  }
  return out;
}

/// Removes spans fully covered by a longer span and exact duplicates (first
/// kept); result ordered by (start, end).
template <class Span>
std::vector<Span> remove_nested(const std::vector<Span>& spans) {
  std::vector<Span> kept;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    bool drop = false;
    for (std::size_t j = 0; j < spans.size() && !drop; ++j) {
      if (i == j) continue;
      const auto& a = spans[i];
      const auto& b = spans[j];
      const bool covered = b.start <= a.start && a.end <= b.end;
      const bool same = b.start == a.start && b.end == a.end;
      drop = covered && (!same || j < i);
    }
    if (!drop) kept.push_back(spans[i]);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Span& a, const Span& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  return kept;
}

/// Noisy rule-span supervision for one dialogue tree: best-match spans of the
/// trimmed follow-up questions plus bullet spans, with nested spans removed.
inline supervised_span_set build_supervision(const dialogue_tree& tree,
                                             const stop_word_list& stop_words = stop_word_list::builtin()) {
  const auto tokens = tokenize(tree.snippet);
  std::vector<supervised_span> spans;
  for (const auto& q : tree.follow_ups) {
    const auto clause = trim_clause(tokenize(q).tokens, stop_words);
    if (auto m = match_span(tokens.tokens, clause))
      spans.push_back({m->start, m->end, span_text(tree.snippet, tokens, m->start, m->end), span_source::matched_clause});
  }
  for (auto [s, e] : bullet_spans(tree.snippet, tokens))
    spans.push_back({s, e, span_text(tree.snippet, tokens, s, e), span_source::bullet});
  return {tree.tree_id, remove_nested(spans)};
}

/// Supervision for every tree of a parsed dataset, keyed by tree id.
inline std::map<std::string, supervised_span_set> build_all_supervision(
    const std::vector<raw_example>& examples, const stop_word_list& stop_words = stop_word_list::builtin()) {
  std::map<std::string, supervised_span_set> out;
  for (const auto& tree : reconstruct_trees(examples)) out.emplace(tree.tree_id, build_supervision(tree, stop_words));
  return out;
}

inline nlohmann::json to_json(const std::vector<supervised_span_set>& sets) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& set : sets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : set.spans)
      arr.push_back({{"start", s.start}, {"end", s.end}, {"text", s.text}, {"source", to_string(s.source)}});
    out[set.tree_id] = std::move(arr);
  }
  return out;
}

inline std::map<std::string, supervised_span_set> supervision_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw dataset_error("supervision file must be a JSON object keyed by tree_id");
  std::map<std::string, supervised_span_set> out;
  for (const auto& [tree_id, arr] : doc.items()) {
    supervised_span_set set{tree_id, {}};
    for (const auto& s : arr) {
      supervised_span span;
      span.start = s.at("start").get<std::size_t>();
      span.end = s.at("end").get<std::size_t>();
      span.text = s.at("text").get<std::string>();
      span.source = s.at("source").get<std::string>() == "bullet" ? span_source::bullet : span_source::matched_clause;
      set.spans.push_back(std::move(span));
    }
    out.emplace(tree_id, std::move(set));
  }
  return out;
}

}  // namespace e3
