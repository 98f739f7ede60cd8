#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace e3 {

// ---------------------------------------------------------------- tokens

struct token_sequence {
  std::vector<std::string> tokens;
  // [begin, end) byte offsets of each token in the source string.
  std::vector<std::pair<std::size_t, std::size_t>> offsets;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

inline bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
inline bool is_ascii_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

inline bool is_punctuation_token(std::string_view tok) {
  return tok.size() == 1 && is_ascii_punct(static_cast<unsigned char>(tok[0]));
}

/// Lowercases ASCII letters, splits on whitespace, and emits every ASCII
/// punctuation character as its own token. Bytes >= 0x80 are word characters.
inline token_sequence tokenize(std::string_view text) {
  token_sequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_ascii_space(c)) {
      ++i;
      continue;
    }
    if (is_ascii_punct(c)) {
      out.tokens.emplace_back(1, static_cast<char>(c));
      out.offsets.emplace_back(i, i + 1);
      ++i;
      continue;
    }
    const std::size_t begin = i;
    std::string tok;
    while (i < text.size()) {
      const auto d = static_cast<unsigned char>(text[i]);
      if (is_ascii_space(d) || is_ascii_punct(d)) break;
      tok.push_back(d < 0x80 ? static_cast<char>(std::tolower(d)) : static_cast<char>(d));
      ++i;
    }
    out.tokens.push_back(std::move(tok));
    out.offsets.emplace_back(begin, i);
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end,
                               char sep = ' ') {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out.push_back(sep);
    out += tokens[i];
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  return join_tokens(tokens, 0, tokens.size());
}

/// Space-joins tokens, re-attaching closing punctuation to the previous token,
/// opening brackets to the next, and joiners (' - /) to both neighbours.
inline std::string detokenize(const std::vector<std::string>& tokens) {
  static const std::string closing = ".,?!;:)]}%";
  static const std::string opening = "([{$";
  static const std::string joiners = "'-/";
  std::string out;
  bool glue_next = true;
  for (const auto& tok : tokens) {
    const bool punct = is_punctuation_token(tok);
    const char c = punct ? tok[0] : '\0';
    const bool attach_left = punct && (closing.find(c) != std::string::npos || joiners.find(c) != std::string::npos);
    if (!glue_next && !attach_left) out.push_back(' ');
    out += tok;
    glue_next = punct && (opening.find(c) != std::string::npos || joiners.find(c) != std::string::npos);
  }
  return out;
}

// ---------------------------------------------------------------- vocabulary

class vocabulary_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense token <-> id map. Ids 0..5 are reserved sentinels.
class vocabulary {
 public:
  static constexpr int pad = 0;
  static constexpr int unk = 1;
  static constexpr int cls = 2;
  static constexpr int sep = 3;
  static constexpr int bos = 4;
  static constexpr int eos = 5;

  static const std::vector<std::string>& reserved() {
    static const std::vector<std::string> r{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"};
    return r;
  }

  vocabulary() {
    for (const auto& r : reserved()) insert(r);
  }

  /// Adds every token (minimum frequency 1) in first-seen order.
  template <class Range>
  void add_all(const Range& tokens) {
    for (const auto& t : tokens) insert(t);
  }

  int insert(const std::string& token) {
    auto [it, fresh] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (fresh) tokens_.push_back(token);
    return it->second;
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? unk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  /// FNV-1a over the newline-joined token list, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : tokens_) {
      for (unsigned char c : t) {
        h ^= c;
        h *= 0x100000001b3ull;
      }
      h ^= '\n';
      h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw vocabulary_error("cannot write vocabulary: " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  static vocabulary load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw vocabulary_error("cannot read vocabulary: " + path.string());
    vocabulary v;
    v.tokens_.clear();
    v.ids_.clear();
    std::string line;
    while (std::getline(is, line)) {
      if (v.ids_.count(line)) throw vocabulary_error("duplicate vocabulary entry: " + line);
      v.insert(line);
    }
    const auto& r = reserved();
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i >= v.tokens_.size() || v.tokens_[i] != r[i])
        throw vocabulary_error("vocabulary file does not start with reserved tokens: " + path.string());
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// ---------------------------------------------------------------- dialogue input

struct dialogue_turn {
  std::string inquiry;
  std::string answer;
  bool operator==(const dialogue_turn&) const = default;
};

/// Everything the model reads for one turn.
struct dialogue_state {
  std::string snippet;
  std::string question;
  std::string scenario;
  std::vector<dialogue_turn> history;
  bool operator==(const dialogue_state&) const = default;
};

enum class segment : int { question = 0, document = 1, scenario = 2, history = 3 };

struct assemble_options {
  std::size_t max_length = 512;
  // History turn i gets segment 3+i, capped here.
  int max_segment = 15;
};

struct assembled_input {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::vector<std::string> tokens;
  // Half-open [first, second) token range of the document part.
  std::pair<std::size_t, std::size_t> document_range{0, 0};
  // History turns that survived truncation (the most recent ones).
  std::size_t history_turns_kept = 0;

  std::size_t size() const { return token_ids.size(); }
  bool operator==(const assembled_input&) const = default;
};

class input_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Layout: [CLS] question [SEP] document [SEP] scenario [SEP]
///         (inquiry_i answer_i [SEP])* for history turns oldest-first.
///
/// When over `max_length`, whole history turns are dropped oldest-first, then
/// the scenario, the document, and finally the question are cut from the tail.
inline assembled_input assemble_input(const dialogue_state& state, const vocabulary& vocab,
                                      const assemble_options& options = {}) {
  auto question = tokenize(state.question).tokens;
  auto document = tokenize(state.snippet).tokens;
  auto scenario = tokenize(state.scenario).tokens;
  if (document.empty()) throw input_error("rule text must not be empty");

  std::vector<std::vector<std::string>> turns;
  for (const auto& t : state.history) {
    auto q = tokenize(t.inquiry).tokens;
    auto a = tokenize(t.answer).tokens;
    q.insert(q.end(), a.begin(), a.end());
    turns.push_back(std::move(q));
  }

  auto total = [&] {
    std::size_t n = 4 + question.size() + document.size() + scenario.size();
    for (const auto& t : turns) n += t.size() + 1;
    return n;
  };
  while (total() > options.max_length && !turns.empty()) turns.erase(turns.begin());
  for (auto* part : {&scenario, &document, &question}) {
    while (total() > options.max_length && !part->empty()) part->pop_back();
  }
  if (total() > options.max_length) throw input_error("max_length too small for the sentinel layout");

  assembled_input out;
  auto push = [&](const std::string& tok, int id, int seg) {
    out.position_ids.push_back(static_cast<int>(out.token_ids.size()));
    out.token_ids.push_back(id);
    out.segment_ids.push_back(seg);
    out.tokens.push_back(tok);
  };
  auto push_part = [&](const std::vector<std::string>& part, int seg) {
    for (const auto& t : part) push(t, vocab.id(t), seg);
    push(vocabulary::reserved()[vocabulary::sep], vocabulary::sep, seg);
  };
  push(vocabulary::reserved()[vocabulary::cls], vocabulary::cls, static_cast<int>(segment::question));
  push_part(question, static_cast<int>(segment::question));
  out.document_range.first = out.token_ids.size();
  push_part(document, static_cast<int>(segment::document));
  out.document_range.second = out.document_range.first + document.size();
  push_part(scenario, static_cast<int>(segment::scenario));
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const int seg = std::min(static_cast<int>(segment::history) + static_cast<int>(i), options.max_segment);
    push_part(turns[i], seg);
  }
  out.history_turns_kept = turns.size();
  return out;
}

}  // namespace e3
