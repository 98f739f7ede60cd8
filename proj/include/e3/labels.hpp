#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace e3 {

/// Decision classes in score order.
enum class decision { yes = 0, no = 1, irrelevant = 2, inquire = 3 };

inline constexpr std::size_t decision_count = 4;
inline constexpr std::array<decision, decision_count> all_decisions{decision::yes, decision::no,
                                                                    decision::irrelevant, decision::inquire};

inline std::string_view to_string(decision d) {
  switch (d) {
    case decision::yes: return "yes";
    case decision::no: return "no";
    case decision::irrelevant: return "irrelevant";
    case decision::inquire: return "inquire";
  }
  return "?";
}

inline std::size_t index_of(decision d) { return static_cast<std::size_t>(d); }

inline std::string normalize_label(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  return out;
}

/// "Yes"/"No"/"Irrelevant" (any case, surrounding space ignored) map to their
/// class; "inquire" is accepted too. Anything else is nullopt.
inline std::optional<decision> parse_decision(std::string_view s) {
  const auto n = normalize_label(s);
  if (n == "yes") return decision::yes;
  if (n == "no") return decision::no;
  if (n == "irrelevant") return decision::irrelevant;
  if (n == "inquire") return decision::inquire;
  return std::nullopt;
}

/// Gold class of a dataset answer: a follow-up question string is `inquire`.
inline decision classify_answer(std::string_view answer) {
  const auto n = normalize_label(answer);
  if (n == "yes") return decision::yes;
  if (n == "no") return decision::no;
  if (n == "irrelevant") return decision::irrelevant;
  return decision::inquire;
}

}  // namespace e3
