#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/labels.hpp"
#include "e3/text.hpp"

namespace e3 {

using confusion_matrix = std::array<std::array<std::size_t, decision_count>, decision_count>;

struct classification_report {
  double micro = 0.0;  // percent
  double macro = 0.0;  // percent
  confusion_matrix confusion{};  // [gold][predicted]
};

/// Micro accuracy and the mean of per-class recall over classes that occur
/// in the gold labels.
inline classification_report classification_metrics(const std::vector<decision>& gold,
                                                    const std::vector<decision>& pred) {
  if (gold.size() != pred.size()) throw std::invalid_argument("classification_metrics: length mismatch");
  if (gold.empty()) throw std::invalid_argument("classification_metrics: empty input");
  classification_report r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++r.confusion[index_of(gold[i])][index_of(pred[i])];
    correct += gold[i] == pred[i];
  }
  r.micro = 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < decision_count; ++k) {
    std::size_t row = 0;
    for (auto c : r.confusion[k]) row += c;
    if (row == 0) continue;
    sum += static_cast<double>(r.confusion[k][k]) / static_cast<double>(row);
    ++present;
  }
  r.macro = 100.0 * sum / static_cast<double>(present);
  return r;
}

/// Corpus BLEU in percent over whitespace-and-punctuation tokens, with
/// modified n-gram precision, brevity penalty and 1e-9 smoothing of empty
/// match counts.
inline double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                   std::size_t max_n = 4) {
  if (candidates.size() != references.size()) throw std::invalid_argument("bleu: length mismatch");
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be positive");
  std::vector<double> matches(max_n, 0.0), totals(max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    const auto c = tokenize(candidates[p]).tokens;
    const auto r = tokenize(references[p]).tokens;
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, std::size_t> ref_counts, cand_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + i, r.begin() + i + n}];
      for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[{c.begin() + i, c.begin() + i + n}];
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += static_cast<double>(std::min(count, it->second));
        totals[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (totals[n] == 0.0) return 0.0;
    const double m = matches[n] > 0.0 ? matches[n] : 1e-9;
    log_sum += std::log(m / totals[n]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(max_n));
}

/// Macro accuracy (as a fraction) times BLEU4.
inline double combined(double macro_pct, double bleu4_pct) { return macro_pct / 100.0 * bleu4_pct; }

struct eval_report {
  double micro = 0.0;
  double macro = 0.0;
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double combined = 0.0;
  confusion_matrix confusion{};
  std::size_t inquiries = 0;  // gold follow-up questions scored by BLEU
};

/// One scored turn: gold and predicted move.
struct scored_turn {
  decision gold = decision::yes;
  std::string gold_question;
  decision pred = decision::yes;
  std::string pred_question;
};

/// Full report. BLEU covers turns whose gold move is a question; when the
/// model did not inquire there, its decision label stands in as the
/// candidate text.
inline eval_report evaluate_turns(const std::vector<scored_turn>& turns) {
  std::vector<decision> g, p;
  std::vector<std::string> cands, refs;
  for (const auto& t : turns) {
    g.push_back(t.gold);
    p.push_back(t.pred);
    if (t.gold == decision::inquire) {
      refs.push_back(t.gold_question);
      cands.push_back(t.pred == decision::inquire ? t.pred_question : std::string(to_string(t.pred)));
    }
  }
  const auto cls = classification_metrics(g, p);
  eval_report r;
  r.micro = cls.micro;
  r.macro = cls.macro;
  r.confusion = cls.confusion;
  r.inquiries = refs.size();
  if (!refs.empty()) {
    r.bleu1 = bleu(cands, refs, 1);
    r.bleu4 = bleu(cands, refs, 4);
  }
  r.combined = combined(r.macro, r.bleu4);
  return r;
}

inline nlohmann::json to_json(const eval_report& r) {
  nlohmann::json conf = nlohmann::json::object();
  for (auto gd : all_decisions) {
    nlohmann::json row = nlohmann::json::object();
    for (auto pd : all_decisions) row[std::string(to_string(pd))] = r.confusion[index_of(gd)][index_of(pd)];
    conf[std::string(to_string(gd))] = row;
  }
  return {{"micro_acc", r.micro}, {"macro_acc", r.macro}, {"bleu1", r.bleu1},     {"bleu4", r.bleu4},
          {"combined", r.combined}, {"inquiries", r.inquiries}, {"confusion", conf}};
}

/// Plain-text table for terminals.
inline std::string format_report(const eval_report& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "micro accuracy  " << std::setw(7) << r.micro << "\n";
  os << "macro accuracy  " << std::setw(7) << r.macro << "\n";
  os << "BLEU1           " << std::setw(7) << r.bleu1 << "\n";
  os << "BLEU4           " << std::setw(7) << r.bleu4 << "\n";
  os << "combined        " << std::setw(7) << r.combined << "\n\n";
  os << "gold \\ pred ";
  for (auto d : all_decisions) os << std::setw(11) << to_string(d);
  os << "\n";
  for (auto gd : all_decisions) {
    os << std::setw(11) << to_string(gd) << " ";
    for (auto pd : all_decisions) os << std::setw(11) << r.confusion[index_of(gd)][index_of(pd)];
    os << "\n";
  }
  return os.str();
}

}  // namespace e3
