#include "daner/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "daner/error.hpp"

namespace daner {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct Tally {
  std::int64_t gold = 0;
  std::int64_t pred = 0;
  std::int64_t correct = 0;
};

}  // namespace

MetricsReport score(const Dataset& gold, const std::vector<std::vector<std::string>>& pred) {
  if (!gold.labeled)
    fail(ErrorKind::LengthMismatch, "scoring needs a labeled dataset");
  if (pred.size() != gold.sentences.size())
    fail(ErrorKind::LengthMismatch,
         "got " + std::to_string(pred.size()) + " predictions for " +
             std::to_string(gold.sentences.size()) + " sentences");

  Tally overall;
  std::map<std::string, Tally> by_class;
  std::int64_t tokens_total = 0;
  std::int64_t tokens_right = 0;

  for (std::size_t s = 0; s < pred.size(); ++s) {
    const Sentence& sent = gold.sentences[s];
    const std::vector<std::string>& gold_tags = *sent.tags;
    const std::vector<std::string>& pred_tags = pred[s];
    if (pred_tags.size() != gold_tags.size())
      fail(ErrorKind::LengthMismatch,
           "sentence " + std::to_string(s) + ": " + std::to_string(pred_tags.size()) +
               " predicted tags for " + std::to_string(gold_tags.size()) + " tokens");

    tokens_total += static_cast<std::int64_t>(gold_tags.size());
    for (std::size_t i = 0; i < gold_tags.size(); ++i)
      if (gold_tags[i] == pred_tags[i]) ++tokens_right;

    std::vector<EntitySpan> gold_spans = tags_to_spans(gold_tags);
    std::vector<EntitySpan> pred_spans = tags_to_spans(pred_tags);
    std::set<EntitySpan> gold_set(gold_spans.begin(), gold_spans.end());

    for (const EntitySpan& sp : gold_spans) {
      ++overall.gold;
      ++by_class[sp.cls].gold;
    }
    for (const EntitySpan& sp : pred_spans) {
      ++overall.pred;
      Tally& t = by_class[sp.cls];
      ++t.pred;
      if (gold_set.count(sp)) {
        ++overall.correct;
        ++t.correct;
      }
    }
  }

  MetricsReport report;
  report.n_gold = overall.gold;
  report.n_pred = overall.pred;
  report.n_correct = overall.correct;
  report.precision = ratio(overall.correct, overall.pred);
  report.recall = ratio(overall.correct, overall.gold);
  report.f1 = f1_of(report.precision, report.recall);
  report.token_accuracy = ratio(tokens_right, tokens_total);
  for (const auto& [cls, t] : by_class) {
    ClassMetrics m;
    m.precision = ratio(t.correct, t.pred);
    m.recall = ratio(t.correct, t.gold);
    m.f1 = f1_of(m.precision, m.recall);
    m.support = t.gold;
    report.per_class[cls] = m;
  }
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, m] : report.per_class) {
    per_class[cls] = {{"precision", m.precision},
                      {"recall", m.recall},
                      {"f1", m.f1},
                      {"support", m.support}};
  }
  nlohmann::json j = {{"precision", report.precision},
                      {"recall", report.recall},
                      {"f1", report.f1},
                      {"token_accuracy", report.token_accuracy},
                      {"per_class", per_class},
                      {"counts",
                       {{"n_gold", report.n_gold},
                        {"n_pred", report.n_pred},
                        {"n_correct", report.n_correct}}}};
  return j.dump(2) + "\n";
}

std::string metrics_to_table(const MetricsReport& report) {
  std::size_t name_width = 7;  // "overall"
  for (const auto& [cls, m] : report.per_class) name_width = std::max(name_width, cls.size());

  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-*s  %9s  %9s  %9s  %7s\n", static_cast<int>(name_width),
                "class", "precision", "recall", "f1", "support");
  out += line;
  for (const auto& [cls, m] : report.per_class) {
    std::snprintf(line, sizeof line, "%-*s  %9.3f  %9.3f  %9.3f  %7lld\n",
                  static_cast<int>(name_width), cls.c_str(), m.precision, m.recall, m.f1,
                  static_cast<long long>(m.support));
    out += line;
  }
  std::snprintf(line, sizeof line, "%-*s  %9.3f  %9.3f  %9.3f  %7lld\n",
                static_cast<int>(name_width), "overall", report.precision, report.recall,
                report.f1, static_cast<long long>(report.n_gold));
  out += line;
  std::snprintf(line, sizeof line, "token accuracy %.3f  (gold %lld, predicted %lld, correct %lld)\n",
                report.token_accuracy, static_cast<long long>(report.n_gold),
                static_cast<long long>(report.n_pred), static_cast<long long>(report.n_correct));
  out += line;
  return out;
}

}  // namespace daner
