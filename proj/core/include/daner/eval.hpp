#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "daner/corpus.hpp"

namespace daner {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;  // gold spans of this class

  bool operator==(const ClassMetrics&) const = default;
};

/// Micro-averaged entity-level scores (a predicted span counts iff start,
/// end and class all match a gold span of the same sentence) plus
/// token-level accuracy. Values are kept at full precision; rounding
/// happens only in the text rendering.
struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double token_accuracy = 0.0;
  std::map<std::string, ClassMetrics> per_class;
  std::int64_t n_gold = 0;
  std::int64_t n_pred = 0;
  std::int64_t n_correct = 0;
};

/// Scores predictions against a labeled dataset. `pred` holds one IOB2 tag
/// sequence per sentence, same order and lengths as `gold`.
MetricsReport score(const Dataset& gold, const std::vector<std::vector<std::string>>& pred);

std::string metrics_to_json(const MetricsReport& report);

/// Aligned plain-text table, three decimals.
std::string metrics_to_table(const MetricsReport& report);

}  // namespace daner
