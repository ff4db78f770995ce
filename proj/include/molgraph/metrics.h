//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_METRICS_H_
#define MOLGRAPH_METRICS_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace molgraph::metrics {

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Splits on Unicode whitespace; case is kept.
std::vector<std::string> tokenize(std::string_view text);

// BP * exp(mean_n log p_n) with BP = 1 when c > r and exp(1 - r / c)
// otherwise. Any zero precision, including a candidate shorter than max_n
// tokens, gives 0. With clipped off, n-gram hits are not capped by the
// reference counts.
double bleu(std::string_view candidate, std::string_view reference, std::size_t max_n = 4,
            bool clipped = true);

struct MeteorDetail {
  std::size_t matched = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};

// Exact unigram alignment. F = 10PR / (9P + R), Penalty = 0.5 * chunks /
// matched, score = F (1 - Penalty). Each candidate token takes the reference
// token that extends the current chunk when one is free, else the earliest
// free one.
MeteorDetail meteor_detail(std::string_view candidate, std::string_view reference);
double meteor(std::string_view candidate, std::string_view reference);

double mae(std::span<const double> predictions, std::span<const double> targets);

// 1 when the strings agree after collapsing whitespace runs, else 0.
int exact_match(std::string_view candidate, std::string_view reference);

// Unit-cost edit distance over Unicode code points.
std::size_t levenshtein(std::string_view a, std::string_view b);

struct PropertyValue {
  double value;
  std::string literal;
};

// The number after "Output Value:" when present, otherwise the first numeric
// literal in the text.
std::optional<PropertyValue> extract_property_value(std::string_view text);

struct MetricReport {
  std::map<std::string, double> values;
  std::map<std::string, std::vector<double>> per_sample;
  std::size_t samples = 0;
  std::size_t unparsed = 0;

  nlohmann::json to_json(bool include_per_sample = false) const;
};

// names: any of bleu, meteor, mae, exact, lev. Scores are sentence-level and
// averaged over samples.
MetricReport evaluate(const std::vector<std::string> &predictions,
                      const std::vector<std::string> &references,
                      const std::vector<std::string> &names);

}  // namespace molgraph::metrics

#endif  // MOLGRAPH_METRICS_H_
