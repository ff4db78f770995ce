//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/metrics.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <regex>

namespace molgraph::metrics {
namespace {

// Decodes UTF-8; a malformed byte becomes its own code point.
std::vector<char32_t> code_points(std::string_view s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    bool ok = len > 0 && i + len <= s.size();
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(c);
      ++i;
    } else {
      out.push_back(cp);
      i += len;
    }
  }
  return out;
}

bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

std::size_t utf8_length(unsigned char lead) {
  return lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : (lead >> 4) == 0xE ? 3 : (lead >> 3) == 0x1E ? 4 : 1;
}

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams ngrams(const std::vector<std::string> &t, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= t.size(); ++i)
    ++out[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    const auto piece = text.substr(i, len);
    const auto cps = code_points(piece);
    if (cps.size() == 1 && is_space(cps[0])) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.append(piece);
    }
    i += len;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double bleu(std::string_view candidate, std::string_view reference, std::size_t max_n,
            bool clipped) {
  if (max_n < 1) throw std::invalid_argument("bleu needs max_n >= 1");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  const double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  if (cand.size() < max_n) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto cn = ngrams(cand, n), rn = ngrams(ref, n);
    std::size_t hits = 0;
    for (const auto &[g, count] : cn) {
      const auto it = rn.find(g);
      if (it == rn.end()) continue;
      hits += clipped ? std::min(count, it->second) : count;
    }
    if (hits == 0) return 0.0;
    log_sum += std::log(static_cast<double>(hits) / static_cast<double>(cand.size() - n + 1));
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

MeteorDetail meteor_detail(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  MeteorDetail d;
  if (cand.empty() || ref.empty()) return d;
  std::vector<bool> used(ref.size(), false);
  std::vector<std::ptrdiff_t> align(cand.size(), -1);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (i > 0 && align[i - 1] >= 0) {
      const auto next = static_cast<std::size_t>(align[i - 1] + 1);
      if (next < ref.size() && !used[next] && ref[next] == cand[i]) {
        align[i] = static_cast<std::ptrdiff_t>(next);
        used[next] = true;
        continue;
      }
    }
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == cand[i]) {
        align[i] = static_cast<std::ptrdiff_t>(j);
        used[j] = true;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (align[i] < 0) continue;
    ++d.matched;
    if (i == 0 || align[i - 1] < 0 || align[i - 1] + 1 != align[i]) ++d.chunks;
  }
  if (d.matched == 0) return d;
  assert(d.chunks <= d.matched);
  const double m = static_cast<double>(d.matched);
  d.precision = m / static_cast<double>(cand.size());
  d.recall = m / static_cast<double>(ref.size());
  d.fmean = 10.0 * d.precision * d.recall / (9.0 * d.precision + d.recall);
  d.penalty = 0.5 * static_cast<double>(d.chunks) / m;
  d.score = d.fmean * (1.0 - d.penalty);
  return d;
}

double meteor(std::string_view candidate, std::string_view reference) {
  return meteor_detail(candidate, reference).score;
}

double mae(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw LengthMismatch("mae: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(targets.size()) + " targets");
  if (predictions.empty()) throw EmptyInput("mae of zero values");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
  return s / static_cast<double>(predictions.size());
}

int exact_match(std::string_view candidate, std::string_view reference) {
  return tokenize(candidate) == tokenize(reference) ? 1 : 0;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto x = code_points(a), y = code_points(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

std::optional<PropertyValue> extract_property_value(std::string_view text) {
  static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  std::string s(text);
  const auto key = s.find("Output Value:");
  if (key != std::string::npos) s = s.substr(key + 13);
  std::smatch m;
  if (!std::regex_search(s, m, number)) return std::nullopt;
  return PropertyValue{std::stod(m.str()), m.str()};
}

nlohmann::json MetricReport::to_json(bool include_per_sample) const {
  nlohmann::json j{{"values", values},
                   {"samples", samples},
                   {"unparsed", unparsed},
                   {"tokenization", "unicode-whitespace, case-sensitive"}};
  if (include_per_sample) j["per_sample"] = per_sample;
  return j;
}

MetricReport evaluate(const std::vector<std::string> &predictions,
                      const std::vector<std::string> &references,
                      const std::vector<std::string> &names) {
  if (predictions.size() != references.size())
    throw LengthMismatch("evaluate: " + std::to_string(predictions.size()) +
                         " predictions for " + std::to_string(references.size()) + " references");
  if (predictions.empty()) throw EmptyInput("evaluate: no samples");
  MetricReport report;
  report.samples = predictions.size();
  for (const auto &name : names) {
    auto &values = report.per_sample[name];
    if (name == "mae") {
      std::vector<double> p, t;
      for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto a = extract_property_value(predictions[i]);
        const auto b = extract_property_value(references[i]);
        if (!a || !b) {
          ++report.unparsed;
          continue;
        }
        p.push_back(a->value);
        t.push_back(b->value);
        values.push_back(std::abs(a->value - b->value));
      }
      if (!p.empty()) report.values[name] = mae(p, t);
      continue;
    }
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const auto &c = predictions[i], &r = references[i];
      if (name == "bleu") {
        values.push_back(bleu(c, r));
      } else if (name == "meteor") {
        values.push_back(meteor(c, r));
      } else if (name == "exact") {
        values.push_back(exact_match(c, r));
      } else if (name == "lev") {
        values.push_back(static_cast<double>(levenshtein(c, r)));
      } else {
        throw std::invalid_argument("unknown metric '" + name +
                                    "' (expected bleu, meteor, mae, exact or lev)");
      }
    }
    double s = 0.0;
    for (double v : values) s += v;
    report.values[name] = s / static_cast<double>(values.size());
  }
  return report;
}

}  // namespace molgraph::metrics
