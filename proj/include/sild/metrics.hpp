#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "sild/errors.hpp"

namespace sild {

// Fraction of rows of an n x c score matrix whose argmax equals the label.
// Ties resolve to the lowest class index.
template <typename T>
double accuracy(const std::vector<T>& scores, std::size_t num_classes, const std::vector<int>& labels) {
  if (labels.empty()) throw ValidationError("accuracy: empty split");
  if (scores.size() != labels.size() * num_classes)
    throw ValidationError("accuracy: score matrix does not match label count");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = scores.begin() + static_cast<std::ptrdiff_t>(i * num_classes);
    const auto best = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(num_classes)) - row);
    hit += best == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// Area under the ROC curve via midranks: P(score+ > score-) + 0.5 P(tie).
template <typename T>
double auc(const std::vector<T>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int y : labels) pos += y != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based midranks of the positives, accumulated as doubled ranks to
  // stay in integers.
  std::size_t rank2_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t mid2 = i + j + 1;  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) rank2_sum += mid2;
    i = j;
  }
  const double u = static_cast<double>(rank2_sum) / 2.0 - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace sild
