#include "cdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace cdnet {

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> top_k(std::span<const float> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

SimilarityReport similarity_ratio(std::span<const Tensor> outputs, std::span<const Tensor> truths,
                                  const Classifier& classifier) {
  if (outputs.size() != truths.size()) {
    throw std::invalid_argument(fmt::format("similarity_ratio: {} outputs but {} truths",
                                            outputs.size(), truths.size()));
  }
  if (outputs.empty()) throw std::invalid_argument("similarity_ratio: no samples");
  SimilarityReport report;
  report.n = outputs.size();
  report.top1.resize(report.n);
  report.top5.resize(report.n);

  std::vector<std::vector<float>> out_logits(report.n);
  std::vector<std::vector<float>> truth_logits(report.n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < report.n; ++i) {
    out_logits[i] = classifier.logits(outputs[i]);
    truth_logits[i] = classifier.logits(truths[i]);
  }

  std::size_t hits1 = 0;
  std::size_t hits5 = 0;
  for (std::size_t i = 0; i < report.n; ++i) {
    const std::size_t predicted = argmax(out_logits[i]);
    const std::vector<std::size_t> truth_top = top_k(truth_logits[i], 5);
    const bool m1 = predicted == truth_top.front();
    const bool m5 = std::find(truth_top.begin(), truth_top.end(), predicted) != truth_top.end();
    report.top1[i] = m1;
    report.top5[i] = m5;
    hits1 += m1 ? 1 : 0;
    hits5 += m5 ? 1 : 0;
  }
  report.similarity = static_cast<double>(hits1) / static_cast<double>(report.n);
  report.similarity5 = static_cast<double>(hits5) / static_cast<double>(report.n);
  return report;
}

double image_l1(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "image_l1");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(static_cast<double>(a[i]) - b[i]);
  return sum / static_cast<double>(a.numel());
}

double image_l2(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "image_l2");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.numel());
}

std::string format_eval_csv(std::span<const EvalRow> rows) {
  std::string out = "name,l1,l2,similarity,similarity5\n";
  for (const EvalRow& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{:.5f},{:.5f}\n", r.name, r.l1, r.l2, r.similarity,
                       r.similarity5);
  }
  return out;
}

}  // namespace cdnet
