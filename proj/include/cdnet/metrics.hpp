#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

/// Image -> logits of a fixed class count. Must be pure.
class Classifier {
 public:
  virtual ~Classifier() = default;
  [[nodiscard]] virtual std::vector<float> logits(const Tensor& image) const = 0;
};

struct SimilarityReport {
  std::size_t n = 0;
  double similarity = 0.0;   // top-1 agreement
  double similarity5 = 0.0;  // output argmax within truth's top 5
  std::vector<bool> top1;
  std::vector<bool> top5;
};

/// Index of the largest value; the smallest index wins ties.
std::size_t argmax(std::span<const float> values);

/// Indices of the k largest values ordered by (value desc, index asc).
std::vector<std::size_t> top_k(std::span<const float> values, std::size_t k);

/// Fraction of pairs whose classifier argmax agrees, and the fraction whose
/// output argmax is among the truth's five largest logits.
SimilarityReport similarity_ratio(std::span<const Tensor> outputs, std::span<const Tensor> truths,
                                  const Classifier& classifier);

double image_l1(const Tensor& a, const Tensor& b);
double image_l2(const Tensor& a, const Tensor& b);

struct EvalRow {
  std::string name;
  double l1 = 0.0;
  double l2 = 0.0;
  double similarity = 0.0;
  double similarity5 = 0.0;
};

/// `name,l1,l2,similarity,similarity5` header plus one line per row.
std::string format_eval_csv(std::span<const EvalRow> rows);

}  // namespace cdnet
