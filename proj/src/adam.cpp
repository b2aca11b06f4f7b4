#include "cdnet/adam.hpp"

#include <cmath>
#include <fmt/format.h>

namespace cdnet {

void Adam::step(std::span<const ParamRef> params) {
  for (const ParamRef& p : params) {
    if (p.grad.size() != p.value.size()) {
      throw ShapeError(fmt::format("adam: gradient of '{}' has {} entries, parameter {}", p.name,
                                   p.grad.size(), p.value.size()));
    }
    for (float g : p.grad) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient(fmt::format("adam: non-finite gradient in '{}'", p.name));
      }
    }
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].value.size(), 0.0f);
      v_[i].assign(params[i].value.size(), 0.0f);
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError(fmt::format("adam: state tracks {} parameters, got {}", m_.size(),
                                 params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].size() != params[i].value.size()) {
      throw ShapeError(fmt::format("adam: state size mismatch for '{}'", params[i].name));
    }
  }

  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<float> value = params[i].value;
    std::span<float> grad = params[i].grad;
    std::vector<float>& m = m_[i];
    std::vector<float>& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      const double mk = b1 * m[k] + (1.0 - b1) * g;
      const double vk = b2 * v[k] + (1.0 - b2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = config_.lr * (mk / c1) / (std::sqrt(vk / c2) + config_.epsilon);
      value[k] = static_cast<float>(value[k] - update);
    }
  }
}

void Adam::restore(std::uint64_t t, std::vector<std::vector<float>> m,
                   std::vector<std::vector<float>> v) {
  if (m.size() != v.size()) throw ShapeError("adam restore: moment lists differ in length");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace cdnet
