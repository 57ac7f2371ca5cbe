#include "epicode/extrapolate.hpp"

#include <cmath>
#include <string>

#include "epicode/error.hpp"

namespace epicode {

namespace {

template <typename Op>
TensorMap elementwise(const TensorMap& a, const TensorMap& b, Op op) {
  require_compat(a, b);
  TensorMap out;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    Tensor t(ta.shape, std::vector<float>(ta.data.size()));
    t.array() = op(ta.array(), tb.array());
    if (!t.array().isFinite().all())
      throw NumericError("non-finite value in output tensor '" + name + "'");
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace

TensorMap extrapolate(const TensorMap& strong, const TensorMap& weak,
                      ExtrapolationConfig cfg) {
  if (!(cfg.mu >= 0.0) || !std::isfinite(cfg.mu))
    throw DataError("mu must be finite and non-negative");
  const auto mu = static_cast<float>(cfg.mu);
  return elementwise(strong, weak, [mu](const auto& s, const auto& w) {
    return (s + mu * (s - w)).eval();
  });
}

TensorMap interpolate(const TensorMap& a, const TensorMap& b, double t) {
  if (!std::isfinite(t)) throw DataError("interpolation weight must be finite");
  const auto ta = static_cast<float>(t);
  const auto tb = static_cast<float>(1.0 - t);
  return elementwise(a, b, [ta, tb](const auto& x, const auto& y) {
    return (ta * x + tb * y).eval();
  });
}

double param_distance(const TensorMap& a, const TensorMap& b) {
  require_compat(a, b);
  double sum = 0.0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    double partial = 0.0;
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      const double d = static_cast<double>(ta.data[i]) - static_cast<double>(tb.data[i]);
      partial += d * d;
    }
    sum += partial;
  }
  return std::sqrt(sum);
}

double locality_gain(const TensorMap& ep, const TensorMap& ft,
                     const TensorMap& grad) {
  require_compat(ep, ft);
  require_compat(ep, grad);
  double sum = 0.0;
  for (const auto& [name, te] : ep) {
    const Tensor& tf = ft.at(name);
    const Tensor& tg = grad.at(name);
    double partial = 0.0;
    for (std::size_t i = 0; i < te.data.size(); ++i)
      partial += (static_cast<double>(te.data[i]) - static_cast<double>(tf.data[i])) *
                 static_cast<double>(tg.data[i]);
    sum += partial;
  }
  return sum;
}

double locality_estimate(const TensorMap& ep, const TensorMap& ft,
                         const TensorMap& grad, double mu) {
  return mu * locality_gain(ep, ft, grad);
}

}  // namespace epicode
