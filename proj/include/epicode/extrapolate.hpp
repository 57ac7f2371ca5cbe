#pragma once

#include "epicode/checkpoint.hpp"

namespace epicode {

/// Extrapolation strength. Zero is admitted as the identity case.
struct ExtrapolationConfig {
  double mu = 0.0;
};

/// out = strong + mu * (strong - weak), elementwise in float32.
///
/// Requires identical structure (see check_compat); throws DataError with the
/// rendered report otherwise, NumericError if any output is non-finite.
TensorMap extrapolate(const TensorMap& strong, const TensorMap& weak,
                      ExtrapolationConfig cfg);

/// out = t * a + (1 - t) * b, elementwise in float32.
/// extrapolate(s, w, mu) is interpolate(s, w, 1 + mu).
TensorMap interpolate(const TensorMap& a, const TensorMap& b, double t);

/// Euclidean norm of the concatenated difference a - b, accumulated in double
/// in canonical name order.
double param_distance(const TensorMap& a, const TensorMap& b);

/// Inner product (ep - ft) . grad over all flattened tensors, accumulated in
/// double. A negative value predicts that moving from ft to ep lowers the
/// loss to first order.
///
/// Note on scaling: the first-order loss change of ft -> ep is exactly this
/// inner product. Multiplying it by mu once more (locality_estimate) gives a
/// quantity that is second order in mu, since ep - ft = mu (ft - early). Both
/// are exposed; they always share a sign for mu > 0.
double locality_gain(const TensorMap& ep, const TensorMap& ft,
                     const TensorMap& grad);

/// mu * locality_gain(ep, ft, grad).
double locality_estimate(const TensorMap& ep, const TensorMap& ft,
                         const TensorMap& grad, double mu);

}  // namespace epicode
