#pragma once

#include <functional>

#include "blo/linalg.hpp"

namespace blo {

using MetaObjective = std::function<double(const MetaVector&)>;

inline constexpr double kDefaultFdStep = 1e-6;

/// Central-difference gradient (h(phi + eps e_i) - h(phi - eps e_i)) / (2 eps).
/// Throws DivergenceError if any evaluation is non-finite.
MetaVector fd_gradient(const MetaObjective& h, const MetaVector& phi, double eps = kDefaultFdStep);

}  // namespace blo
