#include "blo/fd.hpp"

#include <cmath>
#include <string>

namespace blo {

MetaVector fd_gradient(const MetaObjective& h, const MetaVector& phi, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("fd_gradient: eps must be > 0");
  MetaVector grad(phi.size());
  MetaVector probe = phi;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    probe[i] = phi[i] + eps;
    const double up = h(probe);
    probe[i] = phi[i] - eps;
    const double down = h(probe);
    probe[i] = phi[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw DivergenceError("fd_gradient: non-finite objective at coordinate " + std::to_string(i),
                            static_cast<long>(i));
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace blo
