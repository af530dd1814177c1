#include "blo/problem.hpp"

#include <cmath>
#include <string>

#include "blo/rng.hpp"

namespace blo {

std::uint64_t step_seed(std::uint64_t run_seed, std::size_t t) { return derive_seed(run_seed, t); }

double BilevelProblem::black_box_h(const MetaVector& phi, std::size_t T,
                                   std::uint64_t run_seed) const {
  InnerVector theta = inner_init(phi);
  for (std::size_t t = 1; t <= T; ++t) {
    theta = transition(theta, phi, t, step_seed(run_seed, t));
    if (!theta.all_finite())
      throw DivergenceError(name() + ": non-finite inner iterate at step " + std::to_string(t),
                            static_cast<long>(t), norm(theta));
  }
  const double h = meta_loss(theta, phi);
  if (!std::isfinite(h)) throw DivergenceError(name() + ": non-finite meta loss");
  return h;
}

void BilevelProblem::check_meta(const MetaVector& phi) const {
  if (phi.size() != meta_dim())
    throw InvalidArgument(name() + ": meta vector has length " + std::to_string(phi.size()) +
                          ", expected " + std::to_string(meta_dim()));
}

void BilevelProblem::check_inner(const InnerVector& theta) const {
  if (theta.size() != inner_dim())
    throw InvalidArgument(name() + ": inner vector has length " + std::to_string(theta.size()) +
                          ", expected " + std::to_string(inner_dim()));
}

}  // namespace blo
