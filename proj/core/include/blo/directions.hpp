#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "blo/linalg.hpp"

namespace blo {

/// Direction distributions with E[v v^T] = I.
enum class Distribution {
  Rademacher,  // entries uniform on {-1, +1}
  Gaussian,    // entries N(0, 1)
  Coordinate,  // sqrt(N) e_i, i uniform
};

std::string_view to_string(Distribution d);
Distribution distribution_from_string(std::string_view s);

struct DirectionBatch {
  std::vector<MetaVector> directions;
  Distribution distribution = Distribution::Rademacher;
  std::uint64_t base_seed = 0;

  std::size_t size() const noexcept { return directions.size(); }
  const MetaVector& operator[](std::size_t i) const { return directions[i]; }
};

/// Direction `index` of the batch seeded by `seed`. Pure in (seed, index).
MetaVector sample_direction(Distribution dist, std::size_t n, std::uint64_t seed,
                            std::uint64_t index);

/// b i.i.d. directions of length n. Throws InvalidArgument when n or b is zero.
DirectionBatch sample_directions(Distribution dist, std::size_t n, std::size_t b,
                                 std::uint64_t seed);

/// The full scaled coordinate basis {sqrt(n) e_i}, i = 0..n-1, tagged Coordinate.
DirectionBatch coordinate_basis(std::size_t n);

}  // namespace blo
