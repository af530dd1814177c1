#include "blo/directions.hpp"

#include <cmath>

#include "blo/rng.hpp"

namespace blo {

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::Rademacher:
      return "rademacher";
    case Distribution::Gaussian:
      return "gaussian";
    case Distribution::Coordinate:
      return "coordinate";
  }
  return "unknown";
}

Distribution distribution_from_string(std::string_view s) {
  if (s == "rademacher") return Distribution::Rademacher;
  if (s == "gaussian") return Distribution::Gaussian;
  if (s == "coordinate") return Distribution::Coordinate;
  throw InvalidArgument("unknown direction distribution '" + std::string(s) + "'");
}

MetaVector sample_direction(Distribution dist, std::size_t n, std::uint64_t seed,
                            std::uint64_t index) {
  if (n == 0) throw InvalidArgument("sample_direction: n must be positive");
  CounterRng rng(seed, index);
  MetaVector v(n);
  switch (dist) {
    case Distribution::Rademacher: {
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % 64 == 0) bits = rng.next_u64();
        v[i] = (bits & 1u) ? 1.0 : -1.0;
        bits >>= 1;
      }
      break;
    }
    case Distribution::Gaussian:
      for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal();
      break;
    case Distribution::Coordinate:
      v[rng.below(n)] = std::sqrt(static_cast<double>(n));
      break;
  }
  return v;
}

DirectionBatch sample_directions(Distribution dist, std::size_t n, std::size_t b,
                                 std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_directions: n must be positive");
  if (b == 0) throw InvalidArgument("sample_directions: b must be positive");
  DirectionBatch batch;
  batch.distribution = dist;
  batch.base_seed = seed;
  batch.directions.reserve(b);
  for (std::size_t j = 0; j < b; ++j) batch.directions.push_back(sample_direction(dist, n, seed, j));
  return batch;
}

DirectionBatch coordinate_basis(std::size_t n) {
  if (n == 0) throw InvalidArgument("coordinate_basis: n must be positive");
  DirectionBatch batch;
  batch.distribution = Distribution::Coordinate;
  const double scale = std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    MetaVector v(n);
    v[i] = scale;
    batch.directions.push_back(std::move(v));
  }
  return batch;
}

}  // namespace blo
