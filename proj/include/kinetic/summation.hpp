#pragma once

#include <cstddef>
#include <span>

namespace kinetic {

/// Cascade summation over term(0..n-1). The split points depend only on n, so
/// the result is bit-identical for a given input regardless of who calls it.
template <class Term>
double pairwise_sum(std::size_t begin, std::size_t end, const Term& term) {
  constexpr std::size_t block = 16;
  if (end - begin <= block) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    return s;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_sum(begin, mid, term) + pairwise_sum(mid, end, term);
}

template <class Term>
double pairwise_sum(std::size_t n, const Term& term) {
  return pairwise_sum(std::size_t{0}, n, term);
}

inline double pairwise_sum(std::span<const double> values) {
  return pairwise_sum(values.size(), [&](std::size_t i) { return values[i]; });
}

}  // namespace kinetic
