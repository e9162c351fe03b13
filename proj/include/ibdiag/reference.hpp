#pragma once

// Shipped reference toys and randomized enumerable specs.

#include <cstdint>
#include <memory>
#include <vector>

#include "ibdiag/generation.hpp"

namespace ibdiag {

// Two semantic classes with ten surface forms each. Form 0 is the original
// phrasing (medium); forms 1-3 are short, 4-6 medium, 7-9 long.
ToyWorld reference_world();

struct ReferenceShapes {
  double ar_peak = 0.85;
  double diff_stay = 0.97;  // mass on the permuted successor
};

// Deterministic given the shapes. Tables are built for every condition of
// reference_world().
std::shared_ptr<GeneratorSpec> reference_ar(const ReferenceShapes& shapes = {});
std::shared_ptr<GeneratorSpec> reference_mim();
std::shared_ptr<GeneratorSpec> reference_diff(const ReferenceShapes& shapes = {});
std::shared_ptr<GeneratorSpec> reference_generator(Strategy s, const ReferenceShapes& shapes = {});

struct RandomCase {
  std::shared_ptr<GeneratorSpec> spec;
  std::vector<Condition> conditions;
  std::vector<double> weights;  // condition prior, sums to 1
};

// Random spec with K <= 8, N <= 4 and T <= 4 whose outcome space stays
// within `bound` per condition. Rows are sparse so enumeration stays cheap.
RandomCase random_case(std::uint64_t seed, Strategy strategy, std::size_t bound = 200'000);

}  // namespace ibdiag
