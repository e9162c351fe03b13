#pragma once

// Small hand-built specs shared by the unit tests.

#include <cmath>
#include <memory>
#include <vector>

#include "ibdiag/generation.hpp"

namespace ibdiag::test {

inline double log2_binom(unsigned n, unsigned k) {
  double r = 0.0;
  for (unsigned i = 1; i <= k; ++i) r += std::log2(static_cast<double>(n - k + i) / i);
  return r;
}

inline double h_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

inline Condition cond(std::uint32_t c = 0, std::uint32_t f = 0) { return {c, f, LengthTag::Medium}; }

inline std::shared_ptr<const Codebook> fsq_book(std::size_t k) {
  return std::make_shared<const Codebook>(Codebook::fsq({k}));
}

// Same rows for every listed condition.
inline std::shared_ptr<GeneratorSpec> make_spec(Strategy s, std::size_t side, std::size_t k,
                                                const std::vector<std::vector<double>>& rows,
                                                const std::vector<Condition>& conds = {cond()}) {
  auto spec = std::make_shared<GeneratorSpec>();
  spec->name = "t";
  spec->seed_label = "t";
  spec->strategy = s;
  spec->grid_side = side;
  spec->codebook = fsq_book(k);
  for (const auto& x : conds) spec->tables.emplace(key_of(x), CategoricalTable(rows));
  return spec;
}

inline std::vector<std::vector<double>> uniform_rows(std::size_t rows, std::size_t k) {
  return std::vector<std::vector<double>>(rows, std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

// World with `classes` classes of five forms each.
inline ToyWorld small_world(std::uint32_t classes = 2) {
  ToyWorld w;
  const LengthTag tags[] = {LengthTag::Medium, LengthTag::Short, LengthTag::Medium, LengthTag::Long,
                            LengthTag::Short};
  for (std::uint32_t c = 0; c < classes; ++c)
    for (std::uint32_t f = 0; f < 5; ++f) w.conditions.push_back({c, f, tags[f]});
  return w;
}

}  // namespace ibdiag::test
