#include <cmath>

#include "doctest.h"
#include "ibdiag/entropy.hpp"
#include "ibdiag/errors.hpp"
#include "ibdiag/reference.hpp"
#include "support.hpp"

using namespace ibdiag;
using namespace ibdiag::test;

TEST_CASE("shannon") {
  const std::vector<double> p{0.5, 0.25, 0.25};
  CHECK(shannon(p) == doctest::Approx(1.5));
  const std::vector<double> z{1.0, 0.0};
  CHECK(shannon(z) == 0.0);
  const std::vector<double> bad{0.5, 0.4};
  CHECK_THROWS(shannon(bad));
}

TEST_CASE("plug-in and miller-madow from counts") {
  const std::vector<std::uint64_t> c{3, 1};
  CHECK(estimate_from_counts(c, EntropyEstimator::PlugIn) == doctest::Approx(0.8112781244591328).epsilon(1e-12));
  // (K_obs - 1) / (2 n ln 2) with K_obs = 2, n = 4
  CHECK(estimate_from_counts(c, EntropyEstimator::MillerMadow) ==
        doctest::Approx(0.8112781244591328 + 1.0 / (8.0 * std::log(2.0))).epsilon(1e-12));
}

TEST_CASE("monte carlo estimate with bootstrap error") {
  const auto constant = mc_estimate([](std::uint64_t) { return std::vector<std::uint32_t>{7}; }, 100,
                                    EntropyEstimator::PlugIn, 1);
  CHECK(constant.bits == 0.0);
  CHECK(constant.stderr_bits == 0.0);
  const auto coin = mc_estimate([](std::uint64_t i) { return std::vector<std::uint32_t>{static_cast<std::uint32_t>(i % 2)}; },
                                1000, EntropyEstimator::PlugIn, 1);
  CHECK(coin.bits == doctest::Approx(1.0));
  CHECK(coin.stderr_bits >= 0.0);
  const auto again = mc_estimate([](std::uint64_t i) { return std::vector<std::uint32_t>{static_cast<std::uint32_t>(i % 2)}; },
                                 1000, EntropyEstimator::PlugIn, 1);
  CHECK(again.stderr_bits == coin.stderr_bits);
}

TEST_CASE("mim closed form") {
  auto spec = make_spec(Strategy::MIM, 2, 2, uniform_rows(3, 2));
  spec->steps = 2;
  spec->explicit_counts = {2, 2};
  spec->validate();
  CHECK(mim_path_entropy(*spec) == doctest::Approx(std::log2(6.0)).epsilon(1e-12));
  const auto e = conditional_entropies(enumerate_outcomes(*spec, cond(), Stochastic{}, CodebookSubset::full(spec->codebook)));
  CHECK(std::abs(e.h_path - std::log2(6.0)) < 1e-9);
}

TEST_CASE("diffusion chain sum") {
  auto spec = make_spec(Strategy::DIFF, 1, 2, uniform_rows(2, 2));
  spec->steps = 2;
  spec->prior = {0.75, 0.25};
  spec->validate();
  CHECK(diffusion_path_entropy(*spec, cond()) == doctest::Approx(1.8112781244591328).epsilon(1e-12));
  const auto r = decompose(*spec, uniform_prior({cond()}), Stochastic{}, CodebookSubset::full(spec->codebook));
  CHECK(r.h_path == doctest::Approx(1.8112781244591328).epsilon(1e-12));
  CHECK(r.h_z_given_x == doctest::Approx(1.0));
  CHECK(r.h_exec == doctest::Approx(0.0));
  CHECK(r.h_residual == doctest::Approx(0.8112781244591328));
  CHECK(std::abs(r.identity_residual()) < 1e-12);
}

TEST_CASE("ar decomposition has no path entropy") {
  auto spec = make_spec(Strategy::AR, 2, 2, {{0.5, 0.5}, {0.9, 0.1}, {0.3, 0.7}});
  spec->validate();
  const auto full = CodebookSubset::full(spec->codebook);
  CHECK(path_entropy(*spec, cond(), Stochastic{}, full) == 0.0);
  const auto r = decompose(*spec, uniform_prior({cond()}), Stochastic{}, full);
  CHECK(r.h_path == 0.0);
  CHECK(r.h_residual == 0.0);
  CHECK(r.h_exec == doctest::Approx(r.h_z_given_x));
}

TEST_CASE("mutual information and the ib objective") {
  const Condition a = cond(0, 0), b = cond(1, 0);
  auto spec = make_spec(Strategy::AR, 1, 2, {{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}, {a});
  spec->tables.emplace(key_of(b), CategoricalTable(std::vector<std::vector<double>>{{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}));
  spec->validate();
  const auto r = decompose(*spec, uniform_prior({a, b}), Stochastic{}, CodebookSubset::full(spec->codebook), 0.5);
  CHECK(r.h_z == doctest::Approx(1.0));
  CHECK(r.h_z_given_x == doctest::Approx(0.0));
  CHECK(r.i_xz == doctest::Approx(1.0));
  CHECK(r.i_zy == doctest::Approx(r.h_z));
  CHECK(r.ib_objective == doctest::Approx(1.0 - 0.5 * 1.0));
}

TEST_CASE("enumeration bound") {
  auto spec = reference_diff();
  CHECK_THROWS_AS(decompose(*spec, uniform_prior({Condition{0, 0, LengthTag::Medium}}), Stochastic{},
                            CodebookSubset::full(spec->codebook), 1.0, 100),
                  EnumerationLimitError);
}

TEST_CASE("identity holds on random specs") {
  for (Strategy s : {Strategy::AR, Strategy::MIM, Strategy::DIFF}) {
    for (std::uint64_t i = 0; i < 5; ++i) {
      const auto rc = random_case(i, s);
      std::vector<WeightedCondition> prior;
      for (std::size_t c = 0; c < rc.conditions.size(); ++c) prior.push_back({rc.conditions[c], rc.weights[c]});
      const auto r = decompose(*rc.spec, prior, Stochastic{}, CodebookSubset::full(rc.spec->codebook));
      CHECK(std::abs(r.identity_residual()) < 1e-9);
      CHECK(r.h_z + 1e-12 >= r.h_z_given_x);
    }
  }
}
