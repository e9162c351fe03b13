#include <cmath>

#include "doctest.h"
#include "ibdiag/metrics.hpp"
#include "ibdiag/reference.hpp"
#include "support.hpp"

using namespace ibdiag;
using namespace ibdiag::test;

namespace {

Image img(std::size_t h, std::size_t w, std::vector<double> px) { return Image{h, w, std::move(px)}; }

PromptSamples constant_prompt(std::size_t n) {
  PromptSamples p;
  p.prompt = "p";
  const auto cb = Codebook::fsq({4});
  for (std::size_t i = 0; i < n; ++i) {
    TokenGrid g{2, {1, 2, 3, 0}};
    p.images.push_back(decode(g, cb));
    p.grids.push_back(g);
    p.groups.push_back(0);
    p.conditions.push_back(cond());
  }
  return p;
}

}  // namespace

TEST_CASE("token hamming") {
  CHECK(token_hamming({2, {0, 1, 2, 3}}, {2, {0, 1, 0, 0}}) == doctest::Approx(0.5));
  CHECK(token_hamming({1, {4}}, {1, {4}}) == 0.0);
  CHECK_THROWS(token_hamming({1, {4}}, {2, {4, 4, 4, 4}}));
}

TEST_CASE("pixel cosine worked example") {
  const auto a = img(1, 2, {1.0, 0.0});
  const auto b = img(1, 2, {1.0, 1.0});
  CHECK(std::abs(pixel_cosine_distance(a, b) - (1.0 - 1.0 / std::sqrt(2.0))) < 1e-12);
  CHECK(pixel_cosine_distance(a, a) == doctest::Approx(0.0));
  CHECK_THROWS(pixel_cosine_distance(a, img(1, 2, {0.0, 0.0})));
  CHECK_THROWS(pixel_cosine_distance(a, img(2, 1, {1.0, 0.0})));
}

TEST_CASE("ssim") {
  const auto a = img(2, 2, {0.1, 0.5, 0.9, 0.3});
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
  const auto zero = img(2, 2, {0, 0, 0, 0});
  const auto one = img(2, 2, {1, 1, 1, 1});
  const double c1 = 0.01 * 0.01;
  CHECK(ssim(zero, one) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-12));

  // windowed path on a 9x9 image
  std::vector<double> px(81);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>((i * 37) % 11) / 10.0;
  const auto big = img(9, 9, px);
  CHECK(std::abs(ssim(big, big) - 1.0) < 1e-12);
}

TEST_CASE("pixel cosine pair distance on blank images") {
  const TokenGrid g{1, {0}};
  const auto zero = img(1, 1, {0.0});
  const auto one = img(1, 1, {1.0});
  CHECK(pair_distance(DiversityMetric::PixelCosine, g, zero, g, zero) == 0.0);
  CHECK(pair_distance(DiversityMetric::PixelCosine, g, zero, g, one) == 1.0);
}

TEST_CASE("mean over pairs") {
  const double vals[3][3] = {{0, 0.2, 0.4}, {0, 0, 0.6}, {0, 0, 0}};
  CHECK(mean_over_pairs(3, [&](std::size_t i, std::size_t j) { return vals[i][j]; }) == doctest::Approx(0.4));
  CHECK_THROWS(mean_over_pairs(1, [](std::size_t, std::size_t) { return 0.0; }));
}

TEST_CASE("identical samples have zero diversity") {
  for (std::size_t n : {2, 5, 16}) {
    const auto r = pairwise_diversity({constant_prompt(n)});
    CHECK(r.pair_count == n * (n - 1) / 2);
    for (DiversityMetric m : kAllMetrics) CHECK(r.value(m) == 0.0);
  }
}

TEST_CASE("diversity averages prompts without weighting") {
  auto a = constant_prompt(3);
  auto b = constant_prompt(3);
  b.prompt = "q";
  b.grids[0].tokens = {0, 0, 0, 0};  // one sample differs in every position
  b.images[0] = decode(b.grids[0], Codebook::fsq({4}));
  const auto r = pairwise_diversity({a, b});
  REQUIRE(r.per_prompt.size() == 2);
  // prompt q: 2 of 3 pairs differ in 3 of 4 positions
  CHECK(r.per_prompt[1].values[0] == doctest::Approx(0.5));
  CHECK(r.value(DiversityMetric::TokenHamming) == doctest::Approx(0.25));
}

TEST_CASE("quality proxy scores the generating condition") {
  auto spec = reference_ar();
  GroundTruth truth(*spec);
  const Condition x{0, 0, LengthTag::Medium};
  PromptSamples p;
  p.prompt = "p";
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto smp = generate(*spec, x, Stochastic{}, CodebookSubset::full(spec->codebook), s);
    p.grids.push_back(smp.grid);
    p.images.push_back(decode(smp.grid, *spec->codebook));
    p.groups.push_back(0);
    p.conditions.push_back(x);
  }
  const auto q = quality_proxy({p}, truth);
  double expect = 0;
  for (const auto& g : p.grids) expect += std::log2(truth.probability(x, g)) / 4.0;
  CHECK(q.bits_per_token == doctest::Approx(expect / 4.0));
  CHECK(q.unreachable == 0);
  CHECK(q.samples == 4);
}
