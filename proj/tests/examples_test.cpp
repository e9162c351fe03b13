#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "ibdiag/analysis.hpp"
#include "ibdiag/config.hpp"
#include "ibdiag/entropy.hpp"
#include "ibdiag/pipeline.hpp"
#include "ibdiag/probes.hpp"
#include "ibdiag/reference.hpp"
#include "ibdiag/rng.hpp"
#include "support.hpp"

using namespace ibdiag;
using namespace ibdiag::test;

namespace {

std::vector<std::vector<double>> mim_rows() { return {{0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}}; }  // ctx 0, 1, MASK

std::shared_ptr<GeneratorSpec> one_per_step_mim() {
  auto spec = make_spec(Strategy::MIM, 2, 2, mim_rows());
  spec->steps = 4;
  spec->explicit_counts = {1, 1, 1, 1};
  return spec;
}

CodebookSubset keep_code_zero(const std::shared_ptr<const Codebook>& cb) {
  return restrict_codebook(cb, UsageHistogram{{10, 1}}, SubsetPolicy::DropLeastFrequent, 0.5, 0);
}

ExperimentSettings reference_settings(Strategy s) {
  return baseline_settings(reference_world(), reference_generator(s));
}

}  // namespace

TEST_CASE("sampled outcome frequencies agree with enumeration") {
  auto spec = make_spec(Strategy::AR, 2, 2, {{0.7, 0.3}, {0.2, 0.8}, {0.4, 0.6}});
  const auto full = CodebookSubset::full(spec->codebook);
  const auto x = cond();
  std::map<std::vector<std::uint32_t>, double> exact;
  for (const auto& o : enumerate_outcomes(*spec, x, Stochastic{}, full)) {
    auto key = o.path_key;
    key.insert(key.end(), o.tokens.begin(), o.tokens.end());
    exact[key] += o.probability;
  }
  const std::size_t n = 100000;
  std::map<std::vector<std::uint32_t>, double> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = generate(*spec, x, Stochastic{}, full, i);
    auto key = path_key(s.path);
    key.insert(key.end(), s.grid.tokens.begin(), s.grid.tokens.end());
    seen[key] += 1.0;
  }
  for (const auto& [key, c] : seen) REQUIRE(exact.count(key) == 1);
  for (const auto& [key, p] : exact) {
    const double f = seen[key] / n;
    CHECK(std::abs(f - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("monte carlo entropy of a fair coin and of a mim toy") {
  const auto coin = mc_estimate(
      [](std::uint64_t i) {
        Rng r(derive_seed(99, {i}));
        return std::vector<std::uint32_t>{r.uniform() < 0.5 ? 0u : 1u};
      },
      100000, EntropyEstimator::PlugIn, 1);
  CHECK(std::abs(coin.bits - 1.0) < 0.01);

  auto spec = one_per_step_mim();
  const auto full = CodebookSubset::full(spec->codebook);
  const auto exact = decompose(*spec, {{cond(), 1.0}}, Stochastic{}, full);
  const auto mc = mc_estimate(
      [&](std::uint64_t i) { return generate(*spec, cond(), Stochastic{}, full, i).grid.tokens; }, 50000,
      EntropyEstimator::MillerMadow, 2);
  CHECK(std::abs(mc.bits - exact.h_z_given_x) <= 3 * mc.stderr_bits);
}

TEST_CASE("two by two mim against a brute-force oracle") {
  // One reveal per step in a uniformly random order; each revealed cell reads
  // its cyclic left neighbour in raster order, MASK while unrevealed.
  const auto rows = mim_rows();
  std::map<std::vector<int>, double> joint;  // order..., tokens...
  std::vector<int> order = {0, 1, 2, 3};
  do {
    for (int bits = 0; bits < 16; ++bits) {
      std::vector<int> z(4), state(4, 2);
      for (int i = 0; i < 4; ++i) z[i] = (bits >> i) & 1;
      double p = 1.0 / 24.0;
      for (int pos : order) {
        p *= rows[state[(pos + 3) % 4]][z[pos]];
        state[pos] = z[pos];
      }
      auto key = order;
      key.insert(key.end(), z.begin(), z.end());
      joint[key] += p;
    }
  } while (std::next_permutation(order.begin(), order.end()));

  std::map<std::vector<int>, double> pz, pp;
  for (const auto& [k, p] : joint) {
    pp[{k.begin(), k.begin() + 4}] += p;
    pz[{k.begin() + 4, k.end()}] += p;
  }
  double hz = 0, hp = 0, h_exec = 0, h_res = 0;
  for (const auto& [k, p] : pz) hz -= p * std::log2(p);
  for (const auto& [k, p] : pp) hp -= p * std::log2(p);
  for (const auto& [k, p] : joint) {
    h_exec -= p * std::log2(p / pp[{k.begin(), k.begin() + 4}]);
    h_res -= p * std::log2(p / pz[{k.begin() + 4, k.end()}]);
  }

  auto spec = one_per_step_mim();
  const auto r = decompose(*spec, {{cond(), 1.0}}, Stochastic{}, CodebookSubset::full(spec->codebook));
  CHECK(std::abs(r.h_z_given_x - hz) < 1e-12);
  CHECK(std::abs(r.h_path - hp) < 1e-12);
  CHECK(std::abs(r.h_path - std::log2(24.0)) < 1e-12);
  CHECK(std::abs(r.h_exec - h_exec) < 1e-12);
  CHECK(std::abs(r.h_residual - h_res) < 1e-12);
  CHECK(std::abs(r.identity_residual()) < 1e-12);
}

TEST_CASE("argmax never adds execution entropy") {
  for (Strategy s : {Strategy::AR, Strategy::MIM, Strategy::DIFF}) {
    for (std::uint64_t c = 0; c < 5; ++c) {
      const auto rc = random_case(500 + c, s);
      std::vector<WeightedCondition> prior;
      for (std::size_t i = 0; i < rc.conditions.size(); ++i) prior.push_back({rc.conditions[i], rc.weights[i]});
      const auto full = CodebookSubset::full(rc.spec->codebook);
      const auto st = decompose(*rc.spec, prior, Stochastic{}, full);
      const auto am = decompose(*rc.spec, prior, Argmax{}, full);
      CHECK(am.h_exec <= st.h_exec + 1e-12);
      if (s == Strategy::AR) CHECK(am.h_exec == 0.0);
    }
  }
}

TEST_CASE("autoregressive chain with a forced first token") {
  // BOS -> 0 surely; after 0 a fair coin; after 1 back to 0.
  auto spec = make_spec(Strategy::AR, 2, 2, {{0.5, 0.5}, {1.0, 0.0}, {1.0, 0.0}});
  const auto full = CodebookSubset::full(spec->codebook);
  const auto outcomes = enumerate_outcomes(*spec, cond(), Stochastic{}, full);
  CHECK(outcomes.size() == 5);  // 0 then three steps of a chain that never repeats 1
  double total = 0;
  for (const auto& o : outcomes) {
    CHECK(o.tokens[0] == 0);
    for (std::size_t i = 1; i < 4; ++i) CHECK_FALSE((o.tokens[i] == 1 && o.tokens[i - 1] == 1));
    total += o.probability;
  }
  CHECK(total == doctest::Approx(1.0));

  const auto only_zero = keep_code_zero(spec->codebook);
  const auto z = enumerate_outcomes(*spec, cond(), Stochastic{}, only_zero);
  REQUIRE(z.size() == 1);
  CHECK(z[0].tokens == std::vector<std::uint32_t>{0, 0, 0, 0});
  CHECK(z[0].probability == doctest::Approx(1.0));

  const auto am = generate(*spec, cond(), Argmax{}, full, 5);
  CHECK(am.grid.tokens == std::vector<std::uint32_t>{0, 0, 0, 0});
}

TEST_CASE("single step mim has no path entropy") {
  auto spec = make_spec(Strategy::MIM, 2, 2, mim_rows());
  spec->steps = 1;
  CHECK(mim_path_entropy(*spec) == 0.0);
  const auto r = decompose(*spec, {{cond(), 1.0}}, Stochastic{}, CodebookSubset::full(spec->codebook));
  CHECK(r.h_path == 0.0);
  CHECK(r.h_residual == 0.0);
}

TEST_CASE("single step diffusion returns the prior draw") {
  auto spec = make_spec(Strategy::DIFF, 1, 2, {{0.1, 0.9}, {0.9, 0.1}});
  spec->steps = 1;
  spec->prior = {0.7, 0.3};
  const auto full = CodebookSubset::full(spec->codebook);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto s = generate(*spec, cond(), Stochastic{}, full, i);
    const auto& path = std::get<DiffPath>(s.path);
    REQUIRE(path.trajectory.size() == 1);
    CHECK(path.trajectory.front() == s.grid);
  }
  std::map<std::uint32_t, double> pz;
  for (const auto& o : enumerate_outcomes(*spec, cond(), Stochastic{}, full)) pz[o.tokens[0]] += o.probability;
  CHECK(pz[0] == doctest::Approx(0.7));
  CHECK(pz[1] == doctest::Approx(0.3));
}

TEST_CASE("identity transitions keep a uniform prior and ignore argmax") {
  auto spec = make_spec(Strategy::DIFF, 1, 2, {{1.0, 0.0}, {0.0, 1.0}});
  spec->steps = 3;
  spec->prior = {0.5, 0.5};
  const auto full = CodebookSubset::full(spec->codebook);
  for (const SamplingPolicy& policy : {SamplingPolicy{Stochastic{}}, SamplingPolicy{Argmax{}}}) {
    std::map<std::uint32_t, double> pz;
    for (const auto& o : enumerate_outcomes(*spec, cond(), policy, full)) pz[o.tokens[0]] += o.probability;
    CHECK(pz[0] == doctest::Approx(0.5));
    CHECK(pz[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("decode changes only the patch of a changed token") {
  const auto cb = std::make_shared<const Codebook>(Codebook::fsq({3, 3}));
  TokenGrid a{3, {0, 1, 2, 3, 4, 5, 6, 7, 8}};
  TokenGrid b = a;
  b.tokens[4] = 0;
  const std::size_t p = 4;
  const Image ia = decode(a, *cb, p), ib = decode(b, *cb, p);
  REQUIRE(ia.height == 3 * p);
  bool changed = false;
  for (std::size_t r = 0; r < ia.height; ++r) {
    for (std::size_t c = 0; c < ia.width; ++c) {
      const bool inside = r / p == 1 && c / p == 1;
      if (!inside) CHECK(ia.at(r, c) == ib.at(r, c));
      if (inside && ia.at(r, c) != ib.at(r, c)) changed = true;
    }
  }
  CHECK(changed);
}

TEST_CASE("mixed paraphrases of five split two two one") {
  const auto world = reference_world();
  const auto set = paraphrase_set(world, world.find(0, 0), ParaphraseMode::Mixed, 5);
  REQUIRE(set.size() == 5);
  std::map<LengthTag, int> tags;
  for (const auto& c : set) ++tags[c.length];
  CHECK(tags[LengthTag::Short] == 2);
  CHECK(tags[LengthTag::Medium] == 2);
  CHECK(tags[LengthTag::Long] == 1);
}

TEST_CASE("keeping the whole codebook changes nothing") {
  const auto r = run_probe(reference_world(), reference_settings(Strategy::MIM),
                           SubsetProbe{SubsetPolicy::DropLeastFrequent, 1.0, 0}, 12, 3);
  for (double d : r.delta) CHECK(d == 0.0);
}

TEST_CASE("early argmax moves mim diversity more than late argmax") {
  const auto world = reference_world();
  const auto settings = reference_settings(Strategy::MIM);
  const auto early = run_probe(world, settings, ArgmaxProbe{ArgmaxStage::Early}, 32, 4);
  const auto late = run_probe(world, settings, ArgmaxProbe{ArgmaxStage::Late}, 32, 4);
  const auto m = static_cast<std::size_t>(DiversityMetric::TokenHamming);
  CHECK(std::abs(early.delta[m]) >= std::abs(late.delta[m]));
}

TEST_CASE("a single surviving code has no diversity") {
  const auto s = ratio_sweep(reference_world(), reference_settings(Strategy::MIM), {0.01},
                             SubsetPolicy::DropLeastFrequent, 12, 5);
  REQUIRE(s.rows.size() == 1);
  for (double v : s.rows[0].diversity) CHECK(v == 0.0);

  const auto e = enhancement_sweep(reference_world(), reference_settings(Strategy::MIM), {0.99}, 5, 12, 5);
  REQUIRE(e.rows.size() == 1);
  CHECK(e.rows[0].diversity[0] == 0.0);
}

TEST_CASE("mim diversity grows with the kept ratio") {
  const auto s = ratio_sweep(reference_world(), reference_settings(Strategy::MIM), {0.25, 0.5, 0.75, 1.0},
                             SubsetPolicy::DropLeastFrequent, 32, 6);
  REQUIRE(s.rows.size() == 4);
  for (std::size_t i = 1; i < s.rows.size(); ++i) CHECK(s.rows[i].diversity[0] >= s.rows[i - 1].diversity[0] - 0.02);
}

TEST_CASE("quality proxy edge cases") {
  const auto cfg = reference_config();
  const auto r = run_probe(cfg.world, settings_for(cfg, cfg.generators[1]), cfg.analysis.classify.subset, 16, 7);
  REQUIRE(cfg.generators[1]->strategy == Strategy::MIM);
  REQUIRE(r.baseline_quality);
  REQUIRE(r.intervened_quality);
  CHECK(r.intervened_quality->bits_per_token <= r.baseline_quality->bits_per_token);

  auto spec = make_spec(Strategy::AR, 2, 2, {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}});
  ExperimentSettings settings;
  settings.spec = spec;
  settings.prompts = {{"c0.f0", {cond()}}};
  const auto samples = collect_samples(settings, 6, 1);
  GroundTruth truth(*spec);
  const auto q = quality_proxy(samples, truth);
  CHECK(q.bits_per_token == 0.0);
  CHECK(q.unreachable == 0);
}

TEST_CASE("waterfall and interactions on flat and additive grids") {
  const std::vector<Factor> f = {Factor::Sampling, Factor::Prompt, Factor::Codebook};
  FactorialGrid flat(f), additive(f);
  for (std::size_t m = 0; m < 8; ++m) {
    flat.set(m, 0.4);
    additive.set(m, 0.3 + 0.1 * flat.level(m, Factor::Sampling) - 0.05 * flat.level(m, Factor::Prompt) +
                        0.2 * flat.level(m, Factor::Codebook));
  }
  const auto wf = waterfall(flat, flat.mask_of({1, 0, 1}), flat.mask_of({0, 1, 0}));
  for (const auto& e : wf.effects) CHECK(e.effect == 0.0);
  CHECK(wf.synergy_gap == 0.0);

  const auto wa = waterfall(additive, additive.mask_of({1, 0, 1}), additive.mask_of({0, 1, 0}));
  CHECK(std::abs(wa.synergy_gap) < 1e-12);
  for (const auto& p : interaction_profiles(additive, 0.01)) {
    for (const auto& e : p.effects) {
      CHECK_FALSE(e.crossover);
      CHECK(std::abs(e.interaction) < 1e-12);
    }
  }

  // same-sign effects of +0.1 and +0.02 are not a crossover
  FactorialGrid two({Factor::Sampling, Factor::Codebook});
  two.set({0, 0}, 0.0);
  two.set({1, 0}, 0.1);
  two.set({0, 1}, 0.5);
  two.set({1, 1}, 0.52);
  for (const auto& p : interaction_profiles(two, 0.05)) {
    for (const auto& e : p.effects) CHECK_FALSE(e.crossover);
  }
}

TEST_CASE("image similarity extremes") {
  Image c{8, 8, std::vector<double>(64, 0.3)};
  CHECK(ssim(c, c) == doctest::Approx(1.0));
  Image a{1, 2, {1.0, 0.0}}, b{1, 2, {0.0, 1.0}};
  CHECK(pixel_cosine_distance(a, b) == doctest::Approx(1.0));
}

TEST_CASE("empty probe list gives an empty probes array") {
  auto cfg = reference_config();
  cfg.probes.clear();
  const auto out = run_pipeline("probe", cfg);
  REQUIRE(out.summary.contains("probes"));
  CHECK(out.summary["probes"].empty());
  CHECK(out.ok);
}

TEST_CASE("csv and json carry the same numbers") {
  auto cfg = reference_config();
  cfg.n = 8;
  const auto out = run_pipeline("demo-archetypes", cfg);
  const auto summary = round_floats(out.summary);
  const auto it = std::find_if(out.tables.begin(), out.tables.end(),
                               [](const auto& t) { return t.first == "archetypes.csv"; });
  REQUIRE(it != out.tables.end());
  const CsvTable& table = it->second;
  const auto& header = table.header();
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  REQUIRE(table.rows() == summary["results"].size());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto& row = table.row(i);
    const auto& ev = summary["results"][i]["archetype"]["evidence"];
    for (const char* key : {"argmax_relative_drop", "subset_relative_drop", "argmax_intervened_diversity", "h_path"}) {
      CHECK(std::strtod(row[col(key)].c_str(), nullptr) == ev[key].get<double>());
    }
  }
}
