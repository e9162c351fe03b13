#include <algorithm>
#include <set>

#include "doctest.h"
#include "ibdiag/probes.hpp"
#include "ibdiag/reference.hpp"
#include "support.hpp"

using namespace ibdiag;
using namespace ibdiag::test;

namespace {

std::set<std::uint32_t> forms(const std::vector<Condition>& v) {
  std::set<std::uint32_t> out;
  for (const auto& c : v) out.insert(c.surface_form);
  return out;
}

}  // namespace

TEST_CASE("paraphrase sets exclude the original") {
  const auto w = small_world();
  const Condition x = w.find(0, 0);
  CHECK(forms(paraphrase_set(w, x, ParaphraseMode::Mixed, 3)) == std::set<std::uint32_t>{1, 2, 3});
  CHECK(forms(paraphrase_set(w, x, ParaphraseMode::Mixed, 4)) == std::set<std::uint32_t>{1, 2, 3, 4});
  CHECK(forms(paraphrase_set(w, x, ParaphraseMode::Short, 2)) == std::set<std::uint32_t>{1, 4});
  for (const auto& c : paraphrase_set(w, x, ParaphraseMode::Mixed, 4)) CHECK(c.semantic_class == 0);
  CHECK_THROWS(paraphrase_set(w, x, ParaphraseMode::Long, 2));
  CHECK_THROWS(paraphrase_set(w, x, ParaphraseMode::Mixed, 5));
}

TEST_CASE("pooled allocation") {
  CHECK(pooled_allocation(16, 5) == std::vector<std::size_t>{4, 3, 3, 3, 3});
  CHECK(pooled_allocation(10, 5) == std::vector<std::size_t>{2, 2, 2, 2, 2});
}

TEST_CASE("relative change") {
  CHECK(relative_change(0.5, 0.25) == doctest::Approx(-0.5));
  CHECK(relative_change(0.0, 0.0) == 0.0);
  CHECK(std::isinf(relative_change(0.0, 0.1)));
}

TEST_CASE("baseline settings use the first form of each class") {
  const auto w = small_world();
  auto spec = make_spec(Strategy::AR, 2, 4, uniform_rows(5, 4), w.conditions);
  const auto s = baseline_settings(w, spec);
  REQUIRE(s.prompts.size() == 2);
  CHECK(s.prompts[1].pooled.front().semantic_class == 1);
  CHECK(s.prompts[1].pooled.front().surface_form == 0);
}

TEST_CASE("subset probe only emits active codes") {
  const auto w = reference_world();
  for (Strategy st : {Strategy::AR, Strategy::MIM}) {
    auto base = with_usage(baseline_settings(w, reference_generator(st)), 3);
    for (auto policy : {SubsetPolicy::DropLeastFrequent, SubsetPolicy::DropMostFrequent, SubsetPolicy::DropRandom}) {
      const auto s = apply_probe(w, base, SubsetProbe{policy, 0.5, 1});
      REQUIRE(s.subset);
      CHECK(s.subset->active().size() == 4);
      for (const auto& ps : collect_samples(s, 16, 9)) {
        for (const auto& g : ps.grids) {
          for (auto t : g.tokens) CHECK(s.subset->is_active(t));
        }
      }
    }
  }
}

TEST_CASE("subset probe needs usage statistics") {
  const auto w = reference_world();
  const auto base = baseline_settings(w, reference_ar());
  CHECK_THROWS(apply_probe(w, base, SubsetProbe{}));
}

TEST_CASE("probes compose without touching the input") {
  const auto w = reference_world();
  const auto base = baseline_settings(w, reference_mim());
  const auto s = apply_probe(w, apply_probe(w, base, ArgmaxProbe{}), ParaphraseProbe{ParaphraseMode::Mixed, 5});
  CHECK(base.applied.empty());
  CHECK(s.applied.size() == 2);
  CHECK(std::holds_alternative<Argmax>(s.policy));
  REQUIRE(s.prompts.size() == 2);
  CHECK(s.prompts[0].pooled.size() == 5);
}

TEST_CASE("staged argmax needs three decisions") {
  const auto w = small_world();
  auto spec = make_spec(Strategy::DIFF, 1, 2, uniform_rows(2, 2), w.conditions);
  spec->steps = 2;
  spec->prior = {0.5, 0.5};
  const auto base = baseline_settings(w, spec);
  CHECK_THROWS_AS(apply_probe(w, base, ArgmaxProbe{ArgmaxStage::Early}), std::invalid_argument);
}

TEST_CASE("pooled samples follow the allocation") {
  const auto w = reference_world();
  const auto s = apply_probe(w, baseline_settings(w, reference_ar()), ParaphraseProbe{ParaphraseMode::Mixed, 3});
  const auto samples = collect_samples(s, 8, 1);
  REQUIRE(samples.size() == 2);
  std::vector<std::size_t> per(3, 0);
  for (auto g : samples[0].groups) ++per[g];
  CHECK(per == std::vector<std::size_t>{3, 3, 2});
}

TEST_CASE("collect samples is independent of thread count") {
  const auto w = reference_world();
  const auto s = baseline_settings(w, reference_diff());
  const auto a = collect_samples(s, 12, 4, 1);
  const auto b = collect_samples(s, 12, 4, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].grids == b[i].grids);
}

TEST_CASE("argmax probe on an autoregressive toy collapses diversity") {
  const auto w = reference_world();
  const auto r = run_probe(w, baseline_settings(w, reference_ar()), ArgmaxProbe{}, 16, 2);
  for (DiversityMetric m : kAllMetrics) CHECK(r.intervened.value(m) == 0.0);
  CHECK(r.relative_drop(DiversityMetric::TokenHamming) == doctest::Approx(1.0));
}

TEST_CASE("probe json round trip") {
  for (const ProbeSpec& p : {ProbeSpec{SubsetProbe{SubsetPolicy::DropRandom, 0.3, 4}}, ProbeSpec{ArgmaxProbe{ArgmaxStage::Late}},
                             ProbeSpec{ParaphraseProbe{ParaphraseMode::Long, 2}}}) {
    CHECK(describe(probe_from_json(nlohmann::json::parse(to_json(p).dump()))) == describe(p));
  }
}
