// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance <configs dir> [ibdiag binary]
//
// Exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ibdiag/analysis.hpp"
#include "ibdiag/config.hpp"
#include "ibdiag/entropy.hpp"
#include "ibdiag/metrics.hpp"
#include "ibdiag/pipeline.hpp"
#include "ibdiag/reference.hpp"
#include "ibdiag/rng.hpp"

using namespace ibdiag;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double log2_binom(std::size_t n, std::size_t k) {
  double r = 0.0;
  for (std::size_t i = 1; i <= k; ++i) r += std::log2(static_cast<double>(n - k + i) / static_cast<double>(i));
  return r;
}

std::vector<WeightedCondition> prior_of(const RandomCase& rc) {
  std::vector<WeightedCondition> out;
  for (std::size_t i = 0; i < rc.conditions.size(); ++i) out.push_back({rc.conditions[i], rc.weights[i]});
  return out;
}

constexpr std::uint64_t kSeed = 20240917;
constexpr std::size_t kCasesPerStrategy = 34;

Verdict entropy_identity() {
  const auto t0 = Clock::now();
  std::size_t specs = 0;
  std::size_t bad_shape = 0;
  double worst = 0.0;
  const SamplingPolicy policies[] = {Stochastic{1.0}, Stochastic{0.7}, Argmax{}};
  for (Strategy s : {Strategy::AR, Strategy::MIM, Strategy::DIFF}) {
    for (std::size_t i = 0; i < kCasesPerStrategy; ++i) {
      const auto rc = random_case(derive_seed(kSeed, {1, static_cast<std::uint64_t>(s), i}), s);
      const auto& spec = *rc.spec;
      if (spec.codes() > 8 || spec.tokens() > 4 || (s != Strategy::AR && spec.steps > 4)) ++bad_shape;
      ++specs;
      for (const auto& policy : policies) {
        const auto r = decompose(spec, prior_of(rc), policy, CodebookSubset::full(spec.codebook));
        worst = std::max(worst, std::abs(r.h_z_given_x - (r.h_path + r.h_exec - r.h_residual)));
      }
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = specs >= 100 && bad_shape == 0 && worst < 1e-9 && secs < 60.0;
  v.detail = std::to_string(specs) + " specs x 3 policies, max |residual| " + fmt("%.2e", worst) + ", " +
             fmt("%.1f", secs) + " s";
  return v;
}

ExperimentSettings direct_settings(std::shared_ptr<const GeneratorSpec> spec, const std::vector<Condition>& conds) {
  ExperimentSettings s;
  s.spec = std::move(spec);
  for (const auto& x : conds) s.prompts.push_back({condition_label(x), {x}});
  s.policy = Argmax{};
  return s;
}

Verdict ar_signature() {
  std::size_t specs = 0;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < kCasesPerStrategy; ++i) {
    const auto rc = random_case(derive_seed(kSeed, {2, i}), Strategy::AR);
    ++specs;
    const auto full = CodebookSubset::full(rc.spec->codebook);
    for (const auto& x : rc.conditions) {
      if (conditional_entropies(enumerate_outcomes(*rc.spec, x, Stochastic{}, full)).h_path != 0.0) ++violations;
    }
    const auto div = pairwise_diversity(collect_samples(direct_settings(rc.spec, rc.conditions), 8, i));
    for (DiversityMetric m : kAllMetrics) {
      if (div.value(m) != 0.0) ++violations;
    }
  }
  const auto world = reference_world();
  const auto ref = reference_ar();
  const auto run = run_probe(world, baseline_settings(world, ref), ArgmaxProbe{}, 64, kSeed);
  ++specs;
  for (DiversityMetric m : kAllMetrics) {
    if (run.intervened.value(m) != 0.0) ++violations;
  }
  for (const auto& x : world.conditions) {
    if (path_entropy(*ref, x, Stochastic{}, CodebookSubset::full(ref->codebook)) != 0.0) ++violations;
  }
  return {violations == 0,
          std::to_string(specs) + " AR specs, H_path and argmax diversity exactly 0 (" + std::to_string(violations) +
              " violations)"};
}

Verdict mim_path() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t i = 0; checked < kCasesPerStrategy && i < 10 * kCasesPerStrategy; ++i) {
    const auto rc = random_case(derive_seed(kSeed, {3, i}), Strategy::MIM);
    if (rc.spec->unmask != UnmaskMode::Uniform) continue;
    ++checked;
    const double closed = mim_path_entropy(*rc.spec);
    // independent oracle from the reveal counts
    double oracle = 0.0;
    std::size_t left = rc.spec->tokens();
    for (std::size_t k : unmask_counts(*rc.spec)) {
      oracle += log2_binom(left, k);
      left -= k;
    }
    worst = std::max(worst, std::abs(closed - oracle));
    for (const auto& x : rc.conditions) {
      const auto e = conditional_entropies(
          enumerate_outcomes(*rc.spec, x, Stochastic{}, CodebookSubset::full(rc.spec->codebook)));
      worst = std::max(worst, std::abs(closed - e.h_path));
    }
  }
  // three tokens, one per step: 3! equiprobable orders
  const double three = mim_path_entropy(std::vector<std::size_t>{1, 1, 1});
  const double err3 = std::abs(three - std::log2(6.0));
  return {checked >= 20 && worst < 1e-9 && err3 < 1e-12,
          std::to_string(checked) + " uniform-unmask specs, max |closed - enumerated| " + fmt("%.2e", worst) +
              "; N=3 one-per-step " + fmt("%.6f", three) + " bits"};
}

Verdict diffusion_path() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < kCasesPerStrategy; ++i) {
    const auto rc = random_case(derive_seed(kSeed, {4, i}), Strategy::DIFF);
    const auto full = CodebookSubset::full(rc.spec->codebook);
    for (const SamplingPolicy& policy : {SamplingPolicy{Stochastic{}}, SamplingPolicy{Argmax{}}}) {
      for (const auto& x : rc.conditions) {
        const auto e = conditional_entropies(enumerate_outcomes(*rc.spec, x, policy, full));
        worst = std::max(worst, std::abs(diffusion_path_entropy(*rc.spec, x, policy) - e.h_path));
        ++checked;
      }
    }
  }
  // one-hot transitions: the path is fixed by z_T
  auto spec = std::make_shared<GeneratorSpec>();
  spec->name = spec->seed_label = "one-hot";
  spec->strategy = Strategy::DIFF;
  spec->grid_side = 2;
  spec->codebook = std::make_shared<const Codebook>(Codebook::fsq({3}));
  spec->steps = 3;
  spec->prior = {0.5, 0.3, 0.2};
  const Condition x{0, 0, LengthTag::Medium};
  spec->tables.emplace(key_of(x), CategoricalTable(std::vector<std::vector<double>>{{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}));
  spec->validate();
  const auto outcomes = enumerate_outcomes(*spec, x, Stochastic{}, CodebookSubset::full(spec->codebook));
  std::map<std::vector<std::uint32_t>, double> z_t;
  for (const auto& o : outcomes) {
    z_t[std::vector<std::uint32_t>(o.path_key.begin(), o.path_key.begin() + 4)] += o.probability;
  }
  double h_zt = 0.0;
  for (const auto& [k, p] : z_t) h_zt -= p * std::log2(p);
  const double per_token = -(0.5 * std::log2(0.5) + 0.3 * std::log2(0.3) + 0.2 * std::log2(0.2));
  const double closed = diffusion_path_entropy(*spec, x);
  const double enumerated = conditional_entropies(outcomes).h_path;
  const bool onehot = closed == 4.0 * per_token || std::abs(closed - 4.0 * per_token) < 1e-12;
  const bool onehot_enum = std::abs(enumerated - h_zt) < 1e-12;
  return {worst < 1e-9 && onehot && onehot_enum,
          std::to_string(checked) + " (spec, policy, condition) checks, max |chain - enumerated| " +
              fmt("%.2e", worst) + "; one-hot case " + fmt("%.9f", closed) + " = H(z_T) " + fmt("%.9f", h_zt)};
}

Verdict quantizers() {
  Rng rng(derive_seed(kSeed, 5));
  std::size_t bad = 0;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::size_t> levels(1 + rng.next() % 4);
    std::size_t product = 1;
    for (auto& l : levels) {
      l = 2 + rng.next() % 7;
      product *= l;
    }
    if (Codebook::fsq(levels).size() != product) ++bad;
  }
  for (std::size_t d = 1; d <= 10; ++d) {
    const auto lfq = Codebook::lfq(d).flat_entries();
    const auto fsq = Codebook::fsq(std::vector<std::size_t>(d, 2)).flat_entries();
    if (lfq.size() != fsq.size() || std::memcmp(lfq.data(), fsq.data(), lfq.size() * sizeof(double)) != 0) ++bad;
  }
  double worst = 0.0;
  for (std::size_t d = 1; d <= 10; ++d) {
    const auto cb = Codebook::bsq(d);
    for (std::size_t k = 0; k < cb.size(); ++k) {
      double n2 = 0.0;
      for (double v : cb.entry(k)) n2 += v * v;
      worst = std::max(worst, std::abs(std::sqrt(n2) - 1.0));
    }
  }
  return {bad == 0 && worst < 1e-9, "20 FSQ sizes, LFQ(1..10) bit-identical to FSQ([2]^d), BSQ max |norm - 1| " +
                                        fmt("%.1e", worst) + " (" + std::to_string(bad) + " mismatches)"};
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol + 1e-12; }

Verdict waterfall_arithmetic(const fs::path& configs) {
  // stated to three decimals; half a unit in the last place
  constexpr double kRound = 0.0005;
  const std::vector<Factor> three{Factor::Sampling, Factor::Prompt, Factor::Codebook};
  std::vector<std::string> notes;
  bool ok = true;

  FactorialGrid vq(three);
  vq.set({1, 0, 1}, 0.755);
  vq.set({0, 0, 1}, 0.755 + 0.005);
  vq.set({1, 1, 1}, 0.755 - 0.003);
  vq.set({1, 0, 0}, 0.755 + 0.080);
  vq.set({0, 1, 0}, 0.837);
  const auto wv = waterfall(vq, vq.mask_of({1, 0, 1}), vq.mask_of({0, 1, 0}));
  ok = ok && near(wv.additive_prediction, 0.837, kRound) && near(wv.synergy_gap, 0.0, kRound);
  notes.push_back("VQ-Diffusion " + fmt("%.3f", wv.additive_prediction) + " gap " + fmt("%+.3f", wv.synergy_gap));

  FactorialGrid am(three);
  am.set({1, 0, 1}, 0.600);
  am.set({0, 0, 1}, 0.610);
  am.set({1, 1, 1}, 0.612);
  am.set({1, 0, 0}, 0.611);
  am.set({0, 1, 0}, 0.634);
  const auto wa = waterfall(am, am.mask_of({1, 0, 1}), am.mask_of({0, 1, 0}));
  ok = ok && near(wa.additive_prediction, 0.633, kRound) && near(wa.actual, 0.634, kRound) &&
       near(wa.synergy_gap, 0.001, kRound);
  notes.push_back("aMUSEd " + fmt("%.3f", wa.additive_prediction) + " vs " + fmt("%.3f", wa.actual) + " gap " +
                  fmt("%+.3f", wa.synergy_gap));

  FactorialGrid ll({Factor::Prompt, Factor::Codebook});
  ll.set({0, 1}, 0.577);
  ll.set({1, 1}, 0.577 + 0.080);
  ll.set({0, 0}, 0.577 + 0.025);
  ll.set({1, 0}, 0.681);
  const auto wl = waterfall(ll, ll.mask_of({0, 1}), ll.mask_of({1, 0}));
  ok = ok && near(wl.additive_prediction, 0.681, 0.001);
  notes.push_back("LlamaGen " + fmt("%.3f", wl.additive_prediction));

  // the shipped caption config must give the same numbers
  try {
    const auto out = run_pipeline("waterfall", load_config(configs / "waterfall_captions.json"));
    const auto& given = out.summary.at("given");
    const double expect[3][2] = {{wv.additive_prediction, wv.synergy_gap},
                                 {wa.additive_prediction, wa.synergy_gap},
                                 {wl.additive_prediction, wl.synergy_gap}};
    ok = ok && given.size() == 3;
    for (std::size_t i = 0; ok && i < 3; ++i) {
      const auto& w = given[i].at("waterfall");
      ok = near(w.at("additive_prediction").get<double>(), expect[i][0], 1e-12) &&
           near(w.at("synergy_gap").get<double>(), expect[i][1], 1e-12);
    }
    notes.push_back("shipped config agrees");
  } catch (const std::exception& e) {
    ok = false;
    notes.push_back(std::string("shipped config: ") + e.what());
  }
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return {ok, detail};
}

Verdict archetypes() {
  const auto t0 = Clock::now();
  const auto cfg = reference_config();
  const std::map<std::string, Archetype> want = {{"reference-ar", Archetype::CompressionPrioritized},
                                                 {"reference-mim", Archetype::DiversityPrioritized},
                                                 {"reference-diff", Archetype::Decoupled}};
  bool ok = true;
  std::string detail;
  for (const auto& spec : cfg.generators) {
    const auto run = evaluate_archetype(cfg.world, settings_for(cfg, spec), cfg.analysis.classify.subset, 64, cfg.seed);
    const auto& ev = run.label.evidence;
    ok = ok && run.label.label == want.at(spec->name);
    if (run.label.label == Archetype::Decoupled) {
      ok = ok && ev.argmax_relative_drop <= 0.05 && ev.subset_relative_drop >= 0.2;
    }
    detail += (detail.empty() ? "" : "; ") + spec->name + " " + to_string(run.label.label) + " (argmax " +
              fmt("%.3f", ev.argmax_relative_drop) + ", subset " + fmt("%.3f", ev.subset_relative_drop) + ")";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  return {ok, detail + ", " + fmt("%.1f", secs) + " s"};
}

Verdict enhancement() {
  const auto world = reference_world();
  const auto base = with_usage(baseline_settings(world, reference_mim()), kSeed);
  int up = 0, down = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto sweep = enhancement_sweep(world, base, {0.2}, 5, 64, seed);
    const double b = sweep.baseline->diversity[0];
    const double e = sweep.rows.front().diversity[0];
    const auto least = run_probe(world, base, SubsetProbe{SubsetPolicy::DropLeastFrequent, 0.5}, 64, seed);
    const double l = least.intervened.value(DiversityMetric::TokenHamming);
    up += e > b;
    down += l < least.baseline.value(DiversityMetric::TokenHamming);
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " base " + fmt("%.3f", b) +
              " enhanced " + fmt("%.3f", e) + " drop-least " + fmt("%.3f", l);
  }
  return {up >= 2 && down >= 2, detail};
}

Verdict protocol() {
  bool ok = true;
  const auto cb = Codebook::fsq({5});
  for (std::size_t n : {2, 3, 16}) {
    PromptSamples p;
    p.prompt = "same";
    for (std::size_t i = 0; i < n; ++i) {
      TokenGrid g{2, {4, 1, 0, 3}};
      p.images.push_back(decode(g, cb));
      p.grids.push_back(g);
      p.groups.push_back(0);
      p.conditions.push_back({0, 0, LengthTag::Medium});
    }
    const auto r = pairwise_diversity({p});
    ok = ok && r.pair_count == n * (n - 1) / 2;
    for (DiversityMetric m : kAllMetrics) ok = ok && r.value(m) == 0.0;
  }
  Rng rng(derive_seed(kSeed, 9));
  double worst = 0.0;
  for (std::size_t side : {2, 7, 8, 12}) {
    Image a{side, side, std::vector<double>(side * side)};
    for (auto& v : a.pixels) v = to_unit(rng.next());
    worst = std::max(worst, std::abs(ssim(a, a) - 1.0));
  }
  const double cos = pixel_cosine_distance(Image{1, 2, {1.0, 0.0}}, Image{1, 2, {1.0, 1.0}});
  const double cos_err = std::abs(cos - (1.0 - 1.0 / std::sqrt(2.0)));
  ok = ok && worst < 1e-12 && cos_err < 1e-9;
  return {ok, "identical samples give 0 on every metric, n(n-1)/2 pairs, max |SSIM(a,a) - 1| " + fmt("%.1e", worst) +
                  ", cosine example error " + fmt("%.1e", cos_err)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism(const std::string& cli) {
  auto cfg = reference_config();
  cfg.n = 16;
  std::size_t compared = 0;
  bool ok = true;
  for (const auto& name : kPipelines) {
    const auto a = run_pipeline(name, cfg);
    const auto b = run_pipeline(name, cfg);
    ok = ok && render_json(a.summary) == render_json(b.summary) && a.tables.size() == b.tables.size();
    for (std::size_t i = 0; ok && i < a.tables.size(); ++i) ok = a.tables[i].second.render(cfg.seed) == b.tables[i].second.render(cfg.seed);
    ++compared;
  }
  std::string detail = std::to_string(compared) + " pipelines rerun in process";
  if (!cli.empty()) {
    const fs::path root = fs::temp_directory_path() / ("ibdiag_accept_" + std::to_string(kSeed));
    fs::remove_all(root);
    std::size_t files = 0;
    for (const char* pipe : {"demo-archetypes", "audit"}) {
      for (const char* run : {"a", "b"}) {
        const std::string cmd = "\"" + cli + "\" run " + pipe + " -n 16 --seed 3 --jobs 2 --out \"" +
                                (root / run / pipe).string() + "\" > /dev/null";
        ok = ok && std::system(cmd.c_str()) == 0;
      }
      for (const auto& entry : fs::directory_iterator(root / "a" / pipe)) {
        const auto other = root / "b" / pipe / entry.path().filename();
        ok = ok && fs::exists(other) && slurp(entry.path()) == slurp(other);
        ++files;
      }
    }
    fs::remove_all(root);
    detail += ", " + std::to_string(files) + " CLI output files byte-identical";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path configs = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
  const std::string cli = argc > 2 ? argv[2] : "";
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"entropy identity", entropy_identity},
      {"AR signature", ar_signature},
      {"MIM path entropy", mim_path},
      {"diffusion path entropy", diffusion_path},
      {"quantizer invariants", quantizers},
      {"waterfall arithmetic", [&] { return waterfall_arithmetic(configs); }},
      {"archetype reproduction", archetypes},
      {"enhancement direction", enhancement},
      {"protocol correctness", protocol},
      {"determinism", [&] { return determinism(cli); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
