#include "ibdiag/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ibdiag/entropy.hpp"
#include "ibdiag/errors.hpp"

namespace ibdiag {

std::string to_string(Factor f) {
  switch (f) {
    case Factor::Sampling: return "sampling";
    case Factor::Prompt: return "prompt";
    case Factor::Codebook: return "codebook";
  }
  return "sampling";
}

Factor parse_factor(const std::string& s) {
  if (s == "sampling") return Factor::Sampling;
  if (s == "prompt") return Factor::Prompt;
  if (s == "codebook") return Factor::Codebook;
  throw ConfigError("unknown factor '" + s + "'");
}

std::string level_name(Factor f, int level) {
  static const char* names[3][2] = {
      {"stochastic", "argmax"}, {"original", "paraphrase_set"}, {"full", "subset"}};
  if (level != 0 && level != 1) throw std::invalid_argument("factor levels are 0 or 1");
  return names[static_cast<int>(f)][level];
}

std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::DiversityPrioritized: return "DiversityPrioritized";
    case Archetype::CompressionPrioritized: return "CompressionPrioritized";
    case Archetype::Decoupled: return "Decoupled";
    case Archetype::Unclassified: return "Unclassified";
  }
  return "Unclassified";
}

FactorialGrid::FactorialGrid(std::vector<Factor> factors) : factors_(std::move(factors)) {
  if (factors_.empty() || factors_.size() > 3) throw std::invalid_argument("a factorial grid needs 1 to 3 factors");
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    for (std::size_t j = i + 1; j < factors_.size(); ++j) {
      if (factors_[i] == factors_[j]) throw std::invalid_argument("factor " + to_string(factors_[i]) + " listed twice");
    }
  }
  values_.assign(std::size_t{1} << factors_.size(), 0.0);
  present_.assign(values_.size(), false);
}

void FactorialGrid::set(std::size_t mask, double value) {
  if (mask >= values_.size()) throw std::out_of_range("factorial cell out of range");
  values_[mask] = value;
  present_[mask] = true;
}

void FactorialGrid::set(const std::vector<int>& levels, double value) { set(mask_of(levels), value); }

double FactorialGrid::at(std::size_t mask) const {
  if (!has(mask)) throw std::invalid_argument("factorial cell " + cell_label(mask) + " is missing");
  return values_[mask];
}

bool FactorialGrid::complete() const {
  return std::all_of(present_.begin(), present_.end(), [](bool b) { return b; });
}

std::size_t FactorialGrid::mask_of(const std::vector<int>& levels) const {
  if (levels.size() != factors_.size()) throw std::invalid_argument("expected one level per factor");
  std::size_t mask = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] != 0 && levels[i] != 1) throw std::invalid_argument("factor levels are 0 or 1");
    if (levels[i]) mask |= std::size_t{1} << i;
  }
  return mask;
}

std::size_t FactorialGrid::position(Factor f) const {
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i] == f) return i;
  }
  throw std::invalid_argument("factor " + to_string(f) + " is not in the grid");
}

int FactorialGrid::level(std::size_t mask, Factor f) const {
  return static_cast<int>((mask >> position(f)) & 1U);
}

std::string FactorialGrid::cell_label(std::size_t mask) const {
  std::string out;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (i) out += "/";
    out += level_name(factors_[i], static_cast<int>((mask >> i) & 1U));
  }
  return out;
}

WaterfallReport waterfall(const FactorialGrid& grid, std::size_t baseline_cell, std::size_t final_cell) {
  const std::size_t all = grid.cell_count() - 1;
  if (baseline_cell > all || final_cell > all) throw std::invalid_argument("waterfall cell out of range");
  if ((baseline_cell ^ final_cell) != all) {
    throw std::invalid_argument("waterfall baseline and final cells must differ in every factor");
  }
  WaterfallReport w;
  w.baseline_cell = baseline_cell;
  w.final_cell = final_cell;
  w.baseline = grid.at(baseline_cell);
  w.actual = grid.at(final_cell);
  w.additive_prediction = w.baseline;
  const bool balanced = grid.complete();
  for (std::size_t i = 0; i < grid.factors().size(); ++i) {
    const std::size_t bit = std::size_t{1} << i;
    MainEffect e{grid.factors()[i]};
    e.effect = grid.at(baseline_cell ^ bit) - w.baseline;
    if (balanced) {
      double toward = 0.0, away = 0.0;
      for (std::size_t m = 0; m <= all; ++m) {
        if ((m & bit) == (final_cell & bit)) {
          toward += grid.at(m);
        } else {
          away += grid.at(m);
        }
      }
      e.balanced_effect = (toward - away) / static_cast<double>(grid.cell_count() / 2);
    } else {
      e.balanced_effect = std::numeric_limits<double>::quiet_NaN();
    }
    w.additive_prediction += e.effect;
    w.effects.push_back(e);
  }
  w.synergy_gap = w.actual - w.additive_prediction;
  return w;
}

std::vector<WaterfallStep> WaterfallReport::steps(const FactorialGrid& grid) const {
  std::vector<WaterfallStep> out;
  out.push_back({"baseline", baseline});
  double cum = baseline;
  for (const auto& e : effects) {
    cum += e.effect;
    out.push_back({"+" + to_string(e.factor) + ":" + level_name(e.factor, grid.level(final_cell, e.factor)), cum});
  }
  out.push_back({"additive_prediction", additive_prediction});
  out.push_back({"actual", actual});
  out.push_back({"synergy_gap", synergy_gap});
  return out;
}

std::vector<InteractionProfile> interaction_profiles(const FactorialGrid& grid, double epsilon) {
  if (!grid.complete()) throw std::invalid_argument("interaction profiles need every factorial cell");
  if (epsilon < 0.0) throw std::invalid_argument("epsilon must be non-negative");
  const std::size_t nf = grid.factors().size();
  std::vector<InteractionProfile> out;
  for (std::size_t f = 0; f < nf; ++f) {
    InteractionProfile prof{grid.factors()[f], {}};
    for (std::size_t g = 0; g < nf; ++g) {
      if (g == f) continue;
      ConditionalEffect ce{grid.factors()[g]};
      for (int lvl = 0; lvl < 2; ++lvl) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t m = 0; m < grid.cell_count(); ++m) {
          if (((m >> f) & 1U) != static_cast<std::size_t>(lvl) || ((m >> g) & 1U)) continue;
          sum += grid.at(m | (std::size_t{1} << g)) - grid.at(m);
          ++count;
        }
        ce.at_facet_level[lvl] = sum / static_cast<double>(count);
      }
      ce.interaction = (ce.at_facet_level[1] - ce.at_facet_level[0]) / 2.0;
      const double a = ce.at_facet_level[0];
      const double b = ce.at_facet_level[1];
      ce.crossover = ((a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0)) && std::abs(a) > epsilon &&
                     std::abs(b) > epsilon;
      prof.effects.push_back(ce);
    }
    out.push_back(std::move(prof));
  }
  return out;
}

ArchetypeLabel classify_archetype(const ProbeEvidence& evidence, double theta_big, double theta_small) {
  if (std::isnan(evidence.argmax_relative_drop) || std::isnan(evidence.subset_relative_drop)) {
    throw std::invalid_argument("classify_archetype: missing probe deltas");
  }
  ArchetypeLabel out;
  out.theta_big = theta_big;
  out.theta_small = theta_small;
  out.evidence = evidence;
  if (evidence.argmax_intervened_diversity == 0.0 && evidence.h_path <= 1e-12) {
    out.label = Archetype::CompressionPrioritized;
  } else if (evidence.argmax_relative_drop >= theta_big && evidence.subset_relative_drop >= theta_big) {
    out.label = Archetype::DiversityPrioritized;
  } else if (evidence.argmax_relative_drop <= theta_small && evidence.subset_relative_drop >= theta_big) {
    out.label = Archetype::Decoupled;
  } else {
    out.label = Archetype::Unclassified;
  }
  return out;
}

namespace {

double mean_path_entropy(const ExperimentSettings& settings) {
  const CodebookSubset subset = settings.active_subset();
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& prompt : settings.prompts) {
    for (const auto& x : prompt.pooled) {
      total += path_entropy(*settings.spec, x, settings.policy, subset);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

SweepRow measure_row(double parameter, const ExperimentSettings& settings, GroundTruth& truth, std::size_t n,
                     std::uint64_t seed, std::size_t jobs) {
  const auto samples = collect_samples(settings, n, seed, jobs);
  SweepRow row;
  row.parameter = parameter;
  row.diversity = pairwise_diversity(samples).values;
  row.quality = try_quality(samples, truth);
  return row;
}

void check_sorted_fractions(const std::vector<double>& v, bool allow_zero, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool ok = allow_zero ? (v[i] >= 0.0 && v[i] < 1.0) : (v[i] > 0.0 && v[i] <= 1.0);
    if (!ok) throw std::invalid_argument(std::string(what) + " out of range");
    if (i && v[i] < v[i - 1]) throw std::invalid_argument(std::string(what) + " must be sorted");
  }
}

}  // namespace

ArchetypeRun evaluate_archetype(const ToyWorld& world, const ExperimentSettings& settings,
                                const SubsetProbe& subset_probe, std::size_t n, std::uint64_t seed,
                                double theta_big, double theta_small, std::size_t jobs) {
  const ExperimentSettings base = with_usage(settings, seed, jobs);
  ArchetypeRun run{run_probe(world, base, ArgmaxProbe{ArgmaxStage::All}, n, seed, jobs),
                   run_probe(world, base, subset_probe, n, seed, jobs),
                   {}};
  ProbeEvidence ev;
  ev.argmax_relative_drop = run.argmax.relative_drop(DiversityMetric::TokenHamming);
  ev.subset_relative_drop = run.subset.relative_drop(DiversityMetric::TokenHamming);
  ev.argmax_intervened_diversity = run.argmax.intervened.value(DiversityMetric::TokenHamming);
  ev.h_path = mean_path_entropy(base);
  run.label = classify_archetype(ev, theta_big, theta_small);
  return run;
}

SweepResult ratio_sweep(const ToyWorld& world, const ExperimentSettings& settings,
                        const std::vector<double>& ratios, SubsetPolicy policy, std::size_t n,
                        std::uint64_t seed, std::size_t jobs) {
  check_sorted_fractions(ratios, false, "subset ratios");
  const ExperimentSettings base = with_usage(settings, seed, jobs);
  GroundTruth truth(*base.spec);
  SweepResult out;
  out.strategy = to_string(policy);
  out.parameter_name = "kept_ratio";
  out.baseline = measure_row(1.0, base, truth, n, seed, jobs);
  for (double r : ratios) {
    const ExperimentSettings s = apply_probe(world, base, SubsetProbe{policy, r, 0});
    out.rows.push_back(measure_row(r, s, truth, n, seed, jobs));
  }
  return out;
}

SweepResult enhancement_sweep(const ToyWorld& world, const ExperimentSettings& settings,
                              const std::vector<double>& drop_fractions, std::size_t k_paraphrases,
                              std::size_t n, std::uint64_t seed, std::size_t jobs) {
  check_sorted_fractions(drop_fractions, true, "drop fractions");
  if (k_paraphrases == 1) throw std::invalid_argument("paraphrase sets need k >= 2 (0 disables them)");
  const ExperimentSettings base = with_usage(settings, seed, jobs);
  GroundTruth truth(*base.spec);
  SweepResult out;
  out.strategy = k_paraphrases ? "drop_most_frequent+mixed_" + std::to_string(k_paraphrases)
                               : "drop_most_frequent";
  out.parameter_name = "drop_fraction";
  out.baseline = measure_row(0.0, base, truth, n, seed, jobs);
  for (double f : drop_fractions) {
    ExperimentSettings s = apply_probe(world, base, SubsetProbe{SubsetPolicy::DropMostFrequent, 1.0 - f, 0});
    if (k_paraphrases) s = apply_probe(world, s, ParaphraseProbe{ParaphraseMode::Mixed, k_paraphrases});
    out.rows.push_back(measure_row(f, s, truth, n, seed, jobs));
  }
  return out;
}

FactorialGrid measure_factorial(const ToyWorld& world, const ExperimentSettings& settings,
                                const std::vector<Factor>& factors, const SubsetProbe& subset_probe,
                                const ParaphraseProbe& paraphrase_probe, DiversityMetric metric,
                                std::size_t n, std::uint64_t seed, std::size_t jobs) {
  FactorialGrid grid(factors);
  const ExperimentSettings base = with_usage(settings, seed, jobs);
  for (std::size_t mask = 0; mask < grid.cell_count(); ++mask) {
    ExperimentSettings s = base;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (!((mask >> i) & 1U)) continue;
      switch (factors[i]) {
        case Factor::Sampling: s = apply_probe(world, s, ArgmaxProbe{ArgmaxStage::All}); break;
        case Factor::Prompt: s = apply_probe(world, s, paraphrase_probe); break;
        case Factor::Codebook: s = apply_probe(world, s, subset_probe); break;
      }
    }
    grid.set(mask, pairwise_diversity(collect_samples(s, n, seed, jobs)).value(metric));
  }
  return grid;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

nlohmann::ordered_json to_json(const FactorialGrid& g) {
  nlohmann::ordered_json doc;
  auto factors = nlohmann::ordered_json::array();
  for (Factor f : g.factors()) factors.push_back(to_string(f));
  doc["factors"] = std::move(factors);
  auto cells = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < g.cell_count(); ++m) {
    nlohmann::ordered_json cell;
    cell["cell"] = g.cell_label(m);
    auto levels = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.factors().size(); ++i) levels.push_back((m >> i) & 1U);
    cell["levels"] = std::move(levels);
    cell["value"] = g.has(m) ? nlohmann::ordered_json(g.at(m)) : nlohmann::ordered_json();
    cells.push_back(std::move(cell));
  }
  doc["cells"] = std::move(cells);
  return doc;
}

nlohmann::ordered_json to_json(const WaterfallReport& w, const FactorialGrid& g) {
  nlohmann::ordered_json doc;
  doc["baseline_cell"] = g.cell_label(w.baseline_cell);
  doc["final_cell"] = g.cell_label(w.final_cell);
  doc["baseline"] = w.baseline;
  auto effects = nlohmann::ordered_json::array();
  for (const auto& e : w.effects) {
    effects.push_back({{"factor", to_string(e.factor)},
                       {"effect", e.effect},
                       {"balanced_effect", number_or_null(e.balanced_effect)}});
  }
  doc["effects"] = std::move(effects);
  doc["additive_prediction"] = w.additive_prediction;
  doc["actual"] = w.actual;
  doc["synergy_gap"] = w.synergy_gap;
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : w.steps(g)) steps.push_back({{"step", s.label}, {"value", s.value}});
  doc["steps"] = std::move(steps);
  return doc;
}

nlohmann::ordered_json to_json(const InteractionProfile& p) {
  nlohmann::ordered_json doc;
  doc["facet"] = to_string(p.facet);
  auto effects = nlohmann::ordered_json::array();
  for (const auto& e : p.effects) {
    effects.push_back({{"factor", to_string(e.factor)},
                       {"at_" + level_name(p.facet, 0), e.at_facet_level[0]},
                       {"at_" + level_name(p.facet, 1), e.at_facet_level[1]},
                       {"interaction", e.interaction},
                       {"crossover", e.crossover}});
  }
  doc["effects"] = std::move(effects);
  return doc;
}

nlohmann::ordered_json to_json(const ArchetypeLabel& a) {
  return {{"label", to_string(a.label)},
          {"theta_big", a.theta_big},
          {"theta_small", a.theta_small},
          {"evidence",
           {{"argmax_relative_drop", number_or_null(a.evidence.argmax_relative_drop)},
            {"subset_relative_drop", number_or_null(a.evidence.subset_relative_drop)},
            {"argmax_intervened_diversity", a.evidence.argmax_intervened_diversity},
            {"h_path", a.evidence.h_path}}}};
}

namespace {

nlohmann::ordered_json to_json(const SweepRow& r, const std::string& parameter_name) {
  nlohmann::ordered_json row;
  row[parameter_name] = r.parameter;
  for (DiversityMetric m : kAllMetrics) row[to_string(m)] = r.diversity[static_cast<std::size_t>(m)];
  row["quality"] = r.quality ? to_json(*r.quality) : nlohmann::ordered_json();
  return row;
}

}  // namespace

nlohmann::ordered_json to_json(const SweepResult& s) {
  nlohmann::ordered_json doc;
  doc["strategy"] = s.strategy;
  doc["parameter"] = s.parameter_name;
  doc["baseline"] = s.baseline ? to_json(*s.baseline, s.parameter_name) : nlohmann::ordered_json();
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : s.rows) rows.push_back(to_json(r, s.parameter_name));
  doc["rows"] = std::move(rows);
  return doc;
}

}  // namespace ibdiag
