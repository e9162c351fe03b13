#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ibdiag/metrics.hpp"
#include "ibdiag/probes.hpp"
#include "json.hpp"

namespace ibdiag {

// Two-level experimental factors. Level 0 / level 1:
//   Sampling  Stochastic / Argmax
//   Prompt    Original   / ParaphraseSet
//   Codebook  Full       / Subset
enum class Factor { Sampling, Prompt, Codebook };

std::string to_string(Factor f);
Factor parse_factor(const std::string& s);
std::string level_name(Factor f, int level);

// Cell values indexed by a bitmask: bit i holds the level of factors[i].
class FactorialGrid {
 public:
  explicit FactorialGrid(std::vector<Factor> factors);

  const std::vector<Factor>& factors() const { return factors_; }
  std::size_t cell_count() const { return values_.size(); }

  void set(std::size_t mask, double value);
  // Levels listed in factor order.
  void set(const std::vector<int>& levels, double value);
  double at(std::size_t mask) const;
  bool has(std::size_t mask) const { return mask < present_.size() && present_[mask]; }
  bool complete() const;
  std::size_t mask_of(const std::vector<int>& levels) const;
  int level(std::size_t mask, Factor f) const;
  std::size_t position(Factor f) const;
  std::string cell_label(std::size_t mask) const;

 private:
  std::vector<Factor> factors_;
  std::vector<double> values_;
  std::vector<bool> present_;
};

struct MainEffect {
  Factor factor;
  double effect = 0.0;           // single flip from the baseline cell
  double balanced_effect = 0.0;  // mean(final level) - mean(baseline level) over all cells
};

struct WaterfallStep {
  std::string label;
  double value = 0.0;  // cumulative
};

struct WaterfallReport {
  std::size_t baseline_cell = 0;
  std::size_t final_cell = 0;
  double baseline = 0.0;
  std::vector<MainEffect> effects;
  double additive_prediction = 0.0;
  double actual = 0.0;
  double synergy_gap = 0.0;

  // Baseline, one cumulative step per factor, additive prediction, actual final, gap.
  std::vector<WaterfallStep> steps(const FactorialGrid& grid) const;
};

// Cumulative single-factor effects from `baseline_cell` toward `final_cell`.
// The two cells must differ in every factor; the grid must be complete.
WaterfallReport waterfall(const FactorialGrid& grid, std::size_t baseline_cell, std::size_t final_cell);

struct ConditionalEffect {
  Factor factor;
  std::array<double, 2> at_facet_level{};  // effect of level 0 -> 1, averaged over the rest
  double interaction = 0.0;                // (at_facet_level[1] - at_facet_level[0]) / 2
  bool crossover = false;
};

struct InteractionProfile {
  Factor facet;
  std::vector<ConditionalEffect> effects;
};

// Crossover: the conditional effect changes sign across facet levels and
// both magnitudes exceed epsilon.
std::vector<InteractionProfile> interaction_profiles(const FactorialGrid& grid, double epsilon);

enum class Archetype { DiversityPrioritized, CompressionPrioritized, Decoupled, Unclassified };

std::string to_string(Archetype a);

struct ProbeEvidence {
  double argmax_relative_drop = 0.0;
  double subset_relative_drop = 0.0;
  double argmax_intervened_diversity = 0.0;
  double h_path = 0.0;
};

struct ArchetypeLabel {
  Archetype label = Archetype::Unclassified;
  double theta_big = 0.2;
  double theta_small = 0.05;
  ProbeEvidence evidence;
};

inline constexpr double kThetaBig = 0.2;
inline constexpr double kThetaSmall = 0.05;

// Rules in order: argmax diversity exactly 0 with zero path entropy ->
// CompressionPrioritized; both drops >= theta_big -> DiversityPrioritized;
// argmax drop <= theta_small with subset drop >= theta_big -> Decoupled.
ArchetypeLabel classify_archetype(const ProbeEvidence& evidence, double theta_big = kThetaBig,
                                  double theta_small = kThetaSmall);

struct ArchetypeRun {
  ProbeResult argmax;
  ProbeResult subset;
  ArchetypeLabel label;
};

// Runs the Argmax{All} and Subset probes on the headline metric and classifies.
ArchetypeRun evaluate_archetype(const ToyWorld& world, const ExperimentSettings& settings,
                                const SubsetProbe& subset_probe, std::size_t n, std::uint64_t seed,
                                double theta_big = kThetaBig, double theta_small = kThetaSmall,
                                std::size_t jobs = 1);

struct SweepRow {
  double parameter = 0.0;  // kept ratio (ratio sweeps) or drop fraction (enhancement)
  MetricValues diversity{};
  std::optional<QualityProxy> quality;
};

struct SweepResult {
  std::string strategy;
  std::string parameter_name;
  std::optional<SweepRow> baseline;
  std::vector<SweepRow> rows;
};

SweepResult ratio_sweep(const ToyWorld& world, const ExperimentSettings& settings,
                        const std::vector<double>& ratios, SubsetPolicy policy, std::size_t n,
                        std::uint64_t seed, std::size_t jobs = 1);

// Per drop fraction f: DropMostFrequent keeping 1 - f, plus pooled Mixed
// paraphrases when k_paraphrases >= 2 (0 disables paraphrasing).
SweepResult enhancement_sweep(const ToyWorld& world, const ExperimentSettings& settings,
                              const std::vector<double>& drop_fractions, std::size_t k_paraphrases,
                              std::size_t n, std::uint64_t seed, std::size_t jobs = 1);

// Measures every cell of a factorial design on one metric. Level 1 applies
// Argmax{All}, the paraphrase probe, or the subset probe respectively.
FactorialGrid measure_factorial(const ToyWorld& world, const ExperimentSettings& settings,
                                const std::vector<Factor>& factors, const SubsetProbe& subset_probe,
                                const ParaphraseProbe& paraphrase_probe, DiversityMetric metric,
                                std::size_t n, std::uint64_t seed, std::size_t jobs = 1);

nlohmann::ordered_json to_json(const FactorialGrid& g);
nlohmann::ordered_json to_json(const WaterfallReport& w, const FactorialGrid& g);
nlohmann::ordered_json to_json(const InteractionProfile& p);
nlohmann::ordered_json to_json(const ArchetypeLabel& a);
nlohmann::ordered_json to_json(const SweepResult& s);

}  // namespace ibdiag
