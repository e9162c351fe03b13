#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ibdiag/analysis.hpp"
#include "ibdiag/generation.hpp"
#include "ibdiag/probes.hpp"
#include "json.hpp"

namespace ibdiag {

struct ClassifyRequest {
  SubsetProbe subset;
  double theta_big = kThetaBig;
  double theta_small = kThetaSmall;
};

struct SweepRequest {
  std::vector<double> ratios;
  SubsetPolicy policy = SubsetPolicy::DropLeastFrequent;
};

struct EnhanceRequest {
  std::vector<double> drop_fractions;
  std::size_t k = 5;
};

// Externally supplied cell values, e.g. numbers read off published figures.
struct GivenGrid {
  std::string name;
  FactorialGrid grid;
  std::size_t baseline_cell = 0;
  std::size_t final_cell = 0;
  double epsilon = 0.0;
};

struct WaterfallRequest {
  bool measure = true;
  std::vector<Factor> factors{Factor::Sampling, Factor::Prompt, Factor::Codebook};
  std::vector<int> baseline{0, 0, 0};
  std::vector<int> final{1, 1, 1};
  double epsilon = 0.01;
  DiversityMetric metric = DiversityMetric::TokenHamming;
  SubsetProbe subset;
  ParaphraseProbe paraphrase;
  std::vector<GivenGrid> grids;
};

struct AnalysisRequests {
  ClassifyRequest classify;
  std::optional<SweepRequest> sweep;
  std::optional<EnhanceRequest> enhance;
  std::optional<WaterfallRequest> waterfall;
};

struct ExperimentConfig {
  ToyWorld world;
  std::vector<std::shared_ptr<const GeneratorSpec>> generators;
  std::vector<ProbeSpec> probes;
  AnalysisRequests analysis;
  std::size_t n = 16;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  double beta = 1.0;
  std::size_t validation_samples = kDefaultValidationSamples;
  std::size_t jobs = 1;
};

// The shipped schema text.
const std::string& experiment_schema_text();
const nlohmann::json& experiment_schema();

// Throws ConfigError listing every schema violation with its JSON pointer.
void check_schema(const nlohmann::json& doc);

nlohmann::ordered_json world_to_json(const ToyWorld& w);
ToyWorld world_from_json(const nlohmann::json& doc);

nlohmann::ordered_json generator_to_json(const GeneratorSpec& spec);
// `base_dir` resolves a relative "tables_file".
GeneratorSpec generator_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

// Schema check, then semantic checks: every generator validates and has a
// table for every world condition.
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

// World, the three reference generators and default analysis requests.
ExperimentConfig reference_config();

// Published waterfall cell values as given grids; nothing is measured.
ExperimentConfig caption_config();

// Experiment settings for one generator of a config.
ExperimentSettings settings_for(const ExperimentConfig& cfg, std::shared_ptr<const GeneratorSpec> spec);

}  // namespace ibdiag
