#pragma once

// Batch pipelines behind the command line. Each returns a JSON summary plus
// named CSV tables; nothing touches the filesystem until write_outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ibdiag/config.hpp"
#include "ibdiag/entropy.hpp"
#include "ibdiag/report.hpp"
#include "json.hpp"

namespace ibdiag {

inline const std::vector<std::string> kPipelines = {"demo-archetypes", "probe", "sweep",
                                                    "waterfall",       "enhance", "audit"};

struct PipelineOutput {
  nlohmann::ordered_json summary;
  std::vector<std::pair<std::string, CsvTable>> tables;  // file name, table
  bool ok = true;                                        // false when a --check fails
};

PipelineOutput run_pipeline(const std::string& name, const ExperimentConfig& cfg);

struct AuditRow {
  std::string spec;
  std::string policy;
  EntropyReport report;
};

struct IdentityAudit {
  std::size_t cases = 0;             // random specs
  std::size_t decompositions = 0;    // (spec, policy) pairs
  double max_identity_residual = 0.0;
  double max_path_formula_error = 0.0;  // closed form vs enumeration
  std::size_t path_formula_checks = 0;
  std::vector<std::string> failures;
  std::vector<AuditRow> rows;
};

inline constexpr double kIdentityTolerance = 1e-9;

// Exact decompositions of `per_strategy` random specs of each strategy under
// stochastic, tempered and argmax policies, plus closed-form path entropies.
IdentityAudit run_identity_audit(std::uint64_t seed, std::size_t per_strategy);

// Frozen archetype evidence produced from a config.
nlohmann::ordered_json make_fixtures(const ExperimentConfig& cfg, std::size_t identity_cases_per_strategy = 40);

// Identity audit plus comparison against frozen fixtures.
PipelineOutput run_check(const ExperimentConfig& cfg, const nlohmann::json& fixtures);

// summary.json and every CSV table into `dir`.
void write_outputs(const std::filesystem::path& dir, const PipelineOutput& out, std::uint64_t seed);

}  // namespace ibdiag
