#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ibdiag/codebook.hpp"
#include "ibdiag/generation.hpp"
#include "ibdiag/metrics.hpp"
#include "json.hpp"

namespace ibdiag {

inline constexpr std::size_t kDefaultValidationSamples = 256;

struct SubsetProbe {
  SubsetPolicy policy = SubsetPolicy::DropLeastFrequent;
  double ratio = 0.5;
  std::uint64_t seed = 0;
};

enum class ArgmaxStage { All, Early, Middle, Late };

struct ArgmaxProbe {
  ArgmaxStage stage = ArgmaxStage::All;
};

enum class ParaphraseMode { Short, Medium, Long, Mixed };

struct ParaphraseProbe {
  ParaphraseMode mode = ParaphraseMode::Mixed;
  std::size_t k = 5;
};

using ProbeSpec = std::variant<SubsetProbe, ArgmaxProbe, ParaphraseProbe>;

std::string to_string(ArgmaxStage s);
std::string to_string(ParaphraseMode m);
ArgmaxStage parse_argmax_stage(const std::string& s);
ParaphraseMode parse_paraphrase_mode(const std::string& s);
std::string describe(const ProbeSpec& probe);
nlohmann::ordered_json to_json(const ProbeSpec& probe);
ProbeSpec probe_from_json(const nlohmann::json& doc);

// k distinct paraphrases of x (x itself excluded), in world order within
// each length tag. Mixed splits k across Short/Medium/Long as evenly as
// possible, remainder to the earlier tags.
std::vector<Condition> paraphrase_set(const ToyWorld& world, const Condition& x,
                                      ParaphraseMode mode, std::size_t k);

// One evaluated prompt: a single condition, or a pooled paraphrase set.
struct PromptGroup {
  std::string label;
  std::vector<Condition> pooled;
};

struct ExperimentSettings {
  std::shared_ptr<const GeneratorSpec> spec;
  std::vector<PromptGroup> prompts;
  SamplingPolicy policy = Stochastic{};
  std::optional<CodebookSubset> subset;  // nullopt: full codebook
  UsageHistogram usage;                  // validation statistics for Subset probes
  std::size_t validation_samples = kDefaultValidationSamples;  // per prompt
  std::size_t patch_size = 0;
  std::vector<std::string> applied;      // probe bookkeeping

  CodebookSubset active_subset() const;
};

// One prompt per semantic class, using the first condition of each class in
// world order as the original phrasing.
ExperimentSettings baseline_settings(const ToyWorld& world, std::shared_ptr<const GeneratorSpec> spec);

// Samples per pooled condition: the first (n mod k) get ceil(n/k), the rest floor(n/k).
std::vector<std::size_t> pooled_allocation(std::size_t n, std::size_t k);

// n samples per prompt; sample j of prompt p is seeded derive(seed, {sample, p, j})
// regardless of which pooled condition it is assigned to.
std::vector<PromptSamples> collect_samples(const ExperimentSettings& settings, std::size_t n,
                                           std::uint64_t seed, std::size_t jobs = 1);

// Token usage over `per_prompt` validation generations per prompt.
UsageHistogram collect_usage(const ExperimentSettings& settings, std::size_t per_prompt,
                             std::uint64_t seed, std::size_t jobs = 1);

// Pure transformation. Subset probes need settings.usage.
ExperimentSettings apply_probe(const ToyWorld& world, const ExperimentSettings& base,
                               const ProbeSpec& probe);

struct ProbeResult {
  std::string probe;
  DiversityReport baseline;
  DiversityReport intervened;
  MetricValues delta{};           // intervened - baseline
  MetricValues relative_delta{};  // delta / baseline
  std::optional<QualityProxy> baseline_quality;
  std::optional<QualityProxy> intervened_quality;
  std::size_t samples_per_prompt = 0;
  std::uint64_t seed = 0;

  // -relative_delta on a metric.
  double relative_drop(DiversityMetric m) const { return -relative_delta[static_cast<std::size_t>(m)]; }
};

// Usage statistics are filled from a validation run when settings.usage is
// empty. Quality proxies are filled when the generator is enumerable.
ProbeResult run_probe(const ToyWorld& world, const ExperimentSettings& settings,
                      const ProbeSpec& probe, std::size_t n, std::uint64_t seed,
                      std::size_t jobs = 1);

// Relative change (b -> a); 0 when both are 0, +inf when only b is 0.
double relative_change(double baseline, double intervened);

// Fills settings.usage if empty, from settings.validation_samples generations per prompt.
ExperimentSettings with_usage(const ExperimentSettings& settings, std::uint64_t seed,
                              std::size_t jobs = 1);

// Quality proxy, or nullopt when the generator is too large to enumerate.
std::optional<QualityProxy> try_quality(const std::vector<PromptSamples>& samples, GroundTruth& truth);

nlohmann::ordered_json to_json(const ProbeResult& r);
nlohmann::ordered_json to_json(const QualityProxy& q);

}  // namespace ibdiag
