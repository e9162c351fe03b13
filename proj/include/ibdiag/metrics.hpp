#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibdiag/generation.hpp"
#include "ibdiag/image.hpp"
#include "json.hpp"

namespace ibdiag {

enum class DiversityMetric { TokenHamming = 0, PixelCosine = 1, OneMinusSsim = 2 };
inline constexpr std::size_t kMetricCount = 3;
inline constexpr std::array<DiversityMetric, kMetricCount> kAllMetrics = {
    DiversityMetric::TokenHamming, DiversityMetric::PixelCosine, DiversityMetric::OneMinusSsim};

std::string to_string(DiversityMetric m);

using MetricValues = std::array<double, kMetricCount>;

// Fraction of positions with different code indices.
double token_hamming(const TokenGrid& a, const TokenGrid& b);

// 1 - <a,b> / (|a| |b|). Throws on shape mismatch or an all-zero image.
double pixel_cosine_distance(const Image& a, const Image& b);

// Mean SSIM over 8x8 windows at stride 1 (global statistics when either
// side is below 8), C1 = 0.01^2, C2 = 0.03^2, population moments.
double ssim(const Image& a, const Image& b);

inline constexpr std::size_t kSsimWindow = 8;

// Pairwise distance used inside diversity reports. Pixel cosine is extended
// to all-zero images: 0 for identical images, 1 otherwise.
double pair_distance(DiversityMetric m, const TokenGrid& ga, const Image& ia, const TokenGrid& gb,
                     const Image& ib);

// Mean of f(i, j) over the n(n-1)/2 unordered pairs.
double mean_over_pairs(std::size_t n, const std::function<double(std::size_t, std::size_t)>& f);

// Samples for one prompt. `groups[i]` identifies which pooled condition
// (paraphrase) produced sample i.
struct PromptSamples {
  std::string prompt;
  std::vector<TokenGrid> grids;
  std::vector<Image> images;
  std::vector<std::size_t> groups;
  std::vector<Condition> conditions;
};

struct PromptDiversity {
  std::string prompt;
  MetricValues values{};
  std::size_t pairs = 0;
};

struct DiversityReport {
  MetricValues values{};  // unweighted mean over prompts
  std::vector<PromptDiversity> per_prompt;
  std::size_t pair_count = 0;
  // Mean over same-group pairs only; present when every group has >= 2 samples
  // and some prompt pools more than one group.
  std::optional<MetricValues> within_group;

  double value(DiversityMetric m) const { return values[static_cast<std::size_t>(m)]; }
};

DiversityReport pairwise_diversity(const std::vector<PromptSamples>& samples);

nlohmann::ordered_json to_json(const DiversityReport& r);

// Exact p(Z | X = x) under a generator's unintervened stochastic policy.
class GroundTruth {
 public:
  explicit GroundTruth(const GeneratorSpec& spec, std::size_t bound = kDefaultOutcomeBound);

  // Probability of the grid under condition x (0 when unreachable).
  double probability(const Condition& x, const TokenGrid& z);

 private:
  struct Hash {
    std::size_t operator()(const std::vector<std::uint32_t>& v) const;
  };
  using Table = std::unordered_map<std::vector<std::uint32_t>, double, Hash>;

  const GeneratorSpec& spec_;
  std::size_t bound_;
  std::mutex mutex_;
  std::map<ConditionKey, Table> cache_;
};

struct QualityProxy {
  // Mean log2 p(Z|X) / N; -infinity when any sample is unreachable.
  double bits_per_token = 0.0;
  // Same mean over reachable samples only.
  double finite_bits_per_token = 0.0;
  std::size_t unreachable = 0;
  std::size_t samples = 0;
};

// Scores each grid against the condition that generated it.
QualityProxy quality_proxy(const std::vector<PromptSamples>& samples, GroundTruth& truth);

}  // namespace ibdiag
