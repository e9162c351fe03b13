#pragma once

// Information Bottleneck quantities for the toy generators, in bits.
//
//   H(Z|X) = H(P|X) + H(Z|P,X) - H(P|Z,X)
//   I(X;Z) = H(Z) - H(Z|X)
//   L_IB   = I(X;Z) - beta * I(Z;Y)
//
// I(Z;Y) is reported as H(Z): the decoder is deterministic and injective.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ibdiag/generation.hpp"
#include "json.hpp"

namespace ibdiag {

// -sum p log2 p with 0 log 0 = 0. Rejects inputs not summing to 1 within 1e-9.
double shannon(std::span<const double> dist);

struct EntropyReport {
  double h_z = 0.0;
  double h_z_given_x = 0.0;
  double h_path = 0.0;
  double h_exec = 0.0;
  double h_residual = 0.0;
  double i_xz = 0.0;
  double beta = 1.0;
  double i_zy = 0.0;
  double ib_objective = 0.0;  // parametric in beta

  // h_z_given_x - (h_path + h_exec - h_residual)
  double identity_residual() const { return h_z_given_x - (h_path + h_exec - h_residual); }
};

nlohmann::ordered_json to_json(const EntropyReport& r);

struct WeightedCondition {
  Condition condition;
  double weight = 1.0;
};

// Uniform weights over the given conditions.
std::vector<WeightedCondition> uniform_prior(const std::vector<Condition>& conditions);

// Exact report from the joint p(X) p(P, Z | X). Throws EnumerationLimitError
// when any condition's outcome space exceeds `bound`.
EntropyReport decompose(const GeneratorSpec& spec, const std::vector<WeightedCondition>& condition_prior,
                        const SamplingPolicy& policy, const CodebookSubset& subset,
                        double beta = 1.0, std::size_t bound = kDefaultOutcomeBound);

// Entropies of a single condition's exact outcome list.
struct ConditionalEntropies {
  double h_z = 0.0;
  double h_path = 0.0;
  double h_exec = 0.0;
  double h_residual = 0.0;
};
ConditionalEntropies conditional_entropies(const std::vector<Outcome>& outcomes);

// sum_t log2 C(|M_t|, k_t). Uniform unmask selection only.
double mim_path_entropy(const GeneratorSpec& spec);
// Same from per-step reveal counts; N is their sum, so any N works.
double mim_path_entropy(const std::vector<std::size_t>& counts);

// H(z_T) + sum_t H(z_t | z_{t+1}, X=x), propagated per token through the
// prior and transition tables under the given policy and subset.
double diffusion_path_entropy(const GeneratorSpec& spec, const Condition& x,
                              const SamplingPolicy& policy = Stochastic{},
                              const CodebookSubset* subset = nullptr);

// H(P | X=x) by the cheapest exact route for the strategy.
double path_entropy(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                    const CodebookSubset& subset);

enum class EntropyEstimator { PlugIn, MillerMadow };

struct McEstimate {
  double bits = 0.0;
  double stderr_bits = 0.0;
};

inline constexpr std::size_t kBootstrapResamples = 200;

// Returns the outcome of draw `index` as an integer key.
using OutcomeSampler = std::function<std::vector<std::uint32_t>(std::uint64_t index)>;

// Plug-in entropy of n draws, optionally Miller-Madow corrected by
// (K_observed - 1) / (2 n ln 2); standard error from kBootstrapResamples
// bootstrap resamples seeded from `seed`.
McEstimate mc_estimate(const OutcomeSampler& sampler, std::size_t n, EntropyEstimator estimator,
                       std::uint64_t seed = 0);

// Entropy estimate from category counts.
double estimate_from_counts(std::span<const std::uint64_t> counts, EntropyEstimator estimator);

}  // namespace ibdiag
