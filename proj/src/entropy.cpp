#include "ibdiag/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "ibdiag/rng.hpp"

namespace ibdiag {

namespace {

struct KeyHash {
  std::size_t operator()(const std::vector<std::uint32_t>& v) const {
    std::uint64_t h = 0x84222325cbf29ce4ULL ^ v.size();
    for (std::uint32_t x : v) h = splitmix64(h ^ x);
    return static_cast<std::size_t>(h);
  }
};

using KeyMap = std::unordered_map<std::vector<std::uint32_t>, double, KeyHash>;

double neg_plogp(double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; }

double entropy_of(const KeyMap& m) {
  // a single point carries no uncertainty even when its summed mass is 1 - eps
  if (m.size() <= 1) return 0.0;
  double h = 0.0;
  for (const auto& [k, p] : m) h += neg_plogp(p);
  return h;
}

}  // namespace

double shannon(std::span<const double> dist) {
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw std::invalid_argument("shannon: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("shannon: distribution does not sum to 1");
  double h = 0.0;
  for (double p : dist) h += neg_plogp(p);
  return std::max(0.0, h);
}

nlohmann::ordered_json to_json(const EntropyReport& r) {
  return {{"h_z", r.h_z},
          {"h_z_given_x", r.h_z_given_x},
          {"h_path", r.h_path},
          {"h_exec", r.h_exec},
          {"h_residual", r.h_residual},
          {"i_xz", r.i_xz},
          {"beta", r.beta},
          {"i_zy", r.i_zy},
          {"ib_objective", r.ib_objective},
          {"ib_objective_is_parametric", true},
          {"identity_residual", r.identity_residual()}};
}

std::vector<WeightedCondition> uniform_prior(const std::vector<Condition>& conditions) {
  std::vector<WeightedCondition> out;
  for (const auto& c : conditions) out.push_back({c, 1.0 / static_cast<double>(conditions.size())});
  return out;
}

ConditionalEntropies conditional_entropies(const std::vector<Outcome>& outcomes) {
  // Joint keyed by path followed by tokens; path length is fixed per spec.
  KeyMap joint, pz, pp;
  for (const auto& o : outcomes) {
    std::vector<std::uint32_t> key = o.path_key;
    key.push_back(0xFFFFFFFFu);
    key.insert(key.end(), o.tokens.begin(), o.tokens.end());
    joint[key] += o.probability;
    pz[o.tokens] += o.probability;
    pp[o.path_key] += o.probability;
  }
  ConditionalEntropies e;
  e.h_z = entropy_of(pz);
  e.h_path = entropy_of(pp);
  // H(Z|P) and H(P|Z) summed directly from conditional ratios.
  for (const auto& [key, p] : joint) {
    if (p <= 0.0) continue;
    const auto sep = std::find(key.begin(), key.end(), 0xFFFFFFFFu);
    const std::vector<std::uint32_t> path(key.begin(), sep);
    const std::vector<std::uint32_t> tokens(sep + 1, key.end());
    e.h_exec -= p * std::log2(p / pp.at(path));
    e.h_residual -= p * std::log2(p / pz.at(tokens));
  }
  e.h_exec = std::max(0.0, e.h_exec);
  e.h_residual = std::max(0.0, e.h_residual);
  return e;
}

EntropyReport decompose(const GeneratorSpec& spec, const std::vector<WeightedCondition>& condition_prior,
                        const SamplingPolicy& policy, const CodebookSubset& subset, double beta,
                        std::size_t bound) {
  if (condition_prior.empty()) throw std::invalid_argument("decompose: empty condition prior");
  double total_w = 0.0;
  for (const auto& wc : condition_prior) {
    if (!(wc.weight >= 0.0)) throw std::invalid_argument("decompose: negative condition weight");
    total_w += wc.weight;
  }
  if (std::abs(total_w - 1.0) > 1e-9) throw std::invalid_argument("decompose: condition prior must sum to 1");

  EntropyReport r;
  r.beta = beta;
  KeyMap marginal_z;
  for (const auto& wc : condition_prior) {
    if (wc.weight == 0.0) continue;
    const auto outcomes = enumerate_outcomes(spec, wc.condition, policy, subset, bound);
    const auto e = conditional_entropies(outcomes);
    r.h_z_given_x += wc.weight * e.h_z;
    r.h_path += wc.weight * e.h_path;
    r.h_exec += wc.weight * e.h_exec;
    r.h_residual += wc.weight * e.h_residual;
    for (const auto& o : outcomes) marginal_z[o.tokens] += wc.weight * o.probability;
  }
  r.h_z = entropy_of(marginal_z);
  r.i_xz = r.h_z - r.h_z_given_x;
  r.i_zy = r.h_z;
  r.ib_objective = r.i_xz - beta * r.i_zy;
  return r;
}

double mim_path_entropy(const std::vector<std::size_t>& counts) {
  std::size_t masked = 0;
  for (std::size_t k : counts) {
    if (k == 0) throw std::invalid_argument("unmask counts must be positive");
    masked += k;
  }
  double h = 0.0;
  for (std::size_t k : counts) {
    // log2 C(masked, k) via lgamma keeps large grids finite.
    h += (std::lgamma(static_cast<double>(masked) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
          std::lgamma(static_cast<double>(masked - k) + 1.0)) /
         std::numbers::ln2;
    masked -= k;
  }
  return std::max(0.0, h);
}

double mim_path_entropy(const GeneratorSpec& spec) {
  if (spec.strategy != Strategy::MIM) throw std::invalid_argument("mim_path_entropy needs a MIM generator");
  if (spec.unmask != UnmaskMode::Uniform) {
    throw std::invalid_argument("mim_path_entropy has no closed form for confidence-ordered unmasking");
  }
  return mim_path_entropy(unmask_counts(spec));
}

double diffusion_path_entropy(const GeneratorSpec& spec, const Condition& x,
                              const SamplingPolicy& policy, const CodebookSubset* subset) {
  if (spec.strategy != Strategy::DIFF) {
    throw std::invalid_argument("diffusion_path_entropy needs a DIFF generator");
  }
  const CodebookSubset all = CodebookSubset::full(spec.codebook);
  const CodebookSubset& active = subset ? *subset : all;
  const auto& table = spec.table(x);
  const std::size_t k = spec.codes();
  std::vector<double> marginal;
  effective_distribution(spec.prior, active, StepRule{}, marginal);
  double per_token = shannon(marginal);
  const std::size_t transitions = spec.decision_steps();
  std::vector<double> row;
  for (std::size_t step = 0; step < transitions; ++step) {
    const StepRule rule = step_rule(policy, step, transitions);
    std::vector<double> next(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      if (marginal[j] <= 0.0) continue;
      effective_distribution(table.row(j), active, rule, row);
      per_token += marginal[j] * shannon(row);
      for (std::size_t c = 0; c < k; ++c) next[c] += marginal[j] * row[c];
    }
    marginal = std::move(next);
  }
  return per_token * static_cast<double>(spec.tokens());
}

double path_entropy(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                    const CodebookSubset& subset) {
  switch (spec.strategy) {
    case Strategy::AR: return 0.0;
    case Strategy::MIM:
      if (spec.unmask == UnmaskMode::Uniform) return mim_path_entropy(spec);
      return conditional_entropies(enumerate_outcomes(spec, x, policy, subset)).h_path;
    case Strategy::DIFF: return diffusion_path_entropy(spec, x, policy, &subset);
  }
  return 0.0;
}

double estimate_from_counts(std::span<const std::uint64_t> counts, EntropyEstimator estimator) {
  std::uint64_t n = 0;
  std::size_t observed = 0;
  for (std::uint64_t c : counts) {
    n += c;
    if (c > 0) ++observed;
  }
  if (n == 0) throw std::invalid_argument("estimate_from_counts: no observations");
  double h = 0.0;
  for (std::uint64_t c : counts) h += neg_plogp(static_cast<double>(c) / static_cast<double>(n));
  if (estimator == EntropyEstimator::MillerMadow) {
    h += static_cast<double>(observed - 1) / (2.0 * static_cast<double>(n) * std::numbers::ln2);
  }
  return std::max(0.0, h);
}

McEstimate mc_estimate(const OutcomeSampler& sampler, std::size_t n, EntropyEstimator estimator,
                       std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("mc_estimate needs at least 2 samples");
  // Map draws to dense category ids in first-seen order.
  std::unordered_map<std::vector<std::uint32_t>, std::uint32_t, KeyHash> ids;
  std::vector<std::uint32_t> draws(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto key = sampler(i);
    const auto [it, inserted] = ids.emplace(std::move(key), static_cast<std::uint32_t>(ids.size()));
    draws[i] = it->second;
  }
  std::vector<std::uint64_t> counts(ids.size(), 0);
  for (std::uint32_t d : draws) ++counts[d];
  McEstimate out;
  out.bits = estimate_from_counts(counts, estimator);

  Rng rng(derive_seed(seed, stream::kBootstrap));
  std::vector<double> boot(kBootstrapResamples);
  std::vector<std::uint64_t> resampled(counts.size());
  for (double& b : boot) {
    std::fill(resampled.begin(), resampled.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++resampled[draws[rng.below(n)]];
    b = estimate_from_counts(resampled, estimator);
  }
  double mean = 0.0;
  for (double b : boot) mean += b;
  mean /= static_cast<double>(boot.size());
  double var = 0.0;
  for (double b : boot) var += (b - mean) * (b - mean);
  out.stderr_bits = std::sqrt(var / static_cast<double>(boot.size() - 1));
  return out;
}

}  // namespace ibdiag
