#include "ibdiag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ibdiag/rng.hpp"

namespace ibdiag {

std::string to_string(DiversityMetric m) {
  switch (m) {
    case DiversityMetric::TokenHamming: return "token_hamming";
    case DiversityMetric::PixelCosine: return "pixel_cosine";
    case DiversityMetric::OneMinusSsim: return "one_minus_ssim";
  }
  return "token_hamming";
}

double token_hamming(const TokenGrid& a, const TokenGrid& b) {
  if (a.side != b.side || a.tokens.size() != b.tokens.size()) {
    throw std::invalid_argument("token_hamming: grid shapes differ");
  }
  if (a.tokens.empty()) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) diff += a.tokens[i] != b.tokens[i];
  return static_cast<double>(diff) / static_cast<double>(a.tokens.size());
}

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size()) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
  }
}

double ssim_window(const Image& a, const Image& b, std::size_t r0, std::size_t c0, std::size_t h,
                   std::size_t w) {
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const double count = static_cast<double>(h * w);
  double ma = 0.0, mb = 0.0;
  for (std::size_t r = r0; r < r0 + h; ++r) {
    for (std::size_t c = c0; c < c0 + w; ++c) {
      ma += a.at(r, c);
      mb += b.at(r, c);
    }
  }
  ma /= count;
  mb /= count;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t r = r0; r < r0 + h; ++r) {
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const double da = a.at(r, c) - ma;
      const double db = b.at(r, c) - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  }
  va /= count;
  vb /= count;
  cov /= count;
  return ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
         ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

bool all_zero(const Image& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(), [](double v) { return v == 0.0; });
}

}  // namespace

double pixel_cosine_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "pixel_cosine_distance");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    dot += a.pixels[i] * b.pixels[i];
    na += a.pixels[i] * a.pixels[i];
    nb += b.pixels[i] * b.pixels[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("pixel_cosine_distance: all-zero image");
  if (a == b) return 0.0;
  const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(1.0 - cosine, 0.0, 1.0);
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.pixels.empty()) throw std::invalid_argument("ssim: empty image");
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    return ssim_window(a, b, 0, 0, a.height, a.width);
  }
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + kSsimWindow <= a.height; ++r) {
    for (std::size_t c = 0; c + kSsimWindow <= a.width; ++c) {
      total += ssim_window(a, b, r, c, kSsimWindow, kSsimWindow);
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double pair_distance(DiversityMetric m, const TokenGrid& ga, const Image& ia, const TokenGrid& gb,
                     const Image& ib) {
  switch (m) {
    case DiversityMetric::TokenHamming: return token_hamming(ga, gb);
    case DiversityMetric::PixelCosine:
      if (ia == ib) return 0.0;
      if (all_zero(ia) || all_zero(ib)) return 1.0;
      return pixel_cosine_distance(ia, ib);
    case DiversityMetric::OneMinusSsim: return 1.0 - ssim(ia, ib);
  }
  return 0.0;
}

double mean_over_pairs(std::size_t n, const std::function<double(std::size_t, std::size_t)>& f) {
  if (n < 2) throw std::invalid_argument("mean_over_pairs needs at least 2 samples");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += f(i, j);
  }
  return total / static_cast<double>(n * (n - 1) / 2);
}

DiversityReport pairwise_diversity(const std::vector<PromptSamples>& samples) {
  if (samples.empty()) throw std::invalid_argument("pairwise_diversity: no prompts");
  DiversityReport report;
  MetricValues within_total{};
  std::size_t within_prompts = 0;
  bool within_ok = true;
  bool pooled = false;
  for (const auto& ps : samples) {
    const std::size_t n = ps.grids.size();
    if (n < 2) {
      throw std::invalid_argument("pairwise_diversity: prompt '" + ps.prompt +
                                  "' has fewer than 2 samples");
    }
    if (ps.images.size() != n) throw std::invalid_argument("pairwise_diversity: grids and images differ in count");
    PromptDiversity pd{ps.prompt, {}, n * (n - 1) / 2};
    MetricValues within{};
    std::size_t within_pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool same = ps.groups.empty() || ps.groups[i] == ps.groups[j];
        for (DiversityMetric m : kAllMetrics) {
          const double d = pair_distance(m, ps.grids[i], ps.images[i], ps.grids[j], ps.images[j]);
          pd.values[static_cast<std::size_t>(m)] += d;
          if (same) within[static_cast<std::size_t>(m)] += d;
        }
        within_pairs += same;
      }
    }
    for (double& v : pd.values) v /= static_cast<double>(pd.pairs);
    if (!ps.groups.empty()) {
      const std::size_t groups = *std::max_element(ps.groups.begin(), ps.groups.end()) + 1;
      if (groups > 1) pooled = true;
      for (std::size_t g = 0; g < groups; ++g) {
        if (std::count(ps.groups.begin(), ps.groups.end(), g) < 2) within_ok = false;
      }
    }
    if (within_pairs > 0) {
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        within_total[m] += within[m] / static_cast<double>(within_pairs);
      }
      ++within_prompts;
    } else {
      within_ok = false;
    }
    for (std::size_t m = 0; m < kMetricCount; ++m) report.values[m] += pd.values[m];
    report.pair_count += pd.pairs;
    report.per_prompt.push_back(std::move(pd));
  }
  for (double& v : report.values) v /= static_cast<double>(samples.size());
  if (pooled && within_ok && within_prompts == samples.size()) {
    for (double& v : within_total) v /= static_cast<double>(within_prompts);
    report.within_group = within_total;
  }
  return report;
}

nlohmann::ordered_json to_json(const DiversityReport& r) {
  nlohmann::ordered_json doc;
  for (DiversityMetric m : kAllMetrics) doc[to_string(m)] = r.value(m);
  doc["pair_count"] = r.pair_count;
  if (r.within_group) {
    nlohmann::ordered_json w;
    for (DiversityMetric m : kAllMetrics) w[to_string(m)] = (*r.within_group)[static_cast<std::size_t>(m)];
    doc["within_paraphrase"] = std::move(w);
  } else {
    doc["within_paraphrase"] = nullptr;
  }
  auto prompts = nlohmann::ordered_json::array();
  for (const auto& p : r.per_prompt) {
    nlohmann::ordered_json row;
    row["prompt"] = p.prompt;
    for (DiversityMetric m : kAllMetrics) row[to_string(m)] = p.values[static_cast<std::size_t>(m)];
    row["pairs"] = p.pairs;
    prompts.push_back(std::move(row));
  }
  doc["per_prompt"] = std::move(prompts);
  return doc;
}

std::size_t GroundTruth::Hash::operator()(const std::vector<std::uint32_t>& v) const {
  std::uint64_t h = v.size();
  for (std::uint32_t x : v) h = splitmix64(h ^ x);
  return static_cast<std::size_t>(h);
}

GroundTruth::GroundTruth(const GeneratorSpec& spec, std::size_t bound) : spec_(spec), bound_(bound) {}

double GroundTruth::probability(const Condition& x, const TokenGrid& z) {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(key_of(x));
  if (it == cache_.end()) {
    Table table;
    const auto outcomes = enumerate_outcomes(spec_, x, Stochastic{1.0},
                                             CodebookSubset::full(spec_.codebook), bound_);
    for (const auto& o : outcomes) table[o.tokens] += o.probability;
    it = cache_.emplace(key_of(x), std::move(table)).first;
  }
  const auto found = it->second.find(z.tokens);
  return found == it->second.end() ? 0.0 : found->second;
}

QualityProxy quality_proxy(const std::vector<PromptSamples>& samples, GroundTruth& truth) {
  QualityProxy q;
  double finite_sum = 0.0;
  for (const auto& ps : samples) {
    if (ps.conditions.size() != ps.grids.size()) {
      throw std::invalid_argument("quality_proxy: every sample needs its generating condition");
    }
    for (std::size_t i = 0; i < ps.grids.size(); ++i) {
      const double p = truth.probability(ps.conditions[i], ps.grids[i]);
      ++q.samples;
      if (p <= 0.0) {
        ++q.unreachable;
        continue;
      }
      finite_sum += std::log2(p) / static_cast<double>(ps.grids[i].tokens.size());
    }
  }
  if (q.samples == 0) throw std::invalid_argument("quality_proxy: no samples");
  const std::size_t reachable = q.samples - q.unreachable;
  q.finite_bits_per_token = reachable > 0 ? finite_sum / static_cast<double>(reachable)
                                          : -std::numeric_limits<double>::infinity();
  q.bits_per_token = q.unreachable > 0 ? -std::numeric_limits<double>::infinity()
                                       : q.finite_bits_per_token;
  return q;
}

}  // namespace ibdiag
