#include "ibdiag/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ibdiag/errors.hpp"
#include "ibdiag/rng.hpp"

namespace ibdiag {

std::string to_string(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::FSQ: return "FSQ";
    case QuantScheme::LFQ: return "LFQ";
    case QuantScheme::BSQ: return "BSQ";
    case QuantScheme::Explicit: return "Explicit";
  }
  return "Explicit";
}

QuantScheme parse_quant_scheme(const std::string& name) {
  if (name == "FSQ") return QuantScheme::FSQ;
  if (name == "LFQ") return QuantScheme::LFQ;
  if (name == "BSQ") return QuantScheme::BSQ;
  if (name == "Explicit") return QuantScheme::Explicit;
  throw ConfigError("unknown quantization scheme '" + name + "'");
}

std::vector<double> fsq_level_values(std::size_t levels) {
  if (levels < 2) throw std::invalid_argument("FSQ needs at least 2 levels per dimension");
  std::vector<double> values(levels);
  const double step = 2.0 / static_cast<double>(levels - 1);
  for (std::size_t j = 0; j < levels; ++j) values[j] = -1.0 + step * static_cast<double>(j);
  // Exact endpoints and an exact zero for odd level counts.
  values.front() = -1.0;
  values.back() = 1.0;
  if (levels % 2 == 1) values[levels / 2] = 0.0;
  return values;
}

Codebook::Codebook(QuantScheme scheme, std::size_t dim, std::vector<std::size_t> levels,
                   std::vector<double> values)
    : scheme_(scheme),
      dim_(dim),
      size_(dim == 0 ? 0 : values.size() / dim),
      levels_(std::move(levels)),
      values_(std::move(values)) {}

Codebook Codebook::grid(QuantScheme scheme, std::vector<std::size_t> levels,
                        std::size_t bound, bool unit_sphere) {
  if (levels.empty()) throw std::invalid_argument("quantizer needs at least one dimension");
  std::size_t count = 1;
  for (std::size_t l : levels) {
    if (l < 2) throw std::invalid_argument("quantizer levels must be >= 2");
    if (count > bound / l) {
      throw std::invalid_argument("codebook of " + to_string(scheme) +
                                  " exceeds enumeration bound " + std::to_string(bound));
    }
    count *= l;
  }
  const std::size_t dim = levels.size();
  std::vector<std::vector<double>> per_dim;
  per_dim.reserve(dim);
  for (std::size_t l : levels) per_dim.push_back(fsq_level_values(l));
  const double scale = unit_sphere ? 1.0 / std::sqrt(static_cast<double>(dim)) : 1.0;

  std::vector<double> values(count * dim);
  std::vector<std::size_t> digit(dim, 0);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < dim; ++i) values[k * dim + i] = per_dim[i][digit[i]] * scale;
    // Increment the mixed-radix counter, last dimension fastest.
    for (std::size_t i = dim; i-- > 0;) {
      if (++digit[i] < levels[i]) break;
      digit[i] = 0;
    }
  }
  std::vector<std::size_t> stored_levels =
      scheme == QuantScheme::BSQ ? std::vector<std::size_t>{} : std::move(levels);
  return Codebook(scheme, dim, std::move(stored_levels), std::move(values));
}

Codebook Codebook::fsq(std::vector<std::size_t> levels, std::size_t bound) {
  return grid(QuantScheme::FSQ, std::move(levels), bound, false);
}

Codebook Codebook::lfq(std::size_t dim, std::size_t bound) {
  if (dim < 1) throw std::invalid_argument("LFQ dimension must be >= 1");
  return grid(QuantScheme::LFQ, std::vector<std::size_t>(dim, 2), bound, false);
}

Codebook Codebook::bsq(std::size_t dim, std::size_t bound) {
  if (dim < 1) throw std::invalid_argument("BSQ dimension must be >= 1");
  return grid(QuantScheme::BSQ, std::vector<std::size_t>(dim, 2), bound, true);
}

Codebook Codebook::from_entries(std::vector<std::vector<double>> entries) {
  if (entries.empty()) throw std::invalid_argument("explicit codebook needs entries");
  const std::size_t dim = entries.front().size();
  if (dim == 0) throw std::invalid_argument("explicit codebook entries must be nonempty");
  std::set<std::vector<double>> seen;
  std::vector<double> values;
  values.reserve(entries.size() * dim);
  for (auto& e : entries) {
    if (e.size() != dim) throw std::invalid_argument("explicit codebook entries differ in length");
    if (!seen.insert(e).second) throw std::invalid_argument("explicit codebook has duplicate entries");
    values.insert(values.end(), e.begin(), e.end());
  }
  return Codebook(QuantScheme::Explicit, dim, {}, std::move(values));
}

std::span<const double> Codebook::entry(std::size_t k) const {
  if (k >= size_) throw std::out_of_range("code index out of range");
  return {values_.data() + k * dim_, dim_};
}

std::pair<double, double> Codebook::value_range() const {
  const auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
  return {*lo, *hi};
}

Codebook build_quantizer(QuantScheme scheme, const QuantizerParams& params) {
  switch (scheme) {
    case QuantScheme::FSQ:
      if (params.levels.empty()) throw std::invalid_argument("FSQ needs a level list");
      return Codebook::fsq(params.levels, params.bound);
    case QuantScheme::LFQ: return Codebook::lfq(params.dim, params.bound);
    case QuantScheme::BSQ: return Codebook::bsq(params.dim, params.bound);
    case QuantScheme::Explicit:
      throw std::invalid_argument("explicit codebooks are built from entries");
  }
  throw std::invalid_argument("unknown scheme");
}

namespace {

std::size_t nearest_brute_force(std::span<const double> v, const Codebook& cb) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const auto e = cb.entry(k);
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) d += (v[i] - e[i]) * (v[i] - e[i]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

std::size_t quantize(std::span<const double> v, const Codebook& cb) {
  if (v.size() != cb.dim()) {
    throw std::invalid_argument("vector dimension " + std::to_string(v.size()) +
                                " does not match codebook dimension " + std::to_string(cb.dim()));
  }
  if (cb.scheme() != QuantScheme::FSQ && cb.scheme() != QuantScheme::LFQ) {
    return nearest_brute_force(v, cb);
  }
  // Symmetric grids: the global nearest neighbor is the per-dimension one.
  std::size_t index = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t l = cb.levels()[i];
    const double pos = (v[i] + 1.0) * static_cast<double>(l - 1) / 2.0;
    // Halfway ties resolve to the lower level, matching the brute-force order.
    double j = std::ceil(pos - 0.5);
    j = std::clamp(j, 0.0, static_cast<double>(l - 1));
    index = index * l + static_cast<std::size_t>(j);
  }
  return index;
}

std::uint64_t UsageHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

UsageHistogram tally(std::size_t codebook_size, std::span<const std::uint32_t> indices) {
  UsageHistogram h{std::vector<std::uint64_t>(codebook_size, 0)};
  for (std::uint32_t k : indices) {
    if (k >= codebook_size) throw std::out_of_range("code index out of range in tally");
    ++h.counts[k];
  }
  return h;
}

std::string to_string(SubsetPolicy policy) {
  switch (policy) {
    case SubsetPolicy::DropLeastFrequent: return "drop_least_frequent";
    case SubsetPolicy::DropMostFrequent: return "drop_most_frequent";
    case SubsetPolicy::DropRandom: return "drop_random";
  }
  return "drop_least_frequent";
}

SubsetPolicy parse_subset_policy(const std::string& name) {
  if (name == "drop_least_frequent") return SubsetPolicy::DropLeastFrequent;
  if (name == "drop_most_frequent") return SubsetPolicy::DropMostFrequent;
  if (name == "drop_random") return SubsetPolicy::DropRandom;
  throw ConfigError("unknown subset policy '" + name + "'");
}

CodebookSubset::CodebookSubset(std::shared_ptr<const Codebook> base,
                               std::vector<std::uint32_t> active, SubsetPolicy policy,
                               double ratio, std::uint64_t seed)
    : base_(std::move(base)),
      active_(std::move(active)),
      mask_(base_->size(), false),
      policy_(policy),
      ratio_(ratio),
      seed_(seed) {
  for (std::uint32_t k : active_) mask_[k] = true;
}

CodebookSubset CodebookSubset::full(std::shared_ptr<const Codebook> base) {
  std::vector<std::uint32_t> all(base->size());
  std::iota(all.begin(), all.end(), 0u);
  return CodebookSubset(std::move(base), std::move(all), SubsetPolicy::DropLeastFrequent, 1.0, 0);
}

std::size_t subset_size(std::size_t codebook_size, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("subset ratio must lie in (0, 1]");
  }
  const auto kept = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(codebook_size) + 0.5));
  return std::clamp<std::size_t>(kept, 1, codebook_size);
}

CodebookSubset restrict_codebook(std::shared_ptr<const Codebook> cb, const UsageHistogram& usage,
                                 SubsetPolicy policy, double ratio, std::uint64_t seed) {
  if (!cb) throw std::invalid_argument("restrict_codebook: null codebook");
  const std::size_t k_total = cb->size();
  const std::size_t keep = subset_size(k_total, ratio);
  if (usage.size() != k_total) {
    throw std::invalid_argument("usage histogram has " + std::to_string(usage.size()) +
                                " bins for a codebook of " + std::to_string(k_total));
  }
  std::vector<std::uint32_t> order(k_total);
  std::iota(order.begin(), order.end(), 0u);
  const auto& c = usage.counts;
  switch (policy) {
    case SubsetPolicy::DropLeastFrequent:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return c[a] > c[b]; });
      break;
    case SubsetPolicy::DropMostFrequent:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return c[a] < c[b]; });
      break;
    case SubsetPolicy::DropRandom: {
      Rng rng(derive_seed(seed, stream::kSubset));
      for (std::size_t i = 0; i + 1 < k_total; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(k_total - i));
        std::swap(order[i], order[j]);
      }
      break;
    }
  }
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return CodebookSubset(std::move(cb), std::move(order), policy, ratio, seed);
}

double codebook_entropy(const UsageHistogram& usage) {
  const std::uint64_t total = usage.total();
  if (total == 0) throw std::invalid_argument("codebook_entropy: empty histogram");
  double h = 0.0;
  for (std::uint64_t n : usage.counts) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

nlohmann::ordered_json codebook_to_json(const Codebook& cb) {
  nlohmann::ordered_json doc;
  doc["scheme"] = to_string(cb.scheme());
  doc["dim"] = cb.dim();
  doc["levels"] = cb.levels();
  auto entries = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const auto e = cb.entry(k);
    entries.push_back(std::vector<double>(e.begin(), e.end()));
  }
  doc["entries"] = std::move(entries);
  return doc;
}

Codebook codebook_from_json(const nlohmann::json& doc) {
  const QuantScheme scheme = parse_quant_scheme(doc.at("scheme").get<std::string>());
  Codebook cb = [&] {
    switch (scheme) {
      case QuantScheme::FSQ: return Codebook::fsq(doc.at("levels").get<std::vector<std::size_t>>());
      case QuantScheme::LFQ: return Codebook::lfq(doc.at("dim").get<std::size_t>());
      case QuantScheme::BSQ: return Codebook::bsq(doc.at("dim").get<std::size_t>());
      case QuantScheme::Explicit:
        return Codebook::from_entries(doc.at("entries").get<std::vector<std::vector<double>>>());
    }
    throw ConfigError("unknown scheme");
  }();
  if (doc.contains("dim") && doc.at("dim").get<std::size_t>() != cb.dim()) {
    throw ConfigError("codebook 'dim' does not match its entries");
  }
  // Implicit schemes may carry entries; they must agree with the construction.
  if (scheme != QuantScheme::Explicit && doc.contains("entries")) {
    const auto given = doc.at("entries").get<std::vector<std::vector<double>>>();
    if (given.size() != cb.size()) throw ConfigError("codebook entries do not match scheme");
    for (std::size_t k = 0; k < given.size(); ++k) {
      const auto e = cb.entry(k);
      if (!std::equal(given[k].begin(), given[k].end(), e.begin(), e.end())) {
        throw ConfigError("codebook entry " + std::to_string(k) + " does not match scheme");
      }
    }
  }
  return cb;
}

void write_usage_csv(std::ostream& out, const UsageHistogram& usage) {
  out << "index,count\n";
  for (std::size_t k = 0; k < usage.counts.size(); ++k) out << k << ',' << usage.counts[k] << '\n';
}

UsageHistogram read_usage_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "index,count") {
    throw ConfigError("usage CSV must start with header 'index,count'");
  }
  UsageHistogram h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t index = 0;
    std::uint64_t count = 0;
    char comma = 0;
    if (!(row >> index >> comma >> count) || comma != ',') {
      throw ConfigError("malformed usage CSV row '" + line + "'");
    }
    if (index != h.counts.size()) throw ConfigError("usage CSV indices must be consecutive from 0");
    h.counts.push_back(count);
  }
  return h;
}

}  // namespace ibdiag
