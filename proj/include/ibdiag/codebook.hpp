#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace ibdiag {

enum class QuantScheme { FSQ, LFQ, BSQ, Explicit };

std::string to_string(QuantScheme scheme);
QuantScheme parse_quant_scheme(const std::string& name);

inline constexpr std::size_t kDefaultCodebookBound = std::size_t{1} << 20;

// Explicit table of code vectors. Implicit codebooks (FSQ/LFQ/BSQ) are
// materialized in lexicographic order of per-dimension level indices, with
// dimension 0 most significant, so entry k of LFQ(d) has bit (d-1-i) of k
// selecting the sign of component i.
class Codebook {
 public:
  static Codebook fsq(std::vector<std::size_t> levels,
                      std::size_t bound = kDefaultCodebookBound);
  static Codebook lfq(std::size_t dim, std::size_t bound = kDefaultCodebookBound);
  static Codebook bsq(std::size_t dim, std::size_t bound = kDefaultCodebookBound);
  // Entries must be nonempty, equal-length and pairwise distinct.
  static Codebook from_entries(std::vector<std::vector<double>> entries);

  QuantScheme scheme() const { return scheme_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }
  const std::vector<std::size_t>& levels() const { return levels_; }
  std::span<const double> entry(std::size_t k) const;
  const std::vector<double>& flat_entries() const { return values_; }

  // Smallest and largest component over all entries.
  std::pair<double, double> value_range() const;

  bool operator==(const Codebook& other) const = default;

 private:
  Codebook(QuantScheme scheme, std::size_t dim, std::vector<std::size_t> levels,
           std::vector<double> values);

  static Codebook grid(QuantScheme scheme, std::vector<std::size_t> levels,
                       std::size_t bound, bool unit_sphere);

  QuantScheme scheme_;
  std::size_t dim_;
  std::size_t size_;
  std::vector<std::size_t> levels_;
  std::vector<double> values_;  // size_ * dim_, row-major
};

// Parameters for build_quantizer: `levels` for FSQ, `dim` for LFQ/BSQ.
struct QuantizerParams {
  std::vector<std::size_t> levels;
  std::size_t dim = 0;
  std::size_t bound = kDefaultCodebookBound;
};

Codebook build_quantizer(QuantScheme scheme, const QuantizerParams& params);

// Symmetric FSQ level values: L points evenly spaced over [-1, 1].
std::vector<double> fsq_level_values(std::size_t levels);

// Nearest entry in Euclidean distance; ties go to the lower index.
std::size_t quantize(std::span<const double> v, const Codebook& cb);

struct UsageHistogram {
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const;
  std::size_t size() const { return counts.size(); }
};

// Tally of code indices, sized to the codebook.
UsageHistogram tally(std::size_t codebook_size, std::span<const std::uint32_t> indices);

enum class SubsetPolicy { DropLeastFrequent, DropMostFrequent, DropRandom };

std::string to_string(SubsetPolicy policy);
SubsetPolicy parse_subset_policy(const std::string& name);

// Active-index restriction of a codebook. Immutable once built.
class CodebookSubset {
 public:
  // The identity restriction.
  static CodebookSubset full(std::shared_ptr<const Codebook> base);

  const Codebook& base() const { return *base_; }
  const std::shared_ptr<const Codebook>& base_ptr() const { return base_; }
  const std::vector<std::uint32_t>& active() const { return active_; }
  bool is_active(std::size_t k) const { return k < mask_.size() && mask_[k]; }
  bool is_full() const { return active_.size() == mask_.size(); }
  SubsetPolicy policy() const { return policy_; }
  double ratio() const { return ratio_; }
  std::uint64_t seed() const { return seed_; }

 private:
  friend CodebookSubset restrict_codebook(std::shared_ptr<const Codebook>,
                                          const UsageHistogram&, SubsetPolicy,
                                          double, std::uint64_t);
  CodebookSubset(std::shared_ptr<const Codebook> base, std::vector<std::uint32_t> active,
                 SubsetPolicy policy, double ratio, std::uint64_t seed);

  std::shared_ptr<const Codebook> base_;
  std::vector<std::uint32_t> active_;
  std::vector<bool> mask_;
  SubsetPolicy policy_;
  double ratio_;
  std::uint64_t seed_;
};

// Number of entries kept: max(1, round-half-up(ratio * size)).
std::size_t subset_size(std::size_t codebook_size, double ratio);

// Frequency-ranked restriction. Frequency ties go to the lower index.
CodebookSubset restrict_codebook(std::shared_ptr<const Codebook> cb,
                                 const UsageHistogram& usage, SubsetPolicy policy,
                                 double ratio, std::uint64_t seed = 0);

// Plug-in Shannon entropy of the usage distribution, in bits.
double codebook_entropy(const UsageHistogram& usage);

nlohmann::ordered_json codebook_to_json(const Codebook& cb);
Codebook codebook_from_json(const nlohmann::json& doc);

// CSV with header "index,count".
void write_usage_csv(std::ostream& out, const UsageHistogram& usage);
UsageHistogram read_usage_csv(std::istream& in);

}  // namespace ibdiag
