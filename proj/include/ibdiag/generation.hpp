#pragma once

// Toy discrete-latent generators over small token grids.
//
// Each strategy is an explicit conditional categorical model, so every
// generation can be sampled with a seed or enumerated exactly:
//
//   AR    tokens drawn in raster order, each conditioned on the previous
//         `ar_window` tokens (START-padded) and the condition.
//   MIM   T unmasking steps; at each step a subset of masked positions is
//         revealed and every revealed token is drawn in parallel, conditioned
//         on its cyclic left neighbor (or MASK if that neighbor is still
//         hidden) and the condition.
//   DIFF  z_T drawn per token from a prior, then T-1 per-token categorical
//         transitions z_{t+1} -> z_t conditioned on the condition.
//
// Table layouts (rows of length K = |C|):
//   AR    (K+1)^w rows; row index sum_j c_{i-j} (K+1)^(j-1), START = K.
//   MIM   K+1 rows; row K is the MASK context.
//   DIFF  K rows; row j is p(z_t | z_{t+1} = j).

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ibdiag/codebook.hpp"
#include "ibdiag/image.hpp"

namespace ibdiag {

enum class Strategy { AR, MIM, DIFF };
enum class LengthTag { Short, Medium, Long };
enum class MaskSchedule { Cosine, Linear };
enum class UnmaskMode { Uniform, Confidence };

std::string to_string(Strategy s);
std::string to_string(LengthTag t);
std::string to_string(MaskSchedule s);
std::string to_string(UnmaskMode m);
Strategy parse_strategy(const std::string& s);
LengthTag parse_length_tag(const std::string& s);
MaskSchedule parse_mask_schedule(const std::string& s);
UnmaskMode parse_unmask_mode(const std::string& s);

// Prompt surrogate. Conditions sharing a semantic class are paraphrases.
struct Condition {
  std::uint32_t semantic_class = 0;
  std::uint32_t surface_form = 0;
  LengthTag length = LengthTag::Medium;

  auto operator<=>(const Condition&) const = default;
};

// "c<class>.f<form>"
std::string condition_label(const Condition& x);

struct TokenGrid {
  std::size_t side = 0;
  std::vector<std::uint32_t> tokens;  // side * side, raster order

  bool operator==(const TokenGrid&) const = default;
};

struct ArPath {
  std::size_t length = 0;  // order is 0, 1, ..., length-1
  bool operator==(const ArPath&) const = default;
};

struct MimPath {
  // mask_sets[t] is M_{t+1}: the positions still masked before step t.
  std::vector<std::vector<std::uint32_t>> mask_sets;
  bool operator==(const MimPath&) const = default;
};

struct DiffPath {
  std::vector<TokenGrid> trajectory;  // z_T, ..., z_1
  bool operator==(const DiffPath&) const = default;
};

using GenerationPath = std::variant<ArPath, MimPath, DiffPath>;

enum class Stage { Early, Middle, Late };
std::string to_string(Stage s);

struct Stochastic {
  double temperature = 1.0;
};
struct Argmax {};
// Argmax inside one stage window, stochastic elsewhere.
struct Staged {
  Stage stage = Stage::Early;
  double temperature = 1.0;
};
using SamplingPolicy = std::variant<Stochastic, Argmax, Staged>;

std::string describe(const SamplingPolicy& policy);

// Window sizes for Early/Middle/Late; remainder goes to the earlier windows.
std::array<std::size_t, 3> stage_windows(std::size_t steps);

struct StepRule {
  bool argmax = false;
  double temperature = 1.0;
};

StepRule step_rule(const SamplingPolicy& policy, std::size_t step, std::size_t total_steps);

// Row-major table of categorical rows.
class CategoricalTable {
 public:
  CategoricalTable() = default;
  CategoricalTable(std::size_t rows, std::size_t cols, std::vector<double> data);
  explicit CategoricalTable(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }
  std::vector<std::vector<double>> to_rows() const;

  bool operator==(const CategoricalTable&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using ConditionKey = std::pair<std::uint32_t, std::uint32_t>;  // (class, form)

inline ConditionKey key_of(const Condition& x) { return {x.semantic_class, x.surface_form}; }

struct GeneratorSpec {
  std::string name;
  Strategy strategy = Strategy::AR;
  std::size_t grid_side = 1;
  std::shared_ptr<const Codebook> codebook;
  std::size_t steps = 1;  // T for MIM and DIFF
  MaskSchedule schedule = MaskSchedule::Cosine;
  std::vector<std::size_t> explicit_counts;  // overrides `schedule` when nonempty
  UnmaskMode unmask = UnmaskMode::Uniform;
  std::size_t ar_window = 1;
  std::vector<double> prior;  // DIFF only
  std::map<ConditionKey, CategoricalTable> tables;
  std::string seed_label;

  std::size_t tokens() const { return grid_side * grid_side; }
  std::size_t codes() const { return codebook ? codebook->size() : 0; }
  std::size_t context_rows() const;
  // Number of sampling decisions a policy is staged over: N (AR), T (MIM), T-1 (DIFF).
  std::size_t decision_steps() const;
  const CategoricalTable& table(const Condition& x) const;
  bool has_condition(const Condition& x) const;

  // Checks shapes, normalization (1e-9) and schedule consistency.
  void validate() const;
};

inline constexpr double kRowTolerance = 1e-9;

// Per-step reveal counts from a masking schedule gamma(t/T). Cumulative
// targets are round-half-up(N (1 - gamma(t/T))), clamped so every step
// reveals at least one token; the counts sum to N. Requires 1 <= T <= N.
std::vector<std::size_t> schedule_counts(MaskSchedule schedule, std::size_t tokens,
                                         std::size_t steps);
std::vector<std::size_t> unmask_counts(const GeneratorSpec& spec);

// Conditional distribution after subset renormalization, temperature and
// argmax (ties to the lower index). Throws InconsistentSpecError when no
// active code has positive mass.
void effective_distribution(std::span<const double> row, const CodebookSubset& subset,
                            StepRule rule, std::vector<double>& out);

// Index with cumulative mass exceeding u * total; never returns a zero-mass code.
std::uint32_t draw_categorical(std::span<const double> probs, double u);

struct Sample {
  TokenGrid grid;
  GenerationPath path;
};

// Per-sample seed actually used for draws: derive(seed, fnv1a(spec.seed_label)).
std::uint64_t generation_seed(const GeneratorSpec& spec, std::uint64_t seed);

Sample ar_generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                   const CodebookSubset& subset, std::uint64_t seed);
Sample mim_generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                    const CodebookSubset& subset, std::uint64_t seed);
Sample diff_generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                     const CodebookSubset& subset, std::uint64_t seed);
Sample generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                const CodebookSubset& subset, std::uint64_t seed);

// Canonical integer encoding of a path: empty (AR), revealed positions per
// step (MIM), concatenated trajectory tokens (DIFF).
std::vector<std::uint32_t> path_key(const GenerationPath& path);
GenerationPath path_from_key(const GeneratorSpec& spec, std::span<const std::uint32_t> key);

struct Outcome {
  std::vector<std::uint32_t> path_key;
  std::vector<std::uint32_t> tokens;
  double probability = 0.0;
};

inline constexpr std::size_t kDefaultOutcomeBound = 1'000'000;

// Every reachable (path, grid) pair with its exact probability. Throws
// EnumerationLimitError when more than `bound` outcomes are reachable.
std::vector<Outcome> enumerate_outcomes(const GeneratorSpec& spec, const Condition& x,
                                        const SamplingPolicy& policy,
                                        const CodebookSubset& subset,
                                        std::size_t bound = kDefaultOutcomeBound);

// Smallest patch side holding both polarities of every code dimension.
std::size_t min_patch_size(std::size_t dim);

// Tiles one patch_size x patch_size patch per token. Patch pixel q (row
// major) shows dimension (q / 2) mod d, rescaled from the codebook value
// range to u in [0, 1], as u for even q and 1 - u for odd q. Complementary
// pairs keep the map injective and keep distinct grids off the same ray, so
// pixel cosine separates them. patch_size 0 picks min_patch_size.
Image decode(const TokenGrid& z, const Codebook& cb, std::size_t patch_size = 0);

// Prompt inventory. Each semantic class needs at least five surface forms.
struct ToyWorld {
  std::vector<Condition> conditions;
  std::size_t patch_size = 4;

  std::vector<std::uint32_t> classes() const;
  std::vector<Condition> class_conditions(std::uint32_t semantic_class) const;
  const Condition& find(std::uint32_t semantic_class, std::uint32_t surface_form) const;
  void validate() const;
};

inline constexpr std::size_t kMinSurfaceForms = 5;

}  // namespace ibdiag
