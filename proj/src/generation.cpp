#include "ibdiag/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "ibdiag/errors.hpp"
#include "ibdiag/rng.hpp"

namespace ibdiag {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::AR: return "AR";
    case Strategy::MIM: return "MIM";
    case Strategy::DIFF: return "DIFF";
  }
  return "AR";
}

std::string to_string(LengthTag t) {
  switch (t) {
    case LengthTag::Short: return "short";
    case LengthTag::Medium: return "medium";
    case LengthTag::Long: return "long";
  }
  return "medium";
}

std::string to_string(MaskSchedule s) { return s == MaskSchedule::Cosine ? "cosine" : "linear"; }
std::string to_string(UnmaskMode m) { return m == UnmaskMode::Uniform ? "uniform" : "confidence"; }

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Early: return "early";
    case Stage::Middle: return "middle";
    case Stage::Late: return "late";
  }
  return "early";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "AR") return Strategy::AR;
  if (s == "MIM") return Strategy::MIM;
  if (s == "DIFF") return Strategy::DIFF;
  throw ConfigError("unknown strategy '" + s + "'");
}

LengthTag parse_length_tag(const std::string& s) {
  if (s == "short") return LengthTag::Short;
  if (s == "medium") return LengthTag::Medium;
  if (s == "long") return LengthTag::Long;
  throw ConfigError("unknown length tag '" + s + "'");
}

MaskSchedule parse_mask_schedule(const std::string& s) {
  if (s == "cosine") return MaskSchedule::Cosine;
  if (s == "linear") return MaskSchedule::Linear;
  throw ConfigError("unknown mask schedule '" + s + "'");
}

UnmaskMode parse_unmask_mode(const std::string& s) {
  if (s == "uniform") return UnmaskMode::Uniform;
  if (s == "confidence") return UnmaskMode::Confidence;
  throw ConfigError("unknown unmask mode '" + s + "'");
}

std::string condition_label(const Condition& x) {
  return "c" + std::to_string(x.semantic_class) + ".f" + std::to_string(x.surface_form);
}

std::string describe(const SamplingPolicy& policy) {
  return std::visit(
      [](const auto& p) -> std::string {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Stochastic>) {
          return "stochastic";
        } else if constexpr (std::is_same_v<P, Argmax>) {
          return "argmax";
        } else {
          return "argmax_" + to_string(p.stage);
        }
      },
      policy);
}

std::array<std::size_t, 3> stage_windows(std::size_t steps) {
  const std::size_t base = steps / 3;
  const std::size_t rem = steps % 3;
  return {base + (rem > 0 ? 1 : 0), base + (rem > 1 ? 1 : 0), base};
}

StepRule step_rule(const SamplingPolicy& policy, std::size_t step, std::size_t total_steps) {
  if (const auto* s = std::get_if<Stochastic>(&policy)) return {false, s->temperature};
  if (std::holds_alternative<Argmax>(policy)) return {true, 1.0};
  const auto& staged = std::get<Staged>(policy);
  const auto w = stage_windows(total_steps);
  std::size_t begin = 0;
  for (int i = 0; i < static_cast<int>(staged.stage); ++i) begin += w[i];
  const std::size_t end = begin + w[static_cast<int>(staged.stage)];
  const bool in_stage = step >= begin && step < end;
  return {in_stage, staged.temperature};
}

CategoricalTable::CategoricalTable(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw std::invalid_argument("table data size mismatch");
}

CategoricalTable::CategoricalTable(const std::vector<std::vector<double>>& rows)
    : rows_(rows.size()), cols_(rows.empty() ? 0 : rows.front().size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("table rows differ in length");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::vector<std::vector<double>> CategoricalTable::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto s = row(r);
    out[r].assign(s.begin(), s.end());
  }
  return out;
}

std::size_t GeneratorSpec::context_rows() const {
  const std::size_t k = codes();
  switch (strategy) {
    case Strategy::AR: {
      std::size_t rows = 1;
      for (std::size_t j = 0; j < ar_window; ++j) rows *= (k + 1);
      return rows;
    }
    case Strategy::MIM: return k + 1;
    case Strategy::DIFF: return k;
  }
  return 0;
}

std::size_t GeneratorSpec::decision_steps() const {
  switch (strategy) {
    case Strategy::AR: return tokens();
    case Strategy::MIM: return steps;
    case Strategy::DIFF: return steps == 0 ? 0 : steps - 1;
  }
  return 0;
}

const CategoricalTable& GeneratorSpec::table(const Condition& x) const {
  const auto it = tables.find(key_of(x));
  if (it == tables.end()) {
    throw std::invalid_argument("generator '" + name + "' has no table for condition " +
                                condition_label(x));
  }
  return it->second;
}

bool GeneratorSpec::has_condition(const Condition& x) const { return tables.contains(key_of(x)); }

namespace {

void check_row(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError(what + " has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowTolerance) {
    throw ConfigError(what + " sums to " + std::to_string(sum) + ", not 1");
  }
}

}  // namespace

void GeneratorSpec::validate() const {
  if (!codebook || codebook->size() == 0) throw ConfigError("generator '" + name + "' has no codebook");
  if (grid_side == 0) throw ConfigError("generator '" + name + "': grid side must be >= 1");
  if (tables.empty()) throw ConfigError("generator '" + name + "' has no conditional tables");
  const std::size_t k = codes();
  if (strategy == Strategy::AR && ar_window == 0) throw ConfigError("AR window must be >= 1");
  if (strategy != Strategy::AR && steps == 0) throw ConfigError("generator '" + name + "': steps must be >= 1");
  const std::size_t rows = context_rows();
  for (const auto& [key, t] : tables) {
    const std::string where = "generator '" + name + "' table c" + std::to_string(key.first) +
                              ".f" + std::to_string(key.second);
    if (t.rows() != rows || t.cols() != k) {
      throw ConfigError(where + " has shape " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(k));
    }
    for (std::size_t r = 0; r < t.rows(); ++r) check_row(t.row(r), where + " row " + std::to_string(r));
  }
  if (strategy == Strategy::DIFF) {
    if (prior.size() != k) throw ConfigError("generator '" + name + "': prior must have one entry per code");
    check_row(prior, "generator '" + name + "' prior");
  }
  if (strategy == Strategy::MIM) {
    try {
      (void)unmask_counts(*this);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("generator '" + name + "': " + e.what());
    }
  }
}

std::vector<std::size_t> schedule_counts(MaskSchedule schedule, std::size_t tokens,
                                         std::size_t steps) {
  if (steps == 0 || steps > tokens) {
    throw std::invalid_argument("mask schedule needs 1 <= T <= N (T=" + std::to_string(steps) +
                                ", N=" + std::to_string(tokens) + ")");
  }
  std::vector<std::size_t> counts(steps);
  std::size_t revealed = 0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double r = static_cast<double>(t) / static_cast<double>(steps);
    const double masked_fraction =
        schedule == MaskSchedule::Cosine ? std::cos(std::numbers::pi / 2.0 * r) : 1.0 - r;
    const double target = static_cast<double>(tokens) * (1.0 - masked_fraction);
    auto cumulative = static_cast<std::size_t>(std::floor(target + 0.5));
    if (t == steps) cumulative = tokens;
    cumulative = std::clamp(cumulative, revealed + 1, tokens - (steps - t));
    counts[t - 1] = cumulative - revealed;
    revealed = cumulative;
  }
  return counts;
}

std::vector<std::size_t> unmask_counts(const GeneratorSpec& spec) {
  if (spec.explicit_counts.empty()) return schedule_counts(spec.schedule, spec.tokens(), spec.steps);
  if (spec.explicit_counts.size() != spec.steps) {
    throw std::invalid_argument("explicit unmask counts must have one entry per step");
  }
  std::size_t sum = 0;
  for (std::size_t c : spec.explicit_counts) {
    if (c == 0) throw std::invalid_argument("explicit unmask counts must be positive");
    sum += c;
  }
  if (sum != spec.tokens()) throw std::invalid_argument("explicit unmask counts must sum to N");
  return spec.explicit_counts;
}

void effective_distribution(std::span<const double> row, const CodebookSubset& subset,
                            StepRule rule, std::vector<double>& out) {
  const std::size_t k = row.size();
  out.assign(k, 0.0);
  if (rule.argmax) {
    std::size_t best = k;
    double best_p = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (subset.is_active(c) && row[c] > best_p) {
        best_p = row[c];
        best = c;
      }
    }
    if (best == k) throw InconsistentSpecError("no active code has positive probability");
    out[best] = 1.0;
    return;
  }
  if (!(rule.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const bool unit = rule.temperature == 1.0;
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (!subset.is_active(c) || row[c] <= 0.0) continue;
    out[c] = unit ? row[c] : std::pow(row[c], 1.0 / rule.temperature);
    total += out[c];
  }
  if (!(total > 0.0)) throw InconsistentSpecError("no active code has positive probability");
  for (double& p : out) p /= total;
}

std::uint32_t draw_categorical(std::span<const double> probs, double u) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double target = u * total;
  double cum = 0.0;
  std::uint32_t last_positive = 0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] <= 0.0) continue;
    last_positive = static_cast<std::uint32_t>(c);
    cum += probs[c];
    if (target < cum) return last_positive;
  }
  return last_positive;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double token_uniform(std::uint64_t seed, std::uint64_t stream_label, std::uint64_t step,
                     std::uint64_t pos) {
  return to_unit(derive_seed(seed, {stream_label, step, pos}));
}

void require(const GeneratorSpec& spec, Strategy s, const CodebookSubset& subset) {
  if (spec.strategy != s) {
    throw std::invalid_argument("generator '" + spec.name + "' is " + to_string(spec.strategy) +
                                ", not " + to_string(s));
  }
  if (subset.active().empty()) throw std::invalid_argument("empty active code set");
  if (subset.base().size() != spec.codes()) {
    throw std::invalid_argument("subset codebook size does not match generator");
  }
}

std::size_t ar_row(std::span<const std::uint32_t> tokens, std::size_t i, std::size_t window,
                   std::size_t k) {
  std::size_t row = 0;
  std::size_t scale = 1;
  for (std::size_t j = 1; j <= window; ++j) {
    const std::size_t c = i >= j ? tokens[i - j] : k;
    row += c * scale;
    scale *= (k + 1);
  }
  return row;
}

// Masked cells hold the sentinel K, which selects the MASK row.
std::size_t mim_row(std::span<const std::uint32_t> state, std::size_t i) {
  const std::size_t n = state.size();
  const std::size_t left = (i + n - 1) % n;
  return state[left];
}

// Positions chosen for reveal at one MIM step, sorted ascending.
std::vector<std::uint32_t> confidence_select(const CategoricalTable& table,
                                             std::span<const std::uint32_t> state,
                                             const std::vector<std::uint32_t>& masked,
                                             std::size_t count, const CodebookSubset& subset,
                                             StepRule rule) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  std::vector<double> q;
  for (std::uint32_t pos : masked) {
    effective_distribution(table.row(mim_row(state, pos)), subset, rule, q);
    scored.emplace_back(*std::max_element(q.begin(), q.end()), pos);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::uint32_t> chosen;
  for (std::size_t j = 0; j < count; ++j) chosen.push_back(scored[j].second);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<std::uint32_t> uniform_select(const std::vector<std::uint32_t>& masked,
                                          std::size_t count, std::uint64_t seed,
                                          std::size_t step) {
  std::vector<std::uint32_t> pool = masked;
  Rng rng(derive_seed(seed, {stream::kPath, step}));
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
    std::swap(pool[j], pool[pick]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void remove_positions(std::vector<std::uint32_t>& masked, const std::vector<std::uint32_t>& chosen) {
  std::vector<std::uint32_t> rest;
  std::set_difference(masked.begin(), masked.end(), chosen.begin(), chosen.end(),
                      std::back_inserter(rest));
  masked = std::move(rest);
}

}  // namespace

std::uint64_t generation_seed(const GeneratorSpec& spec, std::uint64_t seed) {
  return derive_seed(seed, fnv1a(spec.seed_label));
}

Sample ar_generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                   const CodebookSubset& subset, std::uint64_t seed) {
  require(spec, Strategy::AR, subset);
  const std::uint64_t s = generation_seed(spec, seed);
  const auto& table = spec.table(x);
  const std::size_t n = spec.tokens();
  const std::size_t k = spec.codes();
  TokenGrid grid{spec.grid_side, std::vector<std::uint32_t>(n, 0)};
  std::vector<double> q;
  for (std::size_t i = 0; i < n; ++i) {
    effective_distribution(table.row(ar_row(grid.tokens, i, spec.ar_window, k)), subset,
                           step_rule(policy, i, n), q);
    grid.tokens[i] = draw_categorical(q, token_uniform(s, stream::kToken, i, 0));
  }
  return {std::move(grid), ArPath{n}};
}

Sample mim_generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                    const CodebookSubset& subset, std::uint64_t seed) {
  require(spec, Strategy::MIM, subset);
  const std::uint64_t s = generation_seed(spec, seed);
  const auto& table = spec.table(x);
  const std::size_t n = spec.tokens();
  const std::size_t k = spec.codes();
  const auto counts = unmask_counts(spec);
  std::vector<std::uint32_t> state(n, static_cast<std::uint32_t>(k));
  std::vector<std::uint32_t> masked(n);
  std::iota(masked.begin(), masked.end(), 0u);
  MimPath path;
  std::vector<double> q;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> reveals;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    path.mask_sets.push_back(masked);
    const StepRule rule = step_rule(policy, t, counts.size());
    const auto chosen = spec.unmask == UnmaskMode::Uniform
                            ? uniform_select(masked, counts[t], s, t)
                            : confidence_select(table, state, masked, counts[t], subset, rule);
    reveals.clear();
    for (std::uint32_t pos : chosen) {
      effective_distribution(table.row(mim_row(state, pos)), subset, rule, q);
      reveals.emplace_back(pos, draw_categorical(q, token_uniform(s, stream::kToken, t, pos)));
    }
    for (const auto& [pos, value] : reveals) state[pos] = value;
    remove_positions(masked, chosen);
  }
  return {TokenGrid{spec.grid_side, std::move(state)}, std::move(path)};
}

Sample diff_generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                     const CodebookSubset& subset, std::uint64_t seed) {
  require(spec, Strategy::DIFF, subset);
  const std::uint64_t s = generation_seed(spec, seed);
  const auto& table = spec.table(x);
  const std::size_t n = spec.tokens();
  const std::size_t transitions = spec.decision_steps();
  std::vector<double> q;
  // The prior draw sees the subset but never the sampling policy.
  TokenGrid z{spec.grid_side, std::vector<std::uint32_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    effective_distribution(spec.prior, subset, StepRule{}, q);
    z.tokens[i] = draw_categorical(q, token_uniform(s, stream::kPrior, 0, i));
  }
  DiffPath path;
  path.trajectory.push_back(z);
  for (std::size_t step = 0; step < transitions; ++step) {
    const StepRule rule = step_rule(policy, step, transitions);
    TokenGrid next{spec.grid_side, std::vector<std::uint32_t>(n, 0)};
    for (std::size_t i = 0; i < n; ++i) {
      effective_distribution(table.row(z.tokens[i]), subset, rule, q);
      next.tokens[i] = draw_categorical(q, token_uniform(s, stream::kToken, step, i));
    }
    z = next;
    path.trajectory.push_back(std::move(next));
  }
  return {std::move(z), std::move(path)};
}

Sample generate(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
                const CodebookSubset& subset, std::uint64_t seed) {
  switch (spec.strategy) {
    case Strategy::AR: return ar_generate(spec, x, policy, subset, seed);
    case Strategy::MIM: return mim_generate(spec, x, policy, subset, seed);
    case Strategy::DIFF: return diff_generate(spec, x, policy, subset, seed);
  }
  throw std::invalid_argument("unknown strategy");
}

std::vector<std::uint32_t> path_key(const GenerationPath& path) {
  std::vector<std::uint32_t> key;
  if (const auto* mim = std::get_if<MimPath>(&path)) {
    for (std::size_t t = 0; t < mim->mask_sets.size(); ++t) {
      const auto& now = mim->mask_sets[t];
      if (t + 1 < mim->mask_sets.size()) {
        std::set_difference(now.begin(), now.end(), mim->mask_sets[t + 1].begin(),
                            mim->mask_sets[t + 1].end(), std::back_inserter(key));
      } else {
        key.insert(key.end(), now.begin(), now.end());
      }
    }
  } else if (const auto* diff = std::get_if<DiffPath>(&path)) {
    for (const auto& z : diff->trajectory) key.insert(key.end(), z.tokens.begin(), z.tokens.end());
  }
  return key;
}

GenerationPath path_from_key(const GeneratorSpec& spec, std::span<const std::uint32_t> key) {
  const std::size_t n = spec.tokens();
  switch (spec.strategy) {
    case Strategy::AR:
      if (!key.empty()) throw std::invalid_argument("AR path keys are empty");
      return ArPath{n};
    case Strategy::MIM: {
      if (key.size() != n) throw std::invalid_argument("MIM path key must list every position once");
      const auto counts = unmask_counts(spec);
      MimPath path;
      std::vector<std::uint32_t> masked(n);
      std::iota(masked.begin(), masked.end(), 0u);
      std::size_t offset = 0;
      for (std::size_t c : counts) {
        path.mask_sets.push_back(masked);
        std::vector<std::uint32_t> chosen(key.begin() + static_cast<std::ptrdiff_t>(offset),
                                          key.begin() + static_cast<std::ptrdiff_t>(offset + c));
        std::sort(chosen.begin(), chosen.end());
        remove_positions(masked, chosen);
        offset += c;
      }
      return path;
    }
    case Strategy::DIFF: {
      if (key.size() != n * spec.steps) throw std::invalid_argument("DIFF path key has wrong length");
      DiffPath path;
      for (std::size_t t = 0; t < spec.steps; ++t) {
        path.trajectory.push_back(TokenGrid{
            spec.grid_side, std::vector<std::uint32_t>(key.begin() + static_cast<std::ptrdiff_t>(t * n),
                                                       key.begin() + static_cast<std::ptrdiff_t>((t + 1) * n))});
      }
      return path;
    }
  }
  throw std::invalid_argument("unknown strategy");
}

namespace {

// Depth-first exact enumeration. Leaves are appended to `out`.
class Enumerator {
 public:
  Enumerator(const GeneratorSpec& spec, const Condition& x, const SamplingPolicy& policy,
             const CodebookSubset& subset, std::size_t bound)
      : spec_(spec), table_(spec.table(x)), policy_(policy), subset_(subset), bound_(bound),
        n_(spec.tokens()), k_(spec.codes()) {}

  std::vector<Outcome> run() {
    switch (spec_.strategy) {
      case Strategy::AR: {
        std::vector<std::uint32_t> tokens(n_, 0);
        ar(0, 1.0, tokens);
        break;
      }
      case Strategy::MIM: {
        counts_ = unmask_counts(spec_);
        std::vector<std::uint32_t> state(n_, static_cast<std::uint32_t>(k_));
        std::vector<std::uint32_t> masked(n_);
        std::iota(masked.begin(), masked.end(), 0u);
        std::vector<std::uint32_t> key;
        mim(0, 1.0, state, masked, key);
        break;
      }
      case Strategy::DIFF: {
        std::vector<double> q;
        effective_distribution(spec_.prior, subset_, StepRule{}, q);
        std::vector<std::vector<double>> dists(n_, q);
        std::vector<std::uint32_t> key;
        product(dists, 0, 1.0, std::vector<std::uint32_t>(n_, 0),
                [&](const std::vector<std::uint32_t>& z, double p) { diff(0, p, z, key); });
        break;
      }
    }
    return std::move(out_);
  }

 private:
  void emit(std::vector<std::uint32_t> key, std::vector<std::uint32_t> tokens, double p) {
    if (out_.size() >= bound_) {
      throw EnumerationLimitError("generator '" + spec_.name + "' has more than " +
                                  std::to_string(bound_) + " reachable outcomes");
    }
    out_.push_back({std::move(key), std::move(tokens), p});
  }

  void ar(std::size_t i, double p, std::vector<std::uint32_t>& tokens) {
    if (i == n_) {
      emit({}, tokens, p);
      return;
    }
    std::vector<double> q;
    effective_distribution(table_.row(ar_row(tokens, i, spec_.ar_window, k_)), subset_,
                           step_rule(policy_, i, n_), q);
    for (std::size_t c = 0; c < k_; ++c) {
      if (q[c] <= 0.0) continue;
      tokens[i] = static_cast<std::uint32_t>(c);
      ar(i + 1, p * q[c], tokens);
    }
    tokens[i] = 0;
  }

  // Visits every assignment of independent per-slot distributions.
  template <typename Fn>
  void product(const std::vector<std::vector<double>>& dists, std::size_t slot, double p,
               std::vector<std::uint32_t> values, Fn&& fn) {
    if (slot == dists.size()) {
      fn(values, p);
      return;
    }
    for (std::size_t c = 0; c < dists[slot].size(); ++c) {
      if (dists[slot][c] <= 0.0) continue;
      values[slot] = static_cast<std::uint32_t>(c);
      product(dists, slot + 1, p * dists[slot][c], values, fn);
    }
  }

  void mim(std::size_t t, double p, const std::vector<std::uint32_t>& state,
           const std::vector<std::uint32_t>& masked, std::vector<std::uint32_t>& key) {
    if (t == counts_.size()) {
      emit(key, state, p);
      return;
    }
    const StepRule rule = step_rule(policy_, t, counts_.size());
    const std::size_t count = counts_[t];
    auto reveal = [&](const std::vector<std::uint32_t>& chosen, double p_sel) {
      std::vector<std::vector<double>> dists(chosen.size());
      for (std::size_t j = 0; j < chosen.size(); ++j) {
        effective_distribution(table_.row(mim_row(state, chosen[j])), subset_, rule, dists[j]);
      }
      std::vector<std::uint32_t> rest = masked;
      remove_positions(rest, chosen);
      const std::size_t key_size = key.size();
      key.insert(key.end(), chosen.begin(), chosen.end());
      product(dists, 0, p * p_sel, std::vector<std::uint32_t>(chosen.size(), 0),
              [&](const std::vector<std::uint32_t>& values, double pv) {
                std::vector<std::uint32_t> next = state;
                for (std::size_t j = 0; j < chosen.size(); ++j) next[chosen[j]] = values[j];
                mim(t + 1, pv, next, rest, key);
              });
      key.resize(key_size);
    };
    if (spec_.unmask == UnmaskMode::Confidence) {
      reveal(confidence_select(table_, state, masked, count, subset_, rule), 1.0);
      return;
    }
    // All count-subsets of the masked set, lexicographic, equiprobable.
    const std::size_t m = masked.size();
    double combos = 1.0;
    for (std::size_t j = 0; j < count; ++j) combos = combos * static_cast<double>(m - j) / static_cast<double>(j + 1);
    const double p_sel = 1.0 / std::round(combos);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
      std::vector<std::uint32_t> chosen(count);
      for (std::size_t j = 0; j < count; ++j) chosen[j] = masked[idx[j]];
      reveal(chosen, p_sel);
      std::size_t j = count;
      while (j > 0 && idx[j - 1] == m - count + (j - 1)) --j;
      if (j == 0) break;
      ++idx[j - 1];
      for (std::size_t r = j; r < count; ++r) idx[r] = idx[r - 1] + 1;
    }
  }

  void diff(std::size_t step, double p, const std::vector<std::uint32_t>& z,
            std::vector<std::uint32_t>& key) {
    const std::size_t key_size = key.size();
    key.insert(key.end(), z.begin(), z.end());
    const std::size_t transitions = spec_.decision_steps();
    if (step == transitions) {
      emit(key, z, p);
    } else {
      const StepRule rule = step_rule(policy_, step, transitions);
      std::vector<std::vector<double>> dists(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        effective_distribution(table_.row(z[i]), subset_, rule, dists[i]);
      }
      product(dists, 0, p, std::vector<std::uint32_t>(n_, 0),
              [&](const std::vector<std::uint32_t>& next, double pn) { diff(step + 1, pn, next, key); });
    }
    key.resize(key_size);
  }

  const GeneratorSpec& spec_;
  const CategoricalTable& table_;
  const SamplingPolicy& policy_;
  const CodebookSubset& subset_;
  std::size_t bound_;
  std::size_t n_;
  std::size_t k_;
  std::vector<std::size_t> counts_;
  std::vector<Outcome> out_;
};

}  // namespace

std::vector<Outcome> enumerate_outcomes(const GeneratorSpec& spec, const Condition& x,
                                        const SamplingPolicy& policy,
                                        const CodebookSubset& subset, std::size_t bound) {
  require(spec, spec.strategy, subset);
  return Enumerator(spec, x, policy, subset, bound).run();
}

std::size_t min_patch_size(std::size_t dim) {
  std::size_t s = 1;
  while (s * s < 2 * dim) ++s;
  return s;
}

Image decode(const TokenGrid& z, const Codebook& cb, std::size_t patch_size) {
  const std::size_t d = cb.dim();
  const std::size_t p = patch_size == 0 ? min_patch_size(d) : patch_size;
  if (p * p < 2 * d) {
    throw std::invalid_argument("decode: patch size " + std::to_string(p) + " too small for code dimension " +
                                std::to_string(d) + ", need at least " + std::to_string(min_patch_size(d)));
  }
  if (z.tokens.size() != z.side * z.side) throw std::invalid_argument("decode: malformed token grid");
  const auto [lo, hi] = cb.value_range();
  const double span = hi - lo;
  const std::size_t side = z.side * p;
  Image img{side, side, std::vector<double>(side * side, 0.0)};
  for (std::size_t gr = 0; gr < z.side; ++gr) {
    for (std::size_t gc = 0; gc < z.side; ++gc) {
      const auto e = cb.entry(z.tokens[gr * z.side + gc]);
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
          const std::size_t q = r * p + c;
          const double u = span > 0.0 ? (e[(q / 2) % d] - lo) / span : 0.5;
          img.pixels[(gr * p + r) * side + gc * p + c] = q % 2 == 0 ? u : 1.0 - u;
        }
      }
    }
  }
  return img;
}

std::vector<std::uint32_t> ToyWorld::classes() const {
  std::vector<std::uint32_t> out;
  for (const auto& c : conditions) {
    if (std::find(out.begin(), out.end(), c.semantic_class) == out.end()) out.push_back(c.semantic_class);
  }
  return out;
}

std::vector<Condition> ToyWorld::class_conditions(std::uint32_t semantic_class) const {
  std::vector<Condition> out;
  for (const auto& c : conditions) {
    if (c.semantic_class == semantic_class) out.push_back(c);
  }
  return out;
}

const Condition& ToyWorld::find(std::uint32_t semantic_class, std::uint32_t surface_form) const {
  for (const auto& c : conditions) {
    if (c.semantic_class == semantic_class && c.surface_form == surface_form) return c;
  }
  throw std::invalid_argument("world has no condition c" + std::to_string(semantic_class) + ".f" +
                              std::to_string(surface_form));
}

void ToyWorld::validate() const {
  if (conditions.empty()) throw ConfigError("world has no conditions");
  if (patch_size == 0) throw ConfigError("world patch size must be positive");
  std::set<ConditionKey> seen;
  for (const auto& c : conditions) {
    if (!seen.insert(key_of(c)).second) {
      throw ConfigError("world lists condition " + condition_label(c) + " twice");
    }
  }
  for (std::uint32_t cls : classes()) {
    if (class_conditions(cls).size() < kMinSurfaceForms) {
      throw ConfigError("semantic class " + std::to_string(cls) + " has fewer than " +
                        std::to_string(kMinSurfaceForms) + " surface forms");
    }
  }
}

}  // namespace ibdiag
