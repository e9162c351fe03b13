#include "ibdiag/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ibdiag/rng.hpp"

namespace ibdiag {

namespace {

constexpr std::size_t kRefCodes = 8;
constexpr std::uint32_t kRefClasses = 2;
constexpr std::uint32_t kRefForms = 10;

LengthTag form_tag(std::uint32_t form) {
  if (form == 0) return LengthTag::Medium;
  if (form <= 3) return LengthTag::Short;
  if (form <= 6) return LengthTag::Medium;
  return LengthTag::Long;
}

std::shared_ptr<const Codebook> ref_codebook() {
  return std::make_shared<const Codebook>(Codebook::fsq({kRefCodes}));
}

// Context row shape for the masked generator: mass `focus` over two codes
// split `split` / 1 - split, the rest spread over the other codes. Rows are
// listed by context code relative to the condition shift; the last is MASK.
struct MimRow {
  std::uint32_t a, b;
  double focus, split;
};

constexpr MimRow kMimRows[kRefCodes + 1] = {
    {6, 2, 0.866, 0.619}, {3, 1, 0.885, 0.748}, {0, 3, 0.844, 0.530}, {6, 6, 0.866, 0.563}, {7, 1, 0.866, 0.599},
    {7, 4, 0.869, 0.746}, {3, 0, 0.866, 0.693}, {3, 6, 0.866, 0.542}, {6, 5, 0.879, 0.699},
};

std::vector<double> mim_row(const MimRow& r, std::size_t shift) {
  const std::size_t k = kRefCodes;
  const std::size_t a = (r.a + shift) % k, b = (r.b + shift) % k;
  std::vector<double> row(k, (1.0 - r.focus) / static_cast<double>(k - 2));
  if (a == b) {
    row[a] = r.focus + (1.0 - r.focus) / static_cast<double>(k - 2);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
  } else {
    row[a] = r.focus * r.split;
    row[b] = r.focus * (1.0 - r.split);
  }
  return row;
}

}  // namespace

ToyWorld reference_world() {
  ToyWorld w;
  w.patch_size = 4;
  for (std::uint32_t c = 0; c < kRefClasses; ++c) {
    for (std::uint32_t f = 0; f < kRefForms; ++f) w.conditions.push_back({c, f, form_tag(f)});
  }
  return w;
}

std::shared_ptr<GeneratorSpec> reference_ar(const ReferenceShapes& shapes) {
  auto spec = std::make_shared<GeneratorSpec>();
  spec->name = "reference-ar";
  spec->strategy = Strategy::AR;
  spec->grid_side = 2;
  spec->codebook = ref_codebook();
  spec->ar_window = 1;
  spec->seed_label = "reference-ar";
  const std::size_t k = kRefCodes;
  const double off = (1.0 - shapes.ar_peak) / static_cast<double>(k - 1);
  for (const auto& x : reference_world().conditions) {
    std::vector<std::vector<double>> rows;
    for (std::size_t ctx = 0; ctx <= k; ++ctx) {
      std::vector<double> row(k, off);
      row[(3 * x.semantic_class + x.surface_form + ctx) % k] = shapes.ar_peak;
      rows.push_back(std::move(row));
    }
    spec->tables.emplace(key_of(x), CategoricalTable(rows));
  }
  spec->validate();
  return spec;
}

std::shared_ptr<GeneratorSpec> reference_mim() {
  auto spec = std::make_shared<GeneratorSpec>();
  spec->name = "reference-mim";
  spec->strategy = Strategy::MIM;
  spec->grid_side = 2;
  spec->codebook = ref_codebook();
  spec->steps = 4;
  spec->schedule = MaskSchedule::Cosine;
  spec->unmask = UnmaskMode::Uniform;
  spec->seed_label = "reference-mim";
  const std::size_t k = kRefCodes;
  for (const auto& x : reference_world().conditions) {
    std::vector<std::vector<double>> rows;
    const std::size_t shift = (x.surface_form + 4 * x.semantic_class) % k;
    for (std::size_t ctx = 0; ctx <= k; ++ctx) {
      rows.push_back(mim_row(kMimRows[ctx == k ? k : (ctx + k - shift) % k], shift));
    }
    spec->tables.emplace(key_of(x), CategoricalTable(rows));
  }
  spec->validate();
  return spec;
}

std::shared_ptr<GeneratorSpec> reference_diff(const ReferenceShapes& shapes) {
  auto spec = std::make_shared<GeneratorSpec>();
  spec->name = "reference-diff";
  spec->strategy = Strategy::DIFF;
  spec->grid_side = 2;
  spec->codebook = ref_codebook();
  spec->steps = 3;
  spec->seed_label = "reference-diff";
  const std::size_t k = kRefCodes;
  spec->prior.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) spec->prior[c] = c < k / 2 ? 0.2 : 0.05;
  constexpr std::size_t kFallback = 0;
  for (const auto& x : reference_world().conditions) {
    // successor flips the upper half and permutes the low bits per condition, so
    // two transitions return to the starting code
    const std::size_t twist = (x.semantic_class + x.surface_form) % (k / 2);
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> row(k, 0.0);
      const std::size_t next = ((j ^ twist) + k / 2) % k;
      row[next] += shapes.diff_stay;
      row[kFallback] += 1.0 - shapes.diff_stay;
      rows.push_back(std::move(row));
    }
    spec->tables.emplace(key_of(x), CategoricalTable(rows));
  }
  spec->validate();
  return spec;
}

std::shared_ptr<GeneratorSpec> reference_generator(Strategy s, const ReferenceShapes& shapes) {
  switch (s) {
    case Strategy::AR: return reference_ar(shapes);
    case Strategy::MIM: return reference_mim();
    case Strategy::DIFF: return reference_diff(shapes);
  }
  throw std::invalid_argument("unknown strategy");
}

namespace {

std::shared_ptr<const Codebook> random_codebook(Rng& rng) {
  switch (rng.below(3)) {
    case 0: {
      std::vector<std::size_t> levels;
      std::size_t size = 1;
      const std::size_t dims = 1 + rng.below(3);
      for (std::size_t i = 0; i < dims; ++i) {
        const std::size_t cap = 8 / size;
        if (cap < 2) break;
        const std::size_t l = 2 + rng.below(cap - 1);
        levels.push_back(l);
        size *= l;
      }
      return std::make_shared<const Codebook>(Codebook::fsq(levels));
    }
    case 1: return std::make_shared<const Codebook>(Codebook::lfq(1 + rng.below(3)));
    default: return std::make_shared<const Codebook>(Codebook::bsq(1 + rng.below(3)));
  }
}

// Random distribution over `k` codes with at most `support` nonzero entries.
std::vector<double> sparse_row(Rng& rng, std::size_t k, std::size_t support) {
  std::vector<std::size_t> codes(k);
  std::iota(codes.begin(), codes.end(), 0);
  const std::size_t s = 1 + rng.below(std::min(support, k));
  for (std::size_t j = 0; j < s; ++j) std::swap(codes[j], codes[j + rng.below(k - j)]);
  std::vector<double> row(k, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < s; ++j) {
    row[codes[j]] = 0.05 + rng.uniform();
    total += row[codes[j]];
  }
  for (double& p : row) p /= total;
  return row;
}

double outcome_estimate(const GeneratorSpec& spec, std::size_t support) {
  const double n = static_cast<double>(spec.tokens());
  const double s = static_cast<double>(std::min(support, spec.codes()));
  switch (spec.strategy) {
    case Strategy::AR: return std::pow(s, n);
    case Strategy::MIM: return std::tgamma(n + 1.0) * std::pow(s, n);
    case Strategy::DIFF: return std::pow(s, n * static_cast<double>(spec.steps));
  }
  return 0.0;
}

}  // namespace

RandomCase random_case(std::uint64_t seed, Strategy strategy, std::size_t bound) {
  Rng rng(derive_seed(seed, stream::kFixture));
  RandomCase rc;
  auto spec = std::make_shared<GeneratorSpec>();
  spec->name = "random-" + to_string(strategy) + "-" + std::to_string(seed);
  spec->strategy = strategy;
  spec->codebook = random_codebook(rng);
  spec->grid_side = 1 + rng.below(2);
  spec->seed_label = spec->name;
  const std::size_t k = spec->codes();
  const std::size_t n = spec->tokens();
  switch (strategy) {
    case Strategy::AR: spec->ar_window = 1 + rng.below(n > 1 ? 2 : 1); break;
    case Strategy::MIM: {
      spec->steps = 1 + rng.below(std::min<std::size_t>(4, n));
      spec->schedule = rng.below(2) ? MaskSchedule::Cosine : MaskSchedule::Linear;
      spec->unmask = rng.below(2) ? UnmaskMode::Uniform : UnmaskMode::Confidence;
      if (rng.below(3) == 0) {
        spec->explicit_counts.assign(spec->steps, 1);
        for (std::size_t extra = n - spec->steps; extra > 0; --extra) ++spec->explicit_counts[rng.below(spec->steps)];
      }
      break;
    }
    case Strategy::DIFF: spec->steps = 1 + rng.below(4); break;
  }
  std::size_t support = 4;
  while (support > 1 && outcome_estimate(*spec, support) > static_cast<double>(bound)) --support;
  if (strategy == Strategy::DIFF) spec->prior = sparse_row(rng, k, support);
  const std::size_t conditions = 1 + rng.below(3);
  double total = 0.0;
  for (std::uint32_t c = 0; c < conditions; ++c) {
    const Condition x{c, 0, LengthTag::Medium};
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < spec->context_rows(); ++r) rows.push_back(sparse_row(rng, k, support));
    spec->tables.emplace(key_of(x), CategoricalTable(rows));
    rc.conditions.push_back(x);
    rc.weights.push_back(0.1 + rng.uniform());
    total += rc.weights.back();
  }
  for (double& w : rc.weights) w /= total;
  spec->validate();
  rc.spec = std::move(spec);
  return rc;
}

}  // namespace ibdiag
