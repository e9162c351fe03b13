#include "ibdiag/probes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <thread>

#include "ibdiag/errors.hpp"
#include "ibdiag/rng.hpp"

namespace ibdiag {

std::string to_string(ArgmaxStage s) {
  switch (s) {
    case ArgmaxStage::All: return "all";
    case ArgmaxStage::Early: return "early";
    case ArgmaxStage::Middle: return "middle";
    case ArgmaxStage::Late: return "late";
  }
  return "all";
}

std::string to_string(ParaphraseMode m) {
  switch (m) {
    case ParaphraseMode::Short: return "short";
    case ParaphraseMode::Medium: return "medium";
    case ParaphraseMode::Long: return "long";
    case ParaphraseMode::Mixed: return "mixed";
  }
  return "mixed";
}

ArgmaxStage parse_argmax_stage(const std::string& s) {
  if (s == "all") return ArgmaxStage::All;
  if (s == "early") return ArgmaxStage::Early;
  if (s == "middle") return ArgmaxStage::Middle;
  if (s == "late") return ArgmaxStage::Late;
  throw ConfigError("unknown argmax stage '" + s + "'");
}

ParaphraseMode parse_paraphrase_mode(const std::string& s) {
  if (s == "short") return ParaphraseMode::Short;
  if (s == "medium") return ParaphraseMode::Medium;
  if (s == "long") return ParaphraseMode::Long;
  if (s == "mixed") return ParaphraseMode::Mixed;
  throw ConfigError("unknown paraphrase mode '" + s + "'");
}

std::string describe(const ProbeSpec& probe) {
  if (const auto* s = std::get_if<SubsetProbe>(&probe)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "subset_%s_%.9g", to_string(s->policy).c_str(), s->ratio);
    return buf;
  }
  if (const auto* a = std::get_if<ArgmaxProbe>(&probe)) return "argmax_" + to_string(a->stage);
  const auto& p = std::get<ParaphraseProbe>(probe);
  return "paraphrase_" + to_string(p.mode) + "_" + std::to_string(p.k);
}

nlohmann::ordered_json to_json(const ProbeSpec& probe) {
  if (const auto* s = std::get_if<SubsetProbe>(&probe)) {
    return {{"kind", "subset"}, {"policy", to_string(s->policy)}, {"ratio", s->ratio}, {"seed", s->seed}};
  }
  if (const auto* a = std::get_if<ArgmaxProbe>(&probe)) {
    return {{"kind", "argmax"}, {"stage", to_string(a->stage)}};
  }
  const auto& p = std::get<ParaphraseProbe>(probe);
  return {{"kind", "paraphrase"}, {"mode", to_string(p.mode)}, {"k", p.k}};
}

ProbeSpec probe_from_json(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "subset") {
    SubsetProbe s;
    s.policy = parse_subset_policy(doc.value("policy", std::string("drop_least_frequent")));
    s.ratio = doc.value("ratio", 0.5);
    s.seed = doc.value("seed", std::uint64_t{0});
    if (!(s.ratio > 0.0 && s.ratio <= 1.0)) throw ConfigError("subset ratio must lie in (0, 1]");
    return s;
  }
  if (kind == "argmax") return ArgmaxProbe{parse_argmax_stage(doc.value("stage", std::string("all")))};
  if (kind == "paraphrase") {
    ParaphraseProbe p{parse_paraphrase_mode(doc.value("mode", std::string("mixed"))),
                      doc.value("k", std::size_t{5})};
    if (p.k < 2) throw ConfigError("paraphrase sets need k >= 2");
    return p;
  }
  throw ConfigError("unknown probe kind '" + kind + "'");
}

std::vector<Condition> paraphrase_set(const ToyWorld& world, const Condition& x,
                                      ParaphraseMode mode, std::size_t k) {
  if (k < 2) throw std::invalid_argument("a paraphrase set needs at least 2 conditions");
  std::array<std::vector<Condition>, 3> by_tag;
  for (const auto& c : world.class_conditions(x.semantic_class)) {
    if (c.surface_form == x.surface_form) continue;
    by_tag[static_cast<std::size_t>(c.length)].push_back(c);
  }
  std::array<std::size_t, 3> want{0, 0, 0};
  switch (mode) {
    case ParaphraseMode::Short: want[0] = k; break;
    case ParaphraseMode::Medium: want[1] = k; break;
    case ParaphraseMode::Long: want[2] = k; break;
    case ParaphraseMode::Mixed:
      for (std::size_t t = 0; t < 3; ++t) want[t] = k / 3 + (t < k % 3 ? 1 : 0);
      break;
  }
  std::vector<Condition> out;
  for (std::size_t t = 0; t < 3; ++t) {
    if (by_tag[t].size() < want[t]) {
      throw std::invalid_argument("semantic class " + std::to_string(x.semantic_class) + " has only " +
                                  std::to_string(by_tag[t].size()) + " " +
                                  to_string(static_cast<LengthTag>(t)) + " paraphrases, need " +
                                  std::to_string(want[t]));
    }
    out.insert(out.end(), by_tag[t].begin(), by_tag[t].begin() + static_cast<std::ptrdiff_t>(want[t]));
  }
  return out;
}

CodebookSubset ExperimentSettings::active_subset() const {
  return subset ? *subset : CodebookSubset::full(spec->codebook);
}

ExperimentSettings baseline_settings(const ToyWorld& world, std::shared_ptr<const GeneratorSpec> spec) {
  ExperimentSettings s;
  s.spec = std::move(spec);
  s.patch_size = world.patch_size;
  for (std::uint32_t cls : world.classes()) {
    const Condition original = world.class_conditions(cls).front();
    s.prompts.push_back({condition_label(original), {original}});
  }
  return s;
}

std::vector<std::size_t> pooled_allocation(std::size_t n, std::size_t k) {
  if (k == 0) throw std::invalid_argument("pooled_allocation: no conditions");
  std::vector<std::size_t> out(k);
  for (std::size_t g = 0; g < k; ++g) out[g] = n / k + (g < n % k ? 1 : 0);
  return out;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += jobs) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Slot {
  std::size_t prompt;
  std::size_t index;
  std::size_t group;
};

std::vector<PromptSamples> generate_all(const ExperimentSettings& settings, std::size_t n,
                                        std::uint64_t seed, std::uint64_t stream_label,
                                        std::size_t jobs, bool with_images) {
  if (!settings.spec) throw std::invalid_argument("settings have no generator");
  const CodebookSubset subset = settings.active_subset();
  std::vector<PromptSamples> out(settings.prompts.size());
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < settings.prompts.size(); ++p) {
    const auto& prompt = settings.prompts[p];
    if (prompt.pooled.empty()) throw std::invalid_argument("prompt '" + prompt.label + "' has no conditions");
    out[p].prompt = prompt.label;
    out[p].grids.resize(n);
    if (with_images) out[p].images.resize(n);
    out[p].groups.resize(n);
    out[p].conditions.resize(n);
    const auto alloc = pooled_allocation(n, prompt.pooled.size());
    std::size_t j = 0;
    for (std::size_t g = 0; g < alloc.size(); ++g) {
      for (std::size_t r = 0; r < alloc[g]; ++r) slots.push_back({p, j++, g});
    }
  }
  parallel_for(slots.size(), jobs, [&](std::size_t s) {
    const Slot& slot = slots[s];
    const Condition& x = settings.prompts[slot.prompt].pooled[slot.group];
    const std::uint64_t sample_seed = derive_seed(seed, {stream_label, slot.prompt, slot.index});
    Sample sample = generate(*settings.spec, x, settings.policy, subset, sample_seed);
    auto& ps = out[slot.prompt];
    if (with_images) ps.images[slot.index] = decode(sample.grid, *settings.spec->codebook, settings.patch_size);
    ps.grids[slot.index] = std::move(sample.grid);
    ps.groups[slot.index] = slot.group;
    ps.conditions[slot.index] = x;
  });
  return out;
}

}  // namespace

std::vector<PromptSamples> collect_samples(const ExperimentSettings& settings, std::size_t n,
                                           std::uint64_t seed, std::size_t jobs) {
  return generate_all(settings, n, seed, stream::kSample, jobs, true);
}

UsageHistogram collect_usage(const ExperimentSettings& settings, std::size_t per_prompt,
                             std::uint64_t seed, std::size_t jobs) {
  const auto samples = generate_all(settings, per_prompt, seed, stream::kValidation, jobs, false);
  UsageHistogram h{std::vector<std::uint64_t>(settings.spec->codes(), 0)};
  for (const auto& ps : samples) {
    for (const auto& g : ps.grids) {
      for (std::uint32_t t : g.tokens) ++h.counts[t];
    }
  }
  return h;
}

ExperimentSettings with_usage(const ExperimentSettings& settings, std::uint64_t seed, std::size_t jobs) {
  if (!settings.usage.counts.empty()) return settings;
  ExperimentSettings out = settings;
  out.usage = collect_usage(settings, settings.validation_samples, seed, jobs);
  return out;
}

ExperimentSettings apply_probe(const ToyWorld& world, const ExperimentSettings& base,
                               const ProbeSpec& probe) {
  ExperimentSettings out = base;
  out.applied.push_back(describe(probe));
  if (const auto* s = std::get_if<SubsetProbe>(&probe)) {
    if (base.usage.counts.empty()) {
      throw std::invalid_argument("subset probe needs validation usage statistics");
    }
    out.subset = restrict_codebook(base.spec->codebook, base.usage, s->policy, s->ratio, s->seed);
    return out;
  }
  if (const auto* a = std::get_if<ArgmaxProbe>(&probe)) {
    if (a->stage == ArgmaxStage::All) {
      out.policy = Argmax{};
      return out;
    }
    if (base.spec->decision_steps() < 3) {
      throw std::invalid_argument("staged argmax needs at least 3 sampling steps, generator '" +
                                  base.spec->name + "' has " +
                                  std::to_string(base.spec->decision_steps()));
    }
    double temperature = 1.0;
    if (const auto* st = std::get_if<Stochastic>(&base.policy)) temperature = st->temperature;
    out.policy = Staged{static_cast<Stage>(static_cast<int>(a->stage) - 1), temperature};
    return out;
  }
  const auto& para = std::get<ParaphraseProbe>(probe);
  for (auto& prompt : out.prompts) {
    const Condition original = prompt.pooled.front();
    prompt.pooled = paraphrase_set(world, original, para.mode, para.k);
    prompt.label = condition_label(original) + "+" + to_string(para.mode);
  }
  return out;
}

double relative_change(double baseline, double intervened) {
  if (baseline != 0.0) return (intervened - baseline) / baseline;
  return intervened == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

std::optional<QualityProxy> try_quality(const std::vector<PromptSamples>& samples, GroundTruth& truth) {
  try {
    return quality_proxy(samples, truth);
  } catch (const EnumerationLimitError&) {
    return std::nullopt;
  }
}

ProbeResult run_probe(const ToyWorld& world, const ExperimentSettings& settings,
                      const ProbeSpec& probe, std::size_t n, std::uint64_t seed, std::size_t jobs) {
  if (n < 2) throw std::invalid_argument("run_probe needs at least 2 samples per prompt");
  const ExperimentSettings base = with_usage(settings, seed, jobs);
  const ExperimentSettings intervened = apply_probe(world, base, probe);
  ProbeResult r;
  r.probe = describe(probe);
  r.samples_per_prompt = n;
  r.seed = seed;
  const auto base_samples = collect_samples(base, n, seed, jobs);
  const auto int_samples = collect_samples(intervened, n, seed, jobs);
  r.baseline = pairwise_diversity(base_samples);
  r.intervened = pairwise_diversity(int_samples);
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    r.delta[m] = r.intervened.values[m] - r.baseline.values[m];
    r.relative_delta[m] = relative_change(r.baseline.values[m], r.intervened.values[m]);
  }
  GroundTruth truth(*settings.spec);
  r.baseline_quality = try_quality(base_samples, truth);
  if (r.baseline_quality) r.intervened_quality = try_quality(int_samples, truth);
  return r;
}

nlohmann::ordered_json to_json(const QualityProxy& q) {
  return {{"bits_per_token", q.bits_per_token},
          {"finite_bits_per_token", q.finite_bits_per_token},
          {"unreachable", q.unreachable},
          {"samples", q.samples}};
}

nlohmann::ordered_json to_json(const ProbeResult& r) {
  nlohmann::ordered_json doc;
  doc["probe"] = r.probe;
  doc["samples_per_prompt"] = r.samples_per_prompt;
  doc["seed"] = r.seed;
  doc["baseline"] = to_json(r.baseline);
  doc["intervened"] = to_json(r.intervened);
  nlohmann::ordered_json delta, rel;
  for (DiversityMetric m : kAllMetrics) {
    delta[to_string(m)] = r.delta[static_cast<std::size_t>(m)];
    rel[to_string(m)] = r.relative_delta[static_cast<std::size_t>(m)];
  }
  doc["delta"] = std::move(delta);
  doc["relative_delta"] = std::move(rel);
  doc["baseline_quality"] = r.baseline_quality ? to_json(*r.baseline_quality) : nlohmann::ordered_json();
  doc["intervened_quality"] = r.intervened_quality ? to_json(*r.intervened_quality) : nlohmann::ordered_json();
  return doc;
}

}  // namespace ibdiag
