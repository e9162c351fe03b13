#include "ibdiag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ibdiag/errors.hpp"
#include "ibdiag/reference.hpp"
#include "ibdiag/rng.hpp"

namespace ibdiag {

namespace {

using nlohmann::ordered_json;
using Cell = CsvTable::Cell;

constexpr std::size_t kDefaultAuditCases = 40;

ordered_json header(const std::string& pipeline, const ExperimentConfig& cfg) {
  ordered_json doc;
  doc["pipeline"] = pipeline;
  doc["seed"] = cfg.seed;
  doc["n"] = cfg.n;
  doc["validation_samples"] = cfg.validation_samples;
  auto names = ordered_json::array();
  for (const auto& g : cfg.generators) names.push_back(g->name);
  doc["generators"] = std::move(names);
  return doc;
}

Cell quality_cell(const std::optional<QualityProxy>& q, bool finite) {
  if (!q) return std::string();
  return finite ? q->finite_bits_per_token : q->bits_per_token;
}

Cell unreachable_cell(const std::optional<QualityProxy>& q) {
  if (!q) return std::string();
  return static_cast<std::uint64_t>(q->unreachable);
}

CsvTable probe_table() {
  return CsvTable({"generator", "probe", "arm", "token_hamming", "pixel_cosine", "one_minus_ssim",
                   "quality_bits_per_token", "quality_finite_bits_per_token", "unreachable"});
}

CsvTable diversity_table() { return CsvTable({"generator", "probe", "arm", "prompt", "metric", "value"}); }

void add_probe_rows(CsvTable& probes, CsvTable& diversity, const std::string& gen, const ProbeResult& r) {
  const std::pair<const char*, const DiversityReport*> arms[] = {{"baseline", &r.baseline},
                                                                  {"intervened", &r.intervened}};
  for (const auto& [arm, rep] : arms) {
    const auto& q = std::string(arm) == "baseline" ? r.baseline_quality : r.intervened_quality;
    probes.add_row({gen, r.probe, std::string(arm), rep->values[0], rep->values[1], rep->values[2],
                    quality_cell(q, false), quality_cell(q, true), unreachable_cell(q)});
    for (const auto& pp : rep->per_prompt) {
      for (DiversityMetric m : kAllMetrics) {
        diversity.add_row({gen, r.probe, std::string(arm), pp.prompt, to_string(m),
                           pp.values[static_cast<std::size_t>(m)]});
      }
    }
  }
}

CsvTable entropy_table() {
  return CsvTable({"generator", "policy", "h_z", "h_z_given_x", "h_path", "h_exec", "h_residual", "i_xz", "i_zy",
                   "beta", "ib_objective", "identity_residual"});
}

ordered_json entropy_for(const ExperimentConfig& cfg, const std::shared_ptr<const GeneratorSpec>& spec,
                         const SamplingPolicy& policy, CsvTable* table) {
  std::vector<Condition> conds;
  for (const auto& p : settings_for(cfg, spec).prompts) conds.push_back(p.pooled.front());
  try {
    const auto r = decompose(*spec, uniform_prior(conds), policy, CodebookSubset::full(spec->codebook), cfg.beta);
    if (table) {
      table->add_row({spec->name, describe(policy), r.h_z, r.h_z_given_x, r.h_path, r.h_exec, r.h_residual, r.i_xz,
                      r.i_zy, r.beta, r.ib_objective, r.identity_residual()});
    }
    return to_json(r);
  } catch (const EnumerationLimitError& e) {
    return {{"error", e.what()}};
  }
}

CsvTable archetype_table() {
  return CsvTable({"generator", "label", "argmax_relative_drop", "subset_relative_drop",
                   "argmax_intervened_diversity", "h_path", "theta_big", "theta_small"});
}

// Baseline corpus, one row per sample; tokens space separated in raster order.
void add_corpus_rows(CsvTable& t, const ExperimentConfig& cfg, const std::string& gen,
                     const std::vector<PromptSamples>& samples) {
  for (const auto& ps : samples) {
    for (std::size_t i = 0; i < ps.grids.size(); ++i) {
      std::string tokens;
      for (std::uint32_t tok : ps.grids[i].tokens) {
        if (!tokens.empty()) tokens += ' ';
        tokens += std::to_string(tok);
      }
      t.add_row({cfg.seed, gen, ps.prompt, static_cast<std::uint64_t>(i), condition_label(ps.conditions[i]),
                 tokens});
    }
  }
}

PipelineOutput demo_archetypes(const ExperimentConfig& cfg) {
  PipelineOutput out;
  out.summary = header("demo-archetypes", cfg);
  const auto& req = cfg.analysis.classify;
  out.summary["classify"] = {{"subset", to_json(ProbeSpec{req.subset})},
                             {"theta_big", req.theta_big},
                             {"theta_small", req.theta_small},
                             {"metric", to_string(DiversityMetric::TokenHamming)}};
  CsvTable arch = archetype_table(), probes = probe_table(), diversity = diversity_table(), ent = entropy_table();
  CsvTable corpus({"seed", "generator", "prompt", "sample", "condition", "tokens"});
  auto results = ordered_json::array();
  for (const auto& spec : cfg.generators) {
    add_corpus_rows(corpus, cfg, spec->name, collect_samples(settings_for(cfg, spec), cfg.n, cfg.seed, cfg.jobs));
    const auto run = evaluate_archetype(cfg.world, settings_for(cfg, spec), req.subset, cfg.n, cfg.seed,
                                        req.theta_big, req.theta_small, cfg.jobs);
    ordered_json g;
    g["generator"] = spec->name;
    g["strategy"] = to_string(spec->strategy);
    g["archetype"] = to_json(run.label);
    g["entropy"] = entropy_for(cfg, spec, Stochastic{}, &ent);
    g["argmax_probe"] = to_json(run.argmax);
    g["subset_probe"] = to_json(run.subset);
    results.push_back(std::move(g));
    const auto& ev = run.label.evidence;
    arch.add_row({spec->name, to_string(run.label.label), ev.argmax_relative_drop, ev.subset_relative_drop,
                  ev.argmax_intervened_diversity, ev.h_path, run.label.theta_big, run.label.theta_small});
    add_probe_rows(probes, diversity, spec->name, run.argmax);
    add_probe_rows(probes, diversity, spec->name, run.subset);
  }
  out.summary["results"] = std::move(results);
  out.tables = {{"archetypes.csv", arch}, {"probes.csv", probes}, {"diversity.csv", diversity}, {"entropy.csv", ent},
                {"corpus.csv", corpus}};
  return out;
}

PipelineOutput probe_pipeline(const ExperimentConfig& cfg) {
  PipelineOutput out;
  out.summary = header("probe", cfg);
  CsvTable probes = probe_table(), diversity = diversity_table();
  auto results = ordered_json::array();
  for (const auto& spec : cfg.generators) {
    const ExperimentSettings base = with_usage(settings_for(cfg, spec), cfg.seed, cfg.jobs);
    for (const auto& probe : cfg.probes) {
      ordered_json row;
      row["generator"] = spec->name;
      try {
        const auto r = run_probe(cfg.world, base, probe, cfg.n, cfg.seed, cfg.jobs);
        row["result"] = to_json(r);
        add_probe_rows(probes, diversity, spec->name, r);
      } catch (const std::invalid_argument& e) {
        // probe not applicable to this generator, e.g. staged argmax with too few steps
        row["probe"] = describe(probe);
        row["skipped"] = e.what();
      } catch (const InconsistentSpecError& e) {
        row["probe"] = describe(probe);
        row["skipped"] = e.what();
      }
      results.push_back(std::move(row));
    }
  }
  out.summary["probes"] = std::move(results);
  out.tables = {{"probes.csv", probes}, {"diversity.csv", diversity}};
  return out;
}

CsvTable sweep_table() {
  return CsvTable({"generator", "strategy", "row", "parameter", "value", "token_hamming", "pixel_cosine",
                   "one_minus_ssim", "quality_bits_per_token", "quality_finite_bits_per_token", "unreachable"});
}

void add_sweep_rows(CsvTable& t, const std::string& gen, const SweepResult& s) {
  auto add = [&](const SweepRow& r, const char* kind) {
    t.add_row({gen, s.strategy, std::string(kind), s.parameter_name, r.parameter, r.diversity[0], r.diversity[1],
               r.diversity[2], quality_cell(r.quality, false), quality_cell(r.quality, true),
               unreachable_cell(r.quality)});
  };
  if (s.baseline) add(*s.baseline, "baseline");
  for (const auto& r : s.rows) add(r, "sweep");
}

PipelineOutput sweep_pipeline(const ExperimentConfig& cfg) {
  if (!cfg.analysis.sweep) throw ConfigError("the sweep pipeline needs analysis.sweep in the config");
  PipelineOutput out;
  out.summary = header("sweep", cfg);
  CsvTable t = sweep_table();
  auto results = ordered_json::array();
  for (const auto& spec : cfg.generators) {
    SweepResult s;
    try {
      s = ratio_sweep(cfg.world, settings_for(cfg, spec), cfg.analysis.sweep->ratios, cfg.analysis.sweep->policy,
                      cfg.n, cfg.seed, cfg.jobs);
    } catch (const InconsistentSpecError& e) {
      results.push_back({{"generator", spec->name}, {"skipped", e.what()}});
      continue;
    }
    ordered_json g = to_json(s);
    g["generator"] = spec->name;
    results.push_back(std::move(g));
    add_sweep_rows(t, spec->name, s);
  }
  out.summary["sweeps"] = std::move(results);
  out.tables = {{"sweep.csv", t}};
  return out;
}

PipelineOutput enhance_pipeline(const ExperimentConfig& cfg) {
  if (!cfg.analysis.enhance) throw ConfigError("the enhance pipeline needs analysis.enhance in the config");
  PipelineOutput out;
  out.summary = header("enhance", cfg);
  CsvTable t = sweep_table();
  auto results = ordered_json::array();
  for (const auto& spec : cfg.generators) {
    SweepResult s;
    try {
      // a subset can remove every code a sparse row puts mass on
      s = enhancement_sweep(cfg.world, settings_for(cfg, spec), cfg.analysis.enhance->drop_fractions,
                            cfg.analysis.enhance->k, cfg.n, cfg.seed, cfg.jobs);
    } catch (const InconsistentSpecError& e) {
      results.push_back({{"generator", spec->name}, {"skipped", e.what()}});
      continue;
    }
    ordered_json g = to_json(s);
    g["generator"] = spec->name;
    results.push_back(std::move(g));
    add_sweep_rows(t, spec->name, s);
  }
  out.summary["enhancements"] = std::move(results);
  out.tables = {{"enhance.csv", t}};
  return out;
}

struct WaterfallTables {
  CsvTable steps{{"source", "step", "value"}};
  CsvTable cells{{"source", "cell", "value"}};
  CsvTable facets{{"source", "facet", "facet_level", "factor", "effect", "interaction", "crossover"}};
};

ordered_json waterfall_block(const std::string& source, const FactorialGrid& grid, std::size_t baseline,
                             std::size_t final_cell, double epsilon, WaterfallTables& t) {
  ordered_json doc;
  doc["source"] = source;
  doc["grid"] = to_json(grid);
  for (std::size_t m = 0; m < grid.cell_count(); ++m) {
    if (grid.has(m)) t.cells.add_row({source, grid.cell_label(m), grid.at(m)});
  }
  const auto w = waterfall(grid, baseline, final_cell);
  doc["waterfall"] = to_json(w, grid);
  for (const auto& s : w.steps(grid)) t.steps.add_row({source, s.label, s.value});
  if (grid.complete()) {
    doc["epsilon"] = epsilon;
    auto profiles = ordered_json::array();
    for (const auto& p : interaction_profiles(grid, epsilon)) {
      profiles.push_back(to_json(p));
      for (const auto& e : p.effects) {
        for (int lvl = 0; lvl < 2; ++lvl) {
          t.facets.add_row({source, to_string(p.facet), level_name(p.facet, lvl), to_string(e.factor),
                            e.at_facet_level[lvl], e.interaction, std::string(e.crossover ? "true" : "false")});
        }
      }
    }
    doc["profiles"] = std::move(profiles);
  } else {
    doc["profiles"] = nullptr;
  }
  return doc;
}

PipelineOutput waterfall_pipeline(const ExperimentConfig& cfg) {
  const WaterfallRequest req = cfg.analysis.waterfall.value_or(WaterfallRequest{});
  PipelineOutput out;
  out.summary = header("waterfall", cfg);
  WaterfallTables t;
  auto given = ordered_json::array();
  for (const auto& g : req.grids) {
    given.push_back(waterfall_block(g.name, g.grid, g.baseline_cell, g.final_cell, g.epsilon, t));
  }
  out.summary["given"] = std::move(given);
  auto measured = ordered_json::array();
  if (req.measure) {
    out.summary["metric"] = to_string(req.metric);
    for (const auto& spec : cfg.generators) {
      const auto grid = measure_factorial(cfg.world, settings_for(cfg, spec), req.factors, req.subset,
                                          req.paraphrase, req.metric, cfg.n, cfg.seed, cfg.jobs);
      measured.push_back(
          waterfall_block(spec->name, grid, grid.mask_of(req.baseline), grid.mask_of(req.final), req.epsilon, t));
    }
  }
  out.summary["measured"] = std::move(measured);
  out.tables = {{"waterfall.csv", t.steps}, {"cells.csv", t.cells}, {"interactions.csv", t.facets}};
  return out;
}

ordered_json audit_json(const IdentityAudit& a) {
  auto failures = ordered_json::array();
  for (const auto& f : a.failures) failures.push_back(f);
  return {{"cases", a.cases},
          {"decompositions", a.decompositions},
          {"max_identity_residual", a.max_identity_residual},
          {"path_formula_checks", a.path_formula_checks},
          {"max_path_formula_error", a.max_path_formula_error},
          {"tolerance", kIdentityTolerance},
          {"passed", a.failures.empty()},
          {"failures", std::move(failures)}};
}

CsvTable audit_table(const IdentityAudit& a) {
  CsvTable t({"spec", "policy", "h_z_given_x", "h_path", "h_exec", "h_residual", "identity_residual"});
  for (const auto& r : a.rows) {
    t.add_row({r.spec, r.policy, r.report.h_z_given_x, r.report.h_path, r.report.h_exec, r.report.h_residual,
               r.report.identity_residual()});
  }
  return t;
}

PipelineOutput audit_pipeline(const ExperimentConfig& cfg) {
  PipelineOutput out;
  out.summary = header("audit", cfg);
  CsvTable ent = entropy_table();
  auto gens = ordered_json::array();
  for (const auto& spec : cfg.generators) {
    ordered_json g;
    g["generator"] = spec->name;
    g["stochastic"] = entropy_for(cfg, spec, Stochastic{}, &ent);
    g["argmax"] = entropy_for(cfg, spec, Argmax{}, &ent);
    gens.push_back(std::move(g));
  }
  out.summary["entropy"] = std::move(gens);
  const auto audit = run_identity_audit(cfg.seed, kDefaultAuditCases);
  out.summary["identity_audit"] = audit_json(audit);
  out.ok = audit.failures.empty();
  out.tables = {{"entropy.csv", ent}, {"audit.csv", audit_table(audit)}};
  return out;
}

}  // namespace

PipelineOutput run_pipeline(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "demo-archetypes") return demo_archetypes(cfg);
  if (name == "probe") return probe_pipeline(cfg);
  if (name == "sweep") return sweep_pipeline(cfg);
  if (name == "waterfall") return waterfall_pipeline(cfg);
  if (name == "enhance") return enhance_pipeline(cfg);
  if (name == "audit") return audit_pipeline(cfg);
  throw ConfigError("unknown pipeline '" + name + "'");
}

IdentityAudit run_identity_audit(std::uint64_t seed, std::size_t per_strategy) {
  IdentityAudit audit;
  const std::pair<const char*, SamplingPolicy> policies[] = {
      {"stochastic", Stochastic{1.0}}, {"tempered", Stochastic{0.7}}, {"argmax", Argmax{}}};
  for (Strategy s : {Strategy::AR, Strategy::MIM, Strategy::DIFF}) {
    for (std::size_t i = 0; i < per_strategy; ++i) {
      const auto rc = random_case(derive_seed(seed, {static_cast<std::uint64_t>(s), i}), s);
      ++audit.cases;
      std::vector<WeightedCondition> prior;
      for (std::size_t c = 0; c < rc.conditions.size(); ++c) prior.push_back({rc.conditions[c], rc.weights[c]});
      const CodebookSubset full = CodebookSubset::full(rc.spec->codebook);
      for (const auto& [pname, policy] : policies) {
        const auto r = decompose(*rc.spec, prior, policy, full);
        ++audit.decompositions;
        const double residual = std::abs(r.identity_residual());
        audit.max_identity_residual = std::max(audit.max_identity_residual, residual);
        if (!(residual < kIdentityTolerance)) {
          audit.failures.push_back(rc.spec->name + " " + pname + ": identity residual " + format_number(residual));
        }
        audit.rows.push_back({rc.spec->name, pname, r});
        if (s == Strategy::AR || (s == Strategy::MIM && rc.spec->unmask != UnmaskMode::Uniform)) continue;
        for (const auto& x : rc.conditions) {
          const auto e = conditional_entropies(enumerate_outcomes(*rc.spec, x, policy, full));
          const double closed = s == Strategy::MIM ? mim_path_entropy(*rc.spec)
                                                   : diffusion_path_entropy(*rc.spec, x, policy);
          const double err = std::abs(closed - e.h_path);
          ++audit.path_formula_checks;
          audit.max_path_formula_error = std::max(audit.max_path_formula_error, err);
          if (!(err < kIdentityTolerance)) {
            audit.failures.push_back(rc.spec->name + " " + pname + ": closed-form path entropy off by " +
                                     format_number(err));
          }
        }
      }
    }
  }
  return audit;
}

nlohmann::ordered_json make_fixtures(const ExperimentConfig& cfg, std::size_t identity_cases_per_strategy) {
  ordered_json doc;
  doc["seed"] = cfg.seed;
  doc["n"] = cfg.n;
  doc["identity_cases_per_strategy"] = identity_cases_per_strategy;
  auto arch = ordered_json::array();
  const auto& req = cfg.analysis.classify;
  for (const auto& spec : cfg.generators) {
    const auto run = evaluate_archetype(cfg.world, settings_for(cfg, spec), req.subset, cfg.n, cfg.seed,
                                        req.theta_big, req.theta_small, cfg.jobs);
    const auto& ev = run.label.evidence;
    arch.push_back({{"generator", spec->name},
                    {"label", to_string(run.label.label)},
                    {"argmax_relative_drop", ev.argmax_relative_drop},
                    {"subset_relative_drop", ev.subset_relative_drop},
                    {"argmax_intervened_diversity", ev.argmax_intervened_diversity},
                    {"h_path", ev.h_path}});
  }
  doc["archetypes"] = std::move(arch);
  return doc;
}

PipelineOutput run_check(const ExperimentConfig& cfg, const nlohmann::json& fixtures) {
  PipelineOutput out;
  ExperimentConfig fixed = cfg;
  fixed.seed = fixtures.at("seed").get<std::uint64_t>();
  fixed.n = fixtures.at("n").get<std::size_t>();
  out.summary = header("check", fixed);
  const auto audit = run_identity_audit(fixed.seed, fixtures.value("identity_cases_per_strategy", kDefaultAuditCases));
  out.summary["identity_audit"] = audit_json(audit);
  bool ok = audit.failures.empty();

  const auto fresh = make_fixtures(fixed);
  CsvTable t({"generator", "field", "expected", "actual", "passed"});
  auto checks = ordered_json::array();
  for (const auto& want : fixtures.at("archetypes")) {
    const std::string name = want.at("generator").get<std::string>();
    const auto it = std::find_if(fresh["archetypes"].begin(), fresh["archetypes"].end(),
                                 [&](const auto& g) { return g["generator"] == name; });
    if (it == fresh["archetypes"].end()) {
      checks.push_back({{"generator", name}, {"passed", false}, {"reason", "generator missing from config"}});
      ok = false;
      continue;
    }
    const bool label_ok = (*it)["label"] == want.at("label");
    t.add_row({name, std::string("label"), want.at("label").get<std::string>(), (*it)["label"].get<std::string>(),
               std::string(label_ok ? "true" : "false")});
    bool gen_ok = label_ok;
    for (const char* field : {"argmax_relative_drop", "subset_relative_drop", "argmax_intervened_diversity", "h_path"}) {
      const double e = want.at(field).get<double>();
      const double a = (*it)[field].get<double>();
      const bool pass = std::abs(e - a) <= 1e-9;
      gen_ok = gen_ok && pass;
      t.add_row({name, std::string(field), e, a, std::string(pass ? "true" : "false")});
    }
    checks.push_back({{"generator", name}, {"label", (*it)["label"]}, {"passed", gen_ok}});
    ok = ok && gen_ok;
  }
  out.summary["fixtures"] = std::move(checks);
  out.summary["passed"] = ok;
  out.ok = ok;
  out.tables = {{"check.csv", t}, {"audit.csv", audit_table(audit)}};
  return out;
}

void write_outputs(const std::filesystem::path& dir, const PipelineOutput& out, std::uint64_t seed) {
  write_text(dir / "summary.json", render_json(out.summary));
  for (const auto& [name, table] : out.tables) write_text(dir / name, table.render(seed));
}

}  // namespace ibdiag
