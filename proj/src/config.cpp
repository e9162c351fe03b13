#include "ibdiag/config.hpp"

#include <fstream>
#include <sstream>

#include "ibdiag/errors.hpp"
#include "ibdiag/json_schema.hpp"
#include "ibdiag/reference.hpp"

namespace ibdiag {

namespace {

#include "schema_text.inc"

using nlohmann::json;
using nlohmann::ordered_json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<int> levels_of(const json& doc) { return doc.get<std::vector<int>>(); }

SubsetProbe subset_from(const json& doc) { return std::get<SubsetProbe>(probe_from_json(doc)); }

ordered_json codebook_config(const Codebook& cb) {
  ordered_json doc;
  doc["scheme"] = to_string(cb.scheme());
  switch (cb.scheme()) {
    case QuantScheme::FSQ: doc["levels"] = cb.levels(); break;
    case QuantScheme::LFQ:
    case QuantScheme::BSQ: doc["dim"] = cb.dim(); break;
    case QuantScheme::Explicit: doc = codebook_to_json(cb); break;
  }
  return doc;
}

DiversityMetric parse_metric(const std::string& s) {
  for (DiversityMetric m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown metric '" + s + "'");
}

std::vector<Factor> factors_from(const json& doc) {
  std::vector<Factor> out;
  for (const auto& f : doc) out.push_back(parse_factor(f.get<std::string>()));
  return out;
}

}  // namespace

const std::string& experiment_schema_text() {
  static const std::string text = kSchemaText;
  return text;
}

const nlohmann::json& experiment_schema() {
  static const json schema = json::parse(experiment_schema_text());
  return schema;
}

void check_schema(const nlohmann::json& doc) {
  const auto errors = validate_against_schema(experiment_schema(), doc);
  if (errors.empty()) return;
  std::ostringstream msg;
  msg << "config does not match the schema:";
  for (const auto& e : errors) msg << "\n  " << (e.path.empty() ? "/" : e.path) << ": " << e.message;
  throw ConfigError(msg.str());
}

ordered_json world_to_json(const ToyWorld& w) {
  ordered_json doc;
  doc["patch_size"] = w.patch_size;
  auto conds = ordered_json::array();
  for (const auto& c : w.conditions) {
    conds.push_back({{"class", c.semantic_class}, {"form", c.surface_form}, {"length", to_string(c.length)}});
  }
  doc["conditions"] = std::move(conds);
  return doc;
}

ToyWorld world_from_json(const nlohmann::json& doc) {
  ToyWorld w;
  w.patch_size = doc.value("patch_size", std::size_t{4});
  for (const auto& c : doc.at("conditions")) {
    w.conditions.push_back({c.at("class").get<std::uint32_t>(), c.at("form").get<std::uint32_t>(),
                            parse_length_tag(c.value("length", std::string("medium")))});
  }
  w.validate();
  return w;
}

ordered_json generator_to_json(const GeneratorSpec& spec) {
  ordered_json doc;
  doc["name"] = spec.name;
  doc["strategy"] = to_string(spec.strategy);
  doc["grid_side"] = spec.grid_side;
  doc["codebook"] = codebook_config(*spec.codebook);
  switch (spec.strategy) {
    case Strategy::AR: doc["ar_window"] = spec.ar_window; break;
    case Strategy::MIM:
      doc["steps"] = spec.steps;
      doc["schedule"] = to_string(spec.schedule);
      if (!spec.explicit_counts.empty()) doc["explicit_counts"] = spec.explicit_counts;
      doc["unmask"] = to_string(spec.unmask);
      break;
    case Strategy::DIFF:
      doc["steps"] = spec.steps;
      doc["prior"] = spec.prior;
      break;
  }
  doc["seed_label"] = spec.seed_label;
  auto tables = ordered_json::array();
  for (const auto& [key, t] : spec.tables) {
    tables.push_back({{"class", key.first}, {"form", key.second}, {"rows", t.to_rows()}});
  }
  doc["tables"] = std::move(tables);
  return doc;
}

GeneratorSpec generator_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  GeneratorSpec spec;
  spec.name = doc.at("name").get<std::string>();
  spec.strategy = parse_strategy(doc.at("strategy").get<std::string>());
  spec.grid_side = doc.at("grid_side").get<std::size_t>();
  spec.codebook = std::make_shared<const Codebook>(codebook_from_json(doc.at("codebook")));
  spec.steps = doc.value("steps", std::size_t{1});
  spec.schedule = parse_mask_schedule(doc.value("schedule", std::string("cosine")));
  spec.explicit_counts = doc.value("explicit_counts", std::vector<std::size_t>{});
  spec.unmask = parse_unmask_mode(doc.value("unmask", std::string("uniform")));
  spec.ar_window = doc.value("ar_window", std::size_t{1});
  spec.prior = doc.value("prior", std::vector<double>{});
  spec.seed_label = doc.value("seed_label", spec.name);
  json tables;
  if (doc.contains("tables") && doc.contains("tables_file")) {
    throw ConfigError("generator '" + spec.name + "' gives both tables and tables_file");
  }
  if (doc.contains("tables")) {
    tables = doc.at("tables");
  } else if (doc.contains("tables_file")) {
    tables = read_json_file(base_dir / doc.at("tables_file").get<std::string>());
    const json table_list = {{"type", "array"}, {"minItems", 1}, {"items", {{"$ref", "#/definitions/table"}}}};
    const auto errors = validate_against_schema(table_list, tables, experiment_schema());
    if (!errors.empty()) {
      throw ConfigError("tables_file of generator '" + spec.name + "': " + errors.front().path + ": " +
                        errors.front().message);
    }
  } else {
    throw ConfigError("generator '" + spec.name + "' needs tables or tables_file");
  }
  for (const auto& t : tables) {
    const ConditionKey key{t.at("class").get<std::uint32_t>(), t.at("form").get<std::uint32_t>()};
    const auto rows = t.at("rows").get<std::vector<std::vector<double>>>();
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) {
        throw ConfigError("generator '" + spec.name + "' table c" + std::to_string(key.first) + ".f" +
                          std::to_string(key.second) + " has ragged rows");
      }
    }
    if (!spec.tables.emplace(key, CategoricalTable(rows)).second) {
      throw ConfigError("generator '" + spec.name + "' lists table c" + std::to_string(key.first) + ".f" +
                        std::to_string(key.second) + " twice");
    }
  }
  spec.validate();
  return spec;
}

namespace {

ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  try {
    cfg.world = world_from_json(doc.at("world"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("world: ") + e.what());
  }
  for (const auto& g : doc.at("generators")) {
    auto spec = std::make_shared<GeneratorSpec>(generator_from_json(g, base_dir));
    for (const auto& x : cfg.world.conditions) {
      if (!spec->has_condition(x)) {
        throw ConfigError("generator '" + spec->name + "' has no table for world condition " + condition_label(x));
      }
    }
    for (const auto& other : cfg.generators) {
      if (other->name == spec->name) throw ConfigError("generator name '" + spec->name + "' is used twice");
    }
    cfg.generators.push_back(std::move(spec));
  }
  for (const auto& p : doc.value("probes", json::array())) cfg.probes.push_back(probe_from_json(p));
  cfg.n = doc.value("n", cfg.n);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.output_dir = doc.value("output_dir", cfg.output_dir);
  cfg.beta = doc.value("beta", cfg.beta);
  cfg.validation_samples = doc.value("validation_samples", cfg.validation_samples);
  cfg.jobs = doc.value("jobs", cfg.jobs);

  const json analysis = doc.value("analysis", json::object());
  if (analysis.contains("classify")) {
    const auto& c = analysis.at("classify");
    if (c.contains("subset")) cfg.analysis.classify.subset = subset_from(c.at("subset"));
    cfg.analysis.classify.theta_big = c.value("theta_big", kThetaBig);
    cfg.analysis.classify.theta_small = c.value("theta_small", kThetaSmall);
    if (cfg.analysis.classify.theta_small > cfg.analysis.classify.theta_big) {
      throw ConfigError("analysis.classify: theta_small exceeds theta_big");
    }
  }
  if (analysis.contains("sweep")) {
    const auto& s = analysis.at("sweep");
    SweepRequest r;
    r.ratios = s.at("ratios").get<std::vector<double>>();
    r.policy = parse_subset_policy(s.value("policy", std::string("drop_least_frequent")));
    if (!std::is_sorted(r.ratios.begin(), r.ratios.end())) throw ConfigError("analysis.sweep.ratios must be sorted");
    cfg.analysis.sweep = r;
  }
  if (analysis.contains("enhance")) {
    const auto& e = analysis.at("enhance");
    EnhanceRequest r;
    r.drop_fractions = e.at("drop_fractions").get<std::vector<double>>();
    r.k = e.value("k", r.k);
    if (r.k == 1) throw ConfigError("analysis.enhance.k must be 0 or at least 2");
    if (!std::is_sorted(r.drop_fractions.begin(), r.drop_fractions.end())) {
      throw ConfigError("analysis.enhance.drop_fractions must be sorted");
    }
    cfg.analysis.enhance = r;
  }
  if (analysis.contains("waterfall")) {
    const auto& w = analysis.at("waterfall");
    WaterfallRequest r;
    r.measure = w.value("measure", true);
    if (w.contains("factors")) r.factors = factors_from(w.at("factors"));
    if (w.contains("baseline")) r.baseline = levels_of(w.at("baseline"));
    if (w.contains("final")) r.final = levels_of(w.at("final"));
    r.epsilon = w.value("epsilon", r.epsilon);
    if (w.contains("metric")) r.metric = parse_metric(w.at("metric").get<std::string>());
    if (w.contains("subset")) r.subset = subset_from(w.at("subset"));
    if (w.contains("paraphrase")) r.paraphrase = std::get<ParaphraseProbe>(probe_from_json(w.at("paraphrase")));
    try {
      FactorialGrid shape(r.factors);
      const std::size_t b = shape.mask_of(r.baseline), f = shape.mask_of(r.final);
      if ((b ^ f) != shape.cell_count() - 1) throw ConfigError("baseline and final must differ in every factor");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("analysis.waterfall: ") + e.what());
    }
    for (const auto& g : w.value("grids", json::array())) {
      const std::string name = g.at("name").get<std::string>();
      try {
        GivenGrid given{name, FactorialGrid(factors_from(g.at("factors")))};
        given.baseline_cell = given.grid.mask_of(levels_of(g.at("baseline")));
        given.final_cell = given.grid.mask_of(levels_of(g.at("final")));
        given.epsilon = g.value("epsilon", r.epsilon);
        for (const auto& cell : g.at("cells")) {
          const std::size_t m = given.grid.mask_of(levels_of(cell.at("levels")));
          if (given.grid.has(m)) throw ConfigError("cell " + given.grid.cell_label(m) + " given twice");
          given.grid.set(m, cell.at("value").get<double>());
        }
        r.grids.push_back(std::move(given));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("analysis.waterfall grid '" + name + "': " + e.what());
      }
    }
    cfg.analysis.waterfall = std::move(r);
  }
  return cfg;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  check_schema(doc);
  try {
    return parse_config(doc, base_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json doc;
  doc["world"] = world_to_json(cfg.world);
  auto gens = ordered_json::array();
  for (const auto& g : cfg.generators) gens.push_back(generator_to_json(*g));
  doc["generators"] = std::move(gens);
  auto probes = ordered_json::array();
  for (const auto& p : cfg.probes) probes.push_back(to_json(p));
  doc["probes"] = std::move(probes);
  ordered_json analysis;
  analysis["classify"] = {{"subset", to_json(ProbeSpec{cfg.analysis.classify.subset})},
                          {"theta_big", cfg.analysis.classify.theta_big},
                          {"theta_small", cfg.analysis.classify.theta_small}};
  if (cfg.analysis.sweep) {
    analysis["sweep"] = {{"ratios", cfg.analysis.sweep->ratios}, {"policy", to_string(cfg.analysis.sweep->policy)}};
  }
  if (cfg.analysis.enhance) {
    analysis["enhance"] = {{"drop_fractions", cfg.analysis.enhance->drop_fractions}, {"k", cfg.analysis.enhance->k}};
  }
  if (cfg.analysis.waterfall) {
    const auto& w = *cfg.analysis.waterfall;
    ordered_json wd;
    wd["measure"] = w.measure;
    auto factors = ordered_json::array();
    for (Factor f : w.factors) factors.push_back(to_string(f));
    wd["factors"] = factors;
    wd["baseline"] = w.baseline;
    wd["final"] = w.final;
    wd["epsilon"] = w.epsilon;
    wd["metric"] = to_string(w.metric);
    wd["subset"] = to_json(ProbeSpec{w.subset});
    wd["paraphrase"] = to_json(ProbeSpec{w.paraphrase});
    auto grids = ordered_json::array();
    for (const auto& g : w.grids) {
      ordered_json gd;
      gd["name"] = g.name;
      auto gf = ordered_json::array();
      for (Factor f : g.grid.factors()) gf.push_back(to_string(f));
      gd["factors"] = gf;
      auto levels = [&](std::size_t m) {
        std::vector<int> out;
        for (std::size_t i = 0; i < g.grid.factors().size(); ++i) out.push_back(static_cast<int>((m >> i) & 1U));
        return out;
      };
      gd["baseline"] = levels(g.baseline_cell);
      gd["final"] = levels(g.final_cell);
      gd["epsilon"] = g.epsilon;
      auto cells = ordered_json::array();
      for (std::size_t m = 0; m < g.grid.cell_count(); ++m) {
        if (g.grid.has(m)) cells.push_back({{"levels", levels(m)}, {"value", g.grid.at(m)}});
      }
      gd["cells"] = std::move(cells);
      grids.push_back(std::move(gd));
    }
    wd["grids"] = std::move(grids);
    analysis["waterfall"] = std::move(wd);
  }
  doc["analysis"] = std::move(analysis);
  doc["n"] = cfg.n;
  doc["seed"] = cfg.seed;
  doc["output_dir"] = cfg.output_dir;
  doc["beta"] = cfg.beta;
  doc["validation_samples"] = cfg.validation_samples;
  doc["jobs"] = cfg.jobs;
  return doc;
}

ExperimentConfig reference_config() {
  ExperimentConfig cfg;
  cfg.world = reference_world();
  cfg.generators = {reference_ar(), reference_mim(), reference_diff()};
  cfg.probes = {ArgmaxProbe{ArgmaxStage::All},
                SubsetProbe{SubsetPolicy::DropLeastFrequent, 0.25, 0},
                ParaphraseProbe{ParaphraseMode::Mixed, 5}};
  cfg.analysis.classify.subset = SubsetProbe{SubsetPolicy::DropLeastFrequent, 0.25, 0};
  cfg.analysis.sweep = SweepRequest{{0.125, 0.25, 0.5, 0.75, 1.0}, SubsetPolicy::DropLeastFrequent};
  cfg.analysis.enhance = EnhanceRequest{{0.0, 0.2, 0.4}, 5};
  WaterfallRequest w;
  w.subset = cfg.analysis.classify.subset;
  // argmax, original, subset -> stochastic, paraphrased, full
  w.baseline = {1, 0, 1};
  w.final = {0, 1, 0};
  cfg.analysis.waterfall = w;
  cfg.n = 64;
  cfg.seed = 7;
  cfg.output_dir = "out";
  return cfg;
}

namespace {

GivenGrid caption_grid(const std::string& name, std::vector<Factor> factors, std::vector<int> baseline,
                       std::vector<int> final_levels,
                       const std::vector<std::pair<std::vector<int>, double>>& cells) {
  GivenGrid g{name, FactorialGrid(std::move(factors)), 0, 0, 0.001};
  g.baseline_cell = g.grid.mask_of(baseline);
  g.final_cell = g.grid.mask_of(final_levels);
  for (const auto& [levels, v] : cells) g.grid.set(levels, v);
  return g;
}

}  // namespace

ExperimentConfig caption_config() {
  ExperimentConfig cfg;
  cfg.world = reference_world();
  cfg.generators = {reference_ar()};
  cfg.analysis.classify.subset = SubsetProbe{SubsetPolicy::DropLeastFrequent, 0.25, 0};
  WaterfallRequest w;
  w.measure = false;
  const std::vector<Factor> three{Factor::Sampling, Factor::Prompt, Factor::Codebook};
  // levels: sampling stochastic/argmax, prompt original/paraphrase_set, codebook full/subset
  w.grids.push_back(caption_grid("VQ-Diffusion", three, {1, 0, 1}, {0, 1, 0},
                                 {{{1, 0, 1}, 0.755}, {{0, 0, 1}, 0.760}, {{1, 1, 1}, 0.752},
                                  {{1, 0, 0}, 0.835}, {{0, 1, 0}, 0.837}}));
  // single-factor cells are not published for this model; they are chosen to sum to 0.633
  w.grids.push_back(caption_grid("aMUSEd", three, {1, 0, 1}, {0, 1, 0},
                                 {{{1, 0, 1}, 0.600}, {{0, 0, 1}, 0.610}, {{1, 1, 1}, 0.612},
                                  {{1, 0, 0}, 0.611}, {{0, 1, 0}, 0.634}}));
  w.grids.push_back(caption_grid("LlamaGen", {Factor::Prompt, Factor::Codebook}, {0, 1}, {1, 0},
                                 {{{0, 1}, 0.577}, {{1, 1}, 0.657}, {{0, 0}, 0.602}, {{1, 0}, 0.681}}));
  cfg.analysis.waterfall = w;
  cfg.n = 64;
  cfg.seed = 7;
  return cfg;
}

ExperimentSettings settings_for(const ExperimentConfig& cfg, std::shared_ptr<const GeneratorSpec> spec) {
  ExperimentSettings s = baseline_settings(cfg.world, std::move(spec));
  s.validation_samples = cfg.validation_samples;
  return s;
}

}  // namespace ibdiag
