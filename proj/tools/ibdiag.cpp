// ibdiag: run diagnostic pipelines on toy discrete generators.
//
// Exit codes: 0 success, 1 bad config or arguments, 2 runtime failure or a
// failed --check.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ibdiag/config.hpp"
#include "ibdiag/errors.hpp"
#include "ibdiag/pipeline.hpp"
#include "ibdiag/report.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ibdiag;

namespace {

void write_json_file(const fs::path& path, const nlohmann::ordered_json& doc, bool exact = false) {
  write_text(path, exact ? doc.dump(2) + "\n" : render_json(doc));
  std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-bottleneck diagnostics for toy discrete generators"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one pipeline");
  std::string pipeline;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<std::size_t> jobs;
  std::string out_dir;
  bool check = false;
  std::string fixtures_path;
  run->add_option("pipeline", pipeline, "Pipeline name; omit with --check")->check(CLI::IsMember(kPipelines));
  run->add_option("-c,--config", config_path, "Experiment config (JSON); default is the built-in reference");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("-n,--n", n, "Samples per prompt")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  run->add_option("-o,--out", out_dir, "Output directory; default is the config output_dir");
  run->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  run->add_flag("--check", check, "Run only the entropy-identity audit and the archetype fixtures");
  run->add_option("--fixtures", fixtures_path, "Fixtures file; default <config dir>/fixtures.json");

  auto* exp = app.add_subcommand("export-reference", "Write the shipped reference configs");
  std::string export_dir = "configs";
  exp->add_option("-o,--out", export_dir, "Destination directory");

  auto* schema = app.add_subcommand("schema", "Print the experiment config JSON schema");

  auto* entropy = app.add_subcommand("entropy", "Entropy tools");
  entropy->require_subcommand(1);
  auto* audit = entropy->add_subcommand("audit", "Print the identity residual of every audited spec");
  std::string audit_config;
  std::optional<std::uint64_t> audit_seed;
  audit->add_option("-c,--config", audit_config, "Experiment config (JSON); default is the built-in reference");
  audit->add_option("--seed", audit_seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*schema) {
      std::cout << experiment_schema_text();
      return 0;
    }
    if (*exp) {
      const ExperimentConfig cfg = reference_config();
      const fs::path dir = export_dir;
      write_json_file(dir / "reference.json", config_to_json(cfg));
      write_json_file(dir / "waterfall_captions.json", config_to_json(caption_config()));
      write_json_file(dir / "fixtures.json", make_fixtures(cfg), true);
      return 0;
    }

    if (*audit) {
      ExperimentConfig cfg = audit_config.empty() ? reference_config() : load_config(audit_config);
      if (audit_seed) cfg.seed = *audit_seed;
      const PipelineOutput out = run_pipeline("audit", cfg);
      std::printf("%-34s %-12s %s\n", "spec", "policy", "identity_residual");
      for (const auto& g : out.summary["entropy"]) {
        for (const char* policy : {"stochastic", "argmax"}) {
          const auto& r = g[policy];
          if (r.contains("error")) {
            std::printf("%-34s %-12s %s\n", g["generator"].get<std::string>().c_str(), policy,
                        r["error"].get<std::string>().c_str());
          } else {
            std::printf("%-34s %-12s %.3e\n", g["generator"].get<std::string>().c_str(), policy,
                        r["identity_residual"].get<double>());
          }
        }
      }
      const CsvTable& rows = out.tables.back().second;
      for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto& row = rows.row(i);
        std::printf("%-34s %-12s %s\n", row[0].c_str(), row[1].c_str(), row.back().c_str());
      }
      const auto& a = out.summary["identity_audit"];
      std::printf("max identity residual %.3e over %zu decompositions (tolerance %.0e): %s\n",
                  a["max_identity_residual"].get<double>(), a["decompositions"].get<std::size_t>(),
                  kIdentityTolerance, out.ok ? "ok" : "FAILED");
      return out.ok ? 0 : 2;
    }

    if (pipeline.empty() && !check) throw CLI::RequiredError("pipeline");
    ExperimentConfig cfg = config_path.empty() ? reference_config() : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (n) cfg.n = *n;
    if (jobs) cfg.jobs = *jobs;
    const std::string name = check ? std::string("check") : pipeline;
    const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) / name : fs::path(out_dir);

    if (!check) {
      const PipelineOutput out = run_pipeline(pipeline, cfg);
      write_outputs(dir, out, cfg.seed);
      std::cout << "wrote " << (dir / "summary.json").string() << "\n";
      return out.ok ? 0 : 2;
    }
    {
      fs::path fx = fixtures_path;
      if (fx.empty()) {
        fx = (config_path.empty() ? fs::path("configs") : fs::path(config_path).parent_path()) / "fixtures.json";
      }
      std::ifstream in(fx);
      if (!in) throw ConfigError("cannot open fixtures file " + fx.string());
      nlohmann::json fixtures;
      try {
        in >> fixtures;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("fixtures file " + fx.string() + ": " + e.what());
      }
      const PipelineOutput checked = run_check(cfg, fixtures);
      write_outputs(dir, checked, cfg.seed);
      const auto& a = checked.summary["identity_audit"];
      std::printf("identity audit: max residual %.3e over %zu decompositions\n",
                  a["max_identity_residual"].get<double>(), a["decompositions"].get<std::size_t>());
      for (const auto& f : checked.summary["fixtures"]) {
        std::printf("fixture %s: %s\n", f["generator"].get<std::string>().c_str(),
                    f["passed"].get<bool>() ? "ok" : "MISMATCH");
      }
      std::cout << "check " << (checked.ok ? "passed" : "FAILED") << "\n";
      return checked.ok ? 0 : 2;
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
