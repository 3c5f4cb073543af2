#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "trafficdiff/pipeline.hpp"
#include "trafficdiff/trace_ingest.hpp"

namespace fs = std::filesystem;
using namespace trafficdiff;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string stage_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", c.seed, "Override the configured global seed");
  cmd->add_flag("--force", c.force, "Re-run even when the stage is up to date");
  cmd->add_option("--stage-dir", c.stage_dir,
                  "Artifact root holding the stage directories (overrides $TRAFFICDIFF_ARTIFACT_ROOT)");
}

int run(const Common& c, const std::vector<std::string>& stages, StageOptions opt) {
  RunConfig cfg = RunConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  const auto root = resolve_artifact_root(cfg, c.stage_dir.empty() ? std::nullopt : std::optional<fs::path>(c.stage_dir));
  opt.force = c.force;
  opt.log = [](const std::string& msg) { std::cerr << msg << '\n'; };
  for (const auto& s : stages) {
    const auto out = run_stage(cfg, s, root, opt);
    std::cout << s << ": " << (out.skipped ? "up to date" : "done") << " (" << out.dir.string() << ", manifest "
              << out.manifest_sha256.substr(0, 12) << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic trace synthesis with GASF images and diffusion models"};
  app.require_subcommand(1);

  Common common;
  std::optional<int> count;
  std::vector<std::string> protocols;
  std::vector<std::string> selected;

  for (auto stage : kStages) {
    const std::string name(stage);
    auto* cmd = app.add_subcommand(name, "Run the " + name + " stage");
    add_common(cmd, common);
    if (name == "sample") cmd->add_option("--count", count, "Samples per class (overrides sample.count)");
    if (name == "eval")
      cmd->add_option("--protocol", protocols,
                      "hierarchical, limited, anomaly, realtime, 1d2d or synthsweep (repeatable)");
    cmd->callback([&selected, name] { selected = {name}; });
  }
  auto* all = app.add_subcommand("run", "Run every stage in order");
  add_common(all, common);
  all->callback([&selected] {
    selected.clear();
    for (auto s : kStages) selected.emplace_back(s);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    StageOptions opt;
    opt.sample_count = count;
    opt.protocols = protocols;
    return run(common, selected, opt);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code;
  } catch (const CsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& f : e.files) std::cerr << "  " << f << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
