// Command-line front end: run, ensemble, master, selftest.

#include <qcollapse/qcollapse.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using namespace qcollapse;

struct Common {
  std::string preset_id;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma0;
  std::optional<double> t_end;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--preset", c.preset_id, "free | tunnel | double_well | decay | wall_insertion");
  cmd->add_option("--config", c.config_path, "JSON config or a previous meta.json");
  cmd->add_option("--seed", c.seed, "random seed (first seed for ensembles)");
  cmd->add_option("--gamma0", c.gamma0, "collapse rate");
  cmd->add_option("--t-end", c.t_end, "final time");
  cmd->add_option("--out", c.out, "output directory");
}

ScenarioConfig resolve(const Common& c) {
  if (c.preset_id.empty() == c.config_path.empty())
    throw Error(ErrorCode::invalid_config, "give exactly one of --preset or --config");
  ScenarioConfig cfg = c.config_path.empty() ? preset(c.preset_id) : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.gamma0) cfg.params = make_params(cfg.params.hbar, cfg.params.mass, cfg.params.T0, *c.gamma0);
  if (c.t_end) cfg.t_end = *c.t_end;
  return cfg;
}

int fail(std::string_view code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive spontaneous-collapse simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qcollapse::kVersion));

  Common run_opt, ens_opt, master_opt;
  std::size_t n_seeds = 0;
  std::size_t threads = 0;

  auto* run_cmd = app.add_subcommand("run", "single trajectory: density.csv, events.json, meta.json");
  add_common(run_cmd, run_opt);
  auto* ens_cmd = app.add_subcommand("ensemble", "many seeds: stats.json, meta.json");
  add_common(ens_cmd, ens_opt);
  ens_cmd->add_option("--seeds", n_seeds, "number of seeds")->required();
  ens_cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
  auto* master_cmd = app.add_subcommand("master", "density-matrix evolution with a frozen kernel");
  add_common(master_cmd, master_opt);
  auto* self_cmd = app.add_subcommand("selftest", "quick invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*run_cmd) {
      const auto cfg = resolve(run_opt);
      const auto res = qcollapse::run(cfg, run_opt.out);
      std::cout << "wrote " << run_opt.out << " (" << res.record.events.size() << " events)\n";
    } else if (*ens_cmd) {
      const auto cfg = resolve(ens_opt);
      const auto res = qcollapse::ensemble(cfg, n_seeds, ens_opt.out, threads);
      std::cout << "wrote " << ens_opt.out << " (" << res.stats.trajectories << " trajectories, left "
                << res.stats.final_left << ", right " << res.stats.final_right << ", mixed "
                << res.stats.final_mixed << ")\n";
    } else if (*master_cmd) {
      const auto cfg = resolve(master_opt);
      const auto d = qcollapse::master(cfg, master_opt.out);
      std::cout << "wrote " << master_opt.out << " (trace " << d.trace() << ", purity " << d.purity() << ")\n";
    } else if (*self_cmd) {
      return qcollapse::selftest(std::cout) ? 0 : 1;
    }
  } catch (const qcollapse::Error& e) {
    return fail(qcollapse::to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
