// Command-line front end: fit / simulate / select / predict / summarize.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <functional>
#include <vector>

#include "tdglm/io.hpp"

namespace {

// options re-imposed after the config file loads, so flags win over the file
struct Tracked {
  CLI::Option* opt;
  std::function<void(tdglm::RunConfig&, const tdglm::RunConfig&)> restore;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Tweedie double GLMs with spatial effects and "
               "spike-and-slab variable selection"};
  app.require_subcommand(1);

  tdglm::RunConfig config;
  std::function<int(const tdglm::RunConfig&)> action;
  std::vector<Tracked> tracked;

  auto track = [&](CLI::Option* opt, auto member) {
    tracked.push_back({opt, [member](tdglm::RunConfig& dst,
                                     const tdglm::RunConfig& src) {
                         dst.*member = src.*member;
                       }});
  };
  auto track_hyper = [&](CLI::Option* opt, auto member) {
    tracked.push_back({opt, [member](tdglm::RunConfig& dst,
                                     const tdglm::RunConfig& src) {
                         dst.hyper.*member = src.hyper.*member;
                       }});
  };

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config.config_path, "JSON config file");
    track(cmd->add_option("--out", config.out_dir, "output directory"),
          &tdglm::RunConfig::out_dir);
    track(cmd->add_option("--seed", config.seed, "master seed"),
          &tdglm::RunConfig::seed);
  };
  auto add_hyper = [&](CLI::App* cmd) {
    track_hyper(cmd->add_option("--iters", config.hyper.iters, "MCMC iterations"),
                &tdglm::Hyperparameters::iters);
    track_hyper(
        cmd->add_option("--burnin", config.hyper.burnin, "burn-in iterations"),
        &tdglm::Hyperparameters::burnin);
    track_hyper(cmd->add_option("--thin", config.hyper.thin, "thinning interval"),
                &tdglm::Hyperparameters::thin);
    track_hyper(cmd->add_option("--fdr-alpha", config.hyper.fdr_alpha, "FDR level"),
                &tdglm::Hyperparameters::fdr_alpha);
    track_hyper(
        cmd->add_option("--fdr-c", config.hyper.fdr_c, "near-zero threshold"),
        &tdglm::Hyperparameters::fdr_c);
  };

  auto* fit = app.add_subcommand("fit", "run the MCMC sampler on a dataset");
  track(fit->add_option("--model", config.model, "one of M1/M2/M3/M4"),
        &tdglm::RunConfig::model);
  track(fit->add_option("--data", config.data_path, "data CSV"),
        &tdglm::RunConfig::data_path);
  track(fit->add_option("--coords", config.coords_path, "site coordinates CSV"),
        &tdglm::RunConfig::coords_path);
  track(fit->add_option("--chains", config.chains, "number of independent chains"),
        &tdglm::RunConfig::chains);
  add_common(fit);
  add_hyper(fit);
  fit->callback([&]() { action = tdglm::fit_command; });

  auto* simulate =
      app.add_subcommand("simulate", "generate synthetic datasets from a "
                                     "scenario grid (optionally fit and score)");
  track(simulate->add_option("--workers", config.workers, "parallel workers"),
        &tdglm::RunConfig::workers);
  add_common(simulate);
  simulate->callback([&]() { action = tdglm::simulate_command; });

  auto* select =
      app.add_subcommand("select", "FDR-based variable selection on stored draws");
  track(select->add_option("--fit-dir", config.fit_dir, "directory with draws.csv"),
        &tdglm::RunConfig::fit_dir);
  add_common(select);
  add_hyper(select);
  select->callback([&]() { action = tdglm::select_command; });

  auto* predict =
      app.add_subcommand("predict", "out-of-sample scoring at the stored "
                                    "posterior medians");
  track(predict->add_option("--data", config.data_path, "out-sample data CSV"),
        &tdglm::RunConfig::data_path);
  track(predict->add_option("--fit-dir", config.fit_dir,
                            "directory with a stored fit"),
        &tdglm::RunConfig::fit_dir);
  add_common(predict);
  predict->callback([&]() { action = tdglm::predict_command; });

  auto* summarize =
      app.add_subcommand("summarize", "recompute summary.csv from stored draws");
  track(summarize->add_option("--fit-dir", config.fit_dir,
                              "directory with draws.csv and meta.json"),
        &tdglm::RunConfig::fit_dir);
  add_common(summarize);
  summarize->callback([&]() { action = tdglm::summarize_command; });

  CLI11_PARSE(app, argc, argv);

  try {
    const tdglm::RunConfig from_flags = config;
    tdglm::apply_config_file(config);
    for (const Tracked& t : tracked) {
      if (t.opt->count() > 0) t.restore(config, from_flags);
    }
    if ((fit->parsed() || predict->parsed()) && config.data_path.empty()) {
      throw std::runtime_error("--data (or a 'data' config entry) is required");
    }
    return action(config);
  } catch (const std::exception& e) {
    const nlohmann::json err{{"error", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}
