// fedcl: train / gradcheck / channeltest / sweep driver.

#include <CLI11.hpp>

#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedcl/commands.hpp"
#include "fedcl/config.hpp"
#include "fedcl/error.hpp"
#include "fedcl/experiment.hpp"
#include "fedcl/metrics.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> scheme;
  std::optional<std::string> snr_db;
  std::optional<std::size_t> clients;
  std::optional<std::size_t> m;
  std::optional<double> lambda;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Flat key=value experiment file");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--out", out, "Output directory");
    app->add_option("--scheme", scheme, "fedcl | fedproto | fedavg | vanilla");
    app->add_option("--snr-db", snr_db, "Uplink SNR in dB ('inf' for a noiseless link)");
    app->add_option("--clients", clients, "Number of clients K");
    app->add_option("--m", m, "Classes per client (m-way)");
    app->add_option("--lambda", lambda, "Centroid regularisation weight");
    app->add_option("--set", sets, "Any config key as key=value (repeatable)");
  }

  fedcl::ExperimentConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw fedcl::ConfigError("--set expects key=value, got '" + kv + "'");
      overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (out) overrides.emplace_back("out", *out);
    if (scheme) overrides.emplace_back("scheme", *scheme);
    if (snr_db) overrides.emplace_back("snr_db", *snr_db);
    if (clients) overrides.emplace_back("clients", std::to_string(*clients));
    if (m) overrides.emplace_back("m", std::to_string(*m));
    if (lambda) overrides.emplace_back("lambda", fedcl::metrics::format_value(*lambda));
    std::optional<std::filesystem::path> path;
    if (!config.empty()) path = config;
    return fedcl::parse_config(path, overrides);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated contrastive split-learning simulator"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "Run one training experiment");
  train_flags.attach(train);

  fedcl::GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  gradcheck->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  gradcheck->add_option("--eps", gc.eps, "Central-difference step");
  gradcheck->add_option("--seed", gc.seed, "Seed for the random test points");

  std::string ct_snr = "5";
  std::size_t ct_symbols = fedcl::kSnrCalibrationSymbols;
  std::uint64_t ct_seed = 0;
  auto* channeltest = app.add_subcommand("channeltest", "Measure empirical SNR of the simulated link");
  channeltest->add_option("--snr-db", ct_snr, "Configured SNR in dB ('inf' for noiseless)");
  channeltest->add_option("--symbols", ct_symbols, "Number of unit-power symbols");
  channeltest->add_option("--seed", ct_seed, "Noise seed");

  CommonFlags sweep_flags;
  std::string grid;
  auto* sweep = app.add_subcommand("sweep", "Train once per grid value, one output directory per cell");
  sweep_flags.attach(sweep);
  sweep->add_option("--grid", grid, "key=v1,v2,... e.g. snr_db=0,5,10,20 or m=1,2,4")->required();

  CLI11_PARSE(app, argc, argv);

  const std::size_t threads = fedcl::threads_from_env();
  try {
    if (*train) return fedcl::cmd_train(train_flags.resolve(), std::cout, std::cerr, threads);
    if (*gradcheck) return fedcl::cmd_gradcheck(gc, std::cout);
    if (*channeltest) {
      double snr = std::numeric_limits<double>::infinity();
      if (ct_snr != "inf" && ct_snr != "noiseless") snr = std::stod(ct_snr);
      return fedcl::cmd_channeltest(snr, ct_symbols, ct_seed, std::cout);
    }
    if (*sweep) {
      const auto eq = grid.find('=');
      if (eq == std::string::npos) throw fedcl::ConfigError("--grid expects key=v1,v2,...");
      std::vector<std::string> values;
      std::string rest = grid.substr(eq + 1);
      for (std::size_t start = 0;;) {
        const auto comma = rest.find(',', start);
        values.push_back(rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return fedcl::cmd_sweep(sweep_flags.resolve(), grid.substr(0, eq), values, std::cout, std::cerr, threads);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
