#pragma once

#include <filesystem>

#include "fedcl/config.hpp"
#include "fedcl/data.hpp"
#include "fedcl/protocol.hpp"

namespace fedcl {

/// Loads or generates the dataset named by the config.
data::Dataset load_dataset(const ExperimentConfig& cfg);

/// Dataset, holdout, m-way q-shot partition and model initialisation, all
/// seeded from cfg.seed.
protocol::TrainingSetup build_setup(const ExperimentConfig& cfg);

/// build_setup + run_training.
protocol::TrainingResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1);

/// Writes metrics.csv, features.csv, projection.csv, summary.csv and
/// config.resolved into `dir`.
void write_outputs(const ExperimentConfig& cfg, const protocol::TrainingResult& result,
                   const std::filesystem::path& dir);

/// FEDCL_THREADS if set to a positive integer, else 1.
std::size_t threads_from_env();

}  // namespace fedcl
