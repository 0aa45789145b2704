#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedcl/config.hpp"

namespace fedcl {

/// Runs training and writes every output file under cfg.out. Returns the
/// process exit code; errors are reported on `err`.
int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err, std::size_t threads = 1);

struct GradcheckEntry {
  std::string name;
  std::size_t parameters = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  double tolerance = 1e-4;
  double eps = 1e-6;
  std::uint64_t seed = 0;
  /// Fault injection: perturbs every analytic gradient before comparing.
  bool corrupt_backward = false;
};

/// Affine, ReLU, softmax cross-entropy, each encoder/decoder architecture,
/// the composed split network, the centroid regulariser and the SCG
/// contrastive loss, each against central finite differences.
std::vector<GradcheckEntry> run_gradcheck_suite(const GradcheckOptions& opts);
int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out);

struct ChannelTestResult {
  double configured_db = 0.0;
  double empirical_db = 0.0;
  double noise_correlation = 0.0;  // between two distinct client streams
  std::size_t symbols = 0;
  bool pass = false;
};

inline constexpr double kSnrToleranceDb = 0.2;
inline constexpr std::size_t kSnrCalibrationSymbols = 100000;

/// Sends `symbols` unit-power symbols in one frame and measures the SNR.
/// Fails when |empirical - configured| > 0.2 dB with at least 10^5 symbols.
ChannelTestResult run_channel_test(double snr_db, std::size_t symbols, std::uint64_t seed);
int cmd_channeltest(double snr_db, std::size_t symbols, std::uint64_t seed, std::ostream& out);

/// One training run per value of `key`, each into `<out>/<key>=<value>/`.
int cmd_sweep(const ExperimentConfig& base, const std::string& key, const std::vector<std::string>& values,
              std::ostream& out, std::ostream& err, std::size_t threads = 1);

}  // namespace fedcl
