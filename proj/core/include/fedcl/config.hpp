#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedcl/channel.hpp"
#include "fedcl/protocol.hpp"

namespace fedcl {

/// Every knob of an experiment. The file format is flat `key = value` text
/// with `#` comments; see ExperimentConfig::keys() for the accepted keys.
struct ExperimentConfig {
  protocol::Scheme scheme = protocol::Scheme::fedcl;
  std::size_t clients = 10;         // K
  std::size_t rounds = 200;         // T
  std::size_t classes = 10;         // C
  std::size_t ways = 2;             // m
  std::size_t shots = 50;           // q
  std::size_t batch = 32;           // B
  std::size_t local_iters = 1;      // E
  std::size_t scg_iters = 1;        // E'
  double lambda = 1.0;
  double lr = 1e-3;                            // server / decoder
  std::vector<double> client_lr{1e-3};         // one value, or one per client
  std::optional<double> scg_lr;                // defaults to lr
  double scg_clip = 1.0;                       // SCG gradient-norm clip, 0 = off
  double snr_db = 10.0;
  std::optional<double> downlink_snr_db;       // defaults to snr_db
  channel::Fading fading = channel::Fading::none;
  bool equalize = true;
  std::size_t feature_dim = 64;
  /// Encoder hidden widths; ';' separates architectures assigned to clients
  /// round-robin, ',' separates layer widths, an empty entry means no hidden layer.
  std::string encoder_hidden = "64;32,32;96";
  std::vector<std::size_t> decoder_hidden{64};
  std::size_t scg_hidden = 64;
  std::string dataset = "blobs";               // "blobs" or a CSV path
  std::size_t input_dim = 16;
  std::size_t samples_per_class = 0;           // 0: test_per_class + clients * q
  double blob_spread = 1.0;
  double blob_radius = 4.0;
  std::size_t test_per_class = 50;
  std::uint64_t seed = 0;
  std::string out = "runs/fedcl";

  /// Accepted keys in canonical (echo) order.
  static const std::vector<std::string_view>& keys();

  /// Sets one key from its textual value; throws ConfigError on unknown keys
  /// or values of the wrong type.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Cross-field constraints (m <= C, lambda >= 0, ...). Throws ConfigError.
  void validate() const;

  std::vector<std::vector<std::size_t>> encoder_architectures() const;
  double client_learning_rate(std::size_t k) const;
  std::size_t resolved_samples_per_class() const;

  /// Resolved `key = value` listing that parse_config reads back unchanged.
  std::string to_text() const;
};

/// Parses config text; `origin` names the source in error messages.
ExperimentConfig parse_config_text(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// File (optional) then overrides in order, then validate().
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace fedcl
