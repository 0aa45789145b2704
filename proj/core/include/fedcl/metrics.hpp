#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedcl/centroids.hpp"
#include "fedcl/tensor.hpp"

namespace fedcl::metrics {

/// Training-time record of one communication round.
struct RoundMetrics {
  std::size_t round = 0;
  std::vector<double> client_loss;
  std::vector<double> client_accuracy;
  std::vector<double> client_grad_norm;
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;
  double mean_grad_norm = 0.0;
  double contrastive_loss = 0.0;
  double separability = 0.0;

  /// Fills the mean_* fields from the per-client vectors.
  void summarize();
  friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor& logits, std::span<const std::size_t> labels);

/// Returned when every class collapses onto its own mean.
inline constexpr double kSeparabilityCap = 1e9;

/// min pairwise distance between class means divided by the mean distance
/// of samples to their own class mean. Classes with a single sample are left
/// out of the denominator. If `centroids` is given, its vectors stand in for
/// the class means.
double separability(const Tensor& features, std::span<const std::size_t> labels,
                    const std::optional<CentroidSet>& centroids = std::nullopt);

struct Projection {
  Tensor coordinates;             // [N x dims]
  Tensor components;              // [dims x d], unit rows
  double explained_variance = 0;  // fraction of total variance captured
};

/// Projects centred features onto the top principal axes. Each axis is
/// oriented so its largest-magnitude loading is positive.
Projection pca_project(const Tensor& features, std::size_t dims = 2);

/// Header `round,client,loss,acc,mean_acc,grad_norm,contrastive_loss,separability`,
/// one row per (round, client) followed by an aggregate row with client = -1.
void write_metrics_csv(std::span<const RoundMetrics> series, const std::filesystem::path& path);

struct MetricsRow {
  std::size_t round = 0;
  long client = 0;
  double loss = 0, acc = 0, mean_acc = 0, grad_norm = 0, contrastive_loss = 0, separability = 0;
};
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// 9-significant-digit rendering used by every CSV writer.
std::string format_value(double v);

}  // namespace fedcl::metrics
