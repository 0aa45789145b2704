#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "fedcl/data.hpp"
#include "fedcl/metrics.hpp"

using namespace fedcl;
using namespace fedcl::metrics;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fedcl_test_metrics";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

RoundMetrics make_round(std::size_t t, std::vector<double> loss, std::vector<double> acc) {
  RoundMetrics m;
  m.round = t;
  m.client_loss = std::move(loss);
  m.client_accuracy = std::move(acc);
  m.client_grad_norm.assign(m.client_loss.size(), 0.123456789123);
  m.contrastive_loss = -1.0 / 3.0;
  m.separability = 2.0 / 7.0;
  m.summarize();
  return m;
}

}  // namespace

TEST(Accuracy, Counting) {
  const Tensor logits = Tensor::matrix(4, 2, {1, 0, 0, 1, 2, 1, 0, 3});
  EXPECT_EQ(accuracy(logits, std::vector<std::size_t>{0, 1, 0, 1}), 1.0);
  EXPECT_EQ(accuracy(logits, std::vector<std::size_t>{1, 0, 1, 0}), 0.0);
  EXPECT_EQ(accuracy(logits, std::vector<std::size_t>{0, 1, 0, 0}), 0.75);
}

TEST(Accuracy, TiesGoToLowestIndex) {
  const Tensor logits = Tensor::matrix(1, 3, {2, 2, 2});
  EXPECT_EQ(accuracy(logits, std::vector<std::size_t>{0}), 1.0);
  EXPECT_EQ(accuracy(logits, std::vector<std::size_t>{1}), 0.0);
}

TEST(Accuracy, EmptyBatchRejected) {
  EXPECT_THROW(accuracy(Tensor::matrix(1, 2, {0, 1}), std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(Accuracy, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n;
  Tensor logits({50, 4});
  for (double& v : logits.data()) v = n(rng);
  std::vector<std::size_t> y(50);
  for (auto& v : y) v = rng() % 4;
  Tensor squashed = logits;
  for (double& v : squashed.data()) v = std::tanh(3.0 * v) + 7.0;
  EXPECT_EQ(accuracy(logits, y), accuracy(squashed, y));
}

TEST(Separability, PointClassesHitCap) {
  const Tensor f = Tensor::matrix(4, 2, {0, 0, 0, 0, 3, 4, 3, 4});
  EXPECT_EQ(separability(f, std::vector<std::size_t>{0, 0, 1, 1}), kSeparabilityCap);
}

TEST(Separability, IdenticalDistributionsNearZero) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Tensor f({4000, 3});
  for (double& v : f.data()) v = n(rng);
  std::vector<std::size_t> y(4000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 2;
  EXPECT_LT(separability(f, y), 0.1);
}

TEST(Separability, FarBlobsWellSeparated) {
  const auto d = data::gen_blobs({3, 4, 100, 1.0, 10.0 / std::sqrt(2.0), 2});
  EXPECT_GT(separability(d.x, d.y), 2.0);
}

TEST(Separability, SingletonClassesExcludedFromWithin) {
  const Tensor f = Tensor::matrix(3, 1, {0, 2, 10});
  // within uses class 0 only: mean 1, distances 1 -> ratio = 9 / 1.
  EXPECT_DOUBLE_EQ(separability(f, std::vector<std::size_t>{0, 0, 1}), 9.0);
}

TEST(Separability, CentroidsReplaceMeans) {
  const Tensor f = Tensor::matrix(4, 1, {0, 2, 10, 12});
  CentroidSet F = CentroidSet::complete(Tensor::matrix(2, 1, {0, 20}));
  // between = 20, within = mean(|0|, |2|, |10-20|, |12-20|) = 5.
  EXPECT_DOUBLE_EQ(separability(f, std::vector<std::size_t>{0, 0, 1, 1}, F), 4.0);
}

TEST(Separability, InvariantUnderTranslationAndRotation) {
  const auto d = data::gen_blobs({3, 2, 40, 1.0, 4.0, 3});
  Tensor moved = d.x;
  const double c = std::cos(0.7), s = std::sin(0.7);
  for (std::size_t i = 0; i < moved.rows(); ++i) {
    const double x = d.x.at(i, 0), y = d.x.at(i, 1);
    moved.at(i, 0) = c * x - s * y + 5.0;
    moved.at(i, 1) = s * x + c * y - 3.0;
  }
  EXPECT_NEAR(separability(d.x, d.y), separability(moved, d.y), 1e-9);
}

TEST(Separability, NeedsTwoClasses) {
  EXPECT_THROW(separability(Tensor::matrix(2, 1, {0, 1}), std::vector<std::size_t>{1, 1}), std::invalid_argument);
}

TEST(Pca, AxisAlignedTwoDimIsIdentityUpToSign) {
  const Tensor f = Tensor::matrix(4, 2, {-3, 0, 3, 0, 0, -1, 0, 1});
  const auto p = pca_project(f, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(std::abs(p.coordinates.at(i, 0)), std::abs(f.at(i, 0)), 1e-12);
    EXPECT_NEAR(std::abs(p.coordinates.at(i, 1)), std::abs(f.at(i, 1)), 1e-12);
  }
  EXPECT_NEAR(p.explained_variance, 1.0, 1e-12);
}

TEST(Pca, PreservesDistancesInPlanarData) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  Tensor f({30, 5});
  for (std::size_t i = 0; i < 30; ++i) {
    const double a = n(rng), b = n(rng);
    // plane spanned by two orthonormal vectors in R^5, offset by a constant
    const double u[5] = {0.6, 0.8, 0, 0, 0}, v[5] = {0, 0, 0.6, 0, 0.8};
    for (std::size_t j = 0; j < 5; ++j) f.at(i, j) = a * u[j] + b * v[j] + 1.5;
  }
  const auto p = pca_project(f, 2);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t k = i + 1; k < 30; ++k) {
      double d_orig = 0, d_proj = 0;
      for (std::size_t j = 0; j < 5; ++j) d_orig += std::pow(f.at(i, j) - f.at(k, j), 2);
      for (std::size_t j = 0; j < 2; ++j) d_proj += std::pow(p.coordinates.at(i, j) - p.coordinates.at(k, j), 2);
      EXPECT_NEAR(std::sqrt(d_orig), std::sqrt(d_proj), 1e-9);
    }
  }
}

TEST(Pca, SignConventionAndThreeBlobVariance) {
  const auto d = data::gen_blobs({3, 8, 100, 0.3, 6.0, 5});
  const auto p = pca_project(d.x, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    double peak = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      if (std::abs(p.components.at(k, j)) > std::abs(peak)) peak = p.components.at(k, j);
    }
    EXPECT_GT(peak, 0.0);
  }
  EXPECT_GT(p.explained_variance, 0.8);
}

TEST(Pca, ZeroVarianceRejected) {
  EXPECT_THROW(pca_project(Tensor::matrix(3, 2, {1, 1, 1, 1, 1, 1}), 2), std::invalid_argument);
}

TEST(MetricsCsv, EmptySeriesHeaderOnly) {
  const auto p = scratch("empty.csv");
  write_metrics_csv({}, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "round,client,loss,acc,mean_acc,grad_norm,contrastive_loss,separability");
  EXPECT_EQ(line_count(p), 1u);
}

TEST(MetricsCsv, RowCountAndRoundTrip) {
  const std::vector<RoundMetrics> series{make_round(0, {0.7, 1.0 / 3.0}, {0.5, 0.25}),
                                         make_round(1, {0.6, 0.2}, {0.75, 1.0})};
  const auto p = scratch("two.csv");
  write_metrics_csv(series, p);
  EXPECT_EQ(line_count(p), 7u);
  const auto rows = read_metrics_csv(p);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[2].client, -1);
  EXPECT_EQ(rows[2].loss, std::stod(format_value(series[0].mean_loss)));
  EXPECT_EQ(rows[1].loss, std::stod(format_value(1.0 / 3.0)));
  EXPECT_EQ(rows[4].acc, 1.0);
  EXPECT_EQ(format_value(rows[0].contrastive_loss), format_value(-1.0 / 3.0));
}

TEST(MetricsCsv, NineSignificantDigits) {
  EXPECT_EQ(format_value(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format_value(123456789012.0), "1.23456789e+11");
}
