#include "fedcl/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fedcl/error.hpp"

namespace fedcl::metrics {

void RoundMetrics::summarize() {
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  mean_loss = mean(client_loss);
  mean_accuracy = mean(client_accuracy);
  mean_grad_norm = mean(client_grad_norm);
}

double accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.empty()) throw std::invalid_argument("accuracy: empty batch");
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw DimensionError("accuracy: logits " + logits.shape_string() + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto row = logits.row(n);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[n] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

double separability(const Tensor& features, std::span<const std::size_t> labels,
                    const std::optional<CentroidSet>& centroids) {
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("separability: features " + features.shape_string() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = features.cols();
  std::size_t classes = 0;
  for (std::size_t y : labels) classes = std::max(classes, y + 1);
  if (centroids) classes = std::max(classes, centroids->num_classes());

  std::vector<std::vector<double>> means(classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto row = features.row(n);
    for (std::size_t j = 0; j < d; ++j) means[labels[n]][j] += row[j];
    ++counts[labels[n]];
  }
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) continue;
    present.push_back(c);
    for (double& v : means[c]) v /= static_cast<double>(counts[c]);
    if (centroids && centroids->has(c)) {
      const auto f = (*centroids)[c];
      means[c].assign(f.begin(), f.end());
    }
  }
  if (present.size() < 2) throw std::invalid_argument("separability: at least two classes must be present");

  double min_between = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < present.size(); ++a) {
    for (std::size_t b = a + 1; b < present.size(); ++b) {
      min_between = std::min(min_between, distance(means[present[a]], means[present[b]]));
    }
  }
  double within = 0.0;
  std::size_t within_n = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (counts[labels[n]] < 2) continue;
    within += distance(features.row(n), means[labels[n]]);
    ++within_n;
  }
  if (within_n == 0 || within == 0.0) return kSeparabilityCap;
  return std::min(min_between / (within / static_cast<double>(within_n)), kSeparabilityCap);
}

Projection pca_project(const Tensor& features, std::size_t dims) {
  if (features.rank() != 2) throw DimensionError("pca_project expects [N x d], got " + features.shape_string());
  const auto n = static_cast<Eigen::Index>(features.rows());
  const auto d = static_cast<Eigen::Index>(features.cols());
  if (dims == 0 || static_cast<Eigen::Index>(dims) > d) throw std::invalid_argument("pca_project: dims must be in [1, d]");
  if (n < static_cast<Eigen::Index>(dims)) throw std::invalid_argument("pca_project: fewer samples than dims");

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(features.data().data(), n, d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n);
  const double total = cov.trace();
  if (!(total > 0.0)) throw std::invalid_argument("pca_project: features have zero variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca_project: eigen decomposition failed");

  Projection out;
  out.components = Tensor({dims, static_cast<std::size_t>(d)});
  out.coordinates = Tensor({static_cast<std::size_t>(n), dims});
  double captured = 0.0;
  for (std::size_t k = 0; k < dims; ++k) {
    const Eigen::Index col = d - 1 - static_cast<Eigen::Index>(k);  // eigenvalues ascend
    Eigen::VectorXd axis = solver.eigenvectors().col(col);
    Eigen::Index peak = 0;
    axis.cwiseAbs().maxCoeff(&peak);
    if (axis(peak) < 0) axis = -axis;
    captured += std::max(0.0, solver.eigenvalues()(col));
    const Eigen::VectorXd proj = centred * axis;
    for (Eigen::Index j = 0; j < d; ++j) out.components.at(k, static_cast<std::size_t>(j)) = axis(j);
    for (Eigen::Index i = 0; i < n; ++i) out.coordinates.at(static_cast<std::size_t>(i), k) = proj(i);
  }
  out.explained_variance = captured / total;
  return out;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_metrics_csv(std::span<const RoundMetrics> series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open metrics file for writing");
  out << "round,client,loss,acc,mean_acc,grad_norm,contrastive_loss,separability\n";
  for (const auto& m : series) {
    const std::string shared = format_value(m.mean_accuracy);
    const std::string tail = format_value(m.contrastive_loss) + ',' + format_value(m.separability);
    for (std::size_t k = 0; k < m.client_loss.size(); ++k) {
      out << m.round << ',' << k << ',' << format_value(m.client_loss[k]) << ','
          << format_value(m.client_accuracy[k]) << ',' << shared << ',' << format_value(m.client_grad_norm[k])
          << ',' << tail << '\n';
    }
    out << m.round << ",-1," << format_value(m.mean_loss) << ',' << shared << ',' << shared << ','
        << format_value(m.mean_grad_norm) << ',' << tail << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open metrics file");
  std::string line;
  std::getline(in, line);
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    MetricsRow r;
    char c1, c2, c3, c4, c5, c6, c7;
    if (!(is >> r.round >> c1 >> r.client >> c2 >> r.loss >> c3 >> r.acc >> c4 >> r.mean_acc >> c5 >> r.grad_norm >>
          c6 >> r.contrastive_loss >> c7 >> r.separability)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed metrics row");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace fedcl::metrics
