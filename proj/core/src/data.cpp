#include "fedcl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "fedcl/error.hpp"

namespace fedcl::data {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.x = take_rows(x, indices);
  out.y.reserve(indices.size());
  for (std::size_t i : indices) out.y.push_back(y.at(i));
  return out;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < y.size(); ++i) by_class.at(y[i]).push_back(i);
  return by_class;
}

Dataset gen_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw ConfigError("gen_blobs: need at least 2 classes");
  if (spec.dim == 0 || spec.per_class == 0) throw ConfigError("gen_blobs: dim and per_class must be positive");
  if (!(spec.spread >= 0.0) || !(spec.radius > 0.0)) throw ConfigError("gen_blobs: spread must be >= 0 and radius > 0");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor means({spec.classes, spec.dim});
  for (std::size_t c = 0; c < spec.classes; ++c) {
    auto m = means.row(c);
    double norm = 0.0;
    do {
      for (double& v : m) v = unit(rng);
      norm = std::sqrt(dot(m, m));
    } while (norm == 0.0);
    for (double& v : m) v *= spec.radius / norm;
  }

  Dataset ds;
  ds.num_classes = spec.classes;
  ds.x = Tensor({spec.classes * spec.per_class, spec.dim});
  ds.y.reserve(spec.classes * spec.per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto m = means.row(c);
    for (std::size_t n = 0; n < spec.per_class; ++n, ++row) {
      auto dst = ds.x.row(row);
      for (std::size_t j = 0; j < spec.dim; ++j) dst[j] = m[j] + spec.spread * unit(rng);
      ds.y.push_back(c);
    }
  }
  return ds;
}

std::vector<Shard> partition_mwayqshot(const Dataset& ds, const PartitionSpec& spec) {
  const std::size_t C = ds.num_classes;
  if (spec.clients == 0 || spec.ways == 0 || spec.shots == 0) {
    throw ConfigError("partition: clients, m and q must be positive");
  }
  if (spec.ways > C) {
    throw ConfigError("partition: m = " + std::to_string(spec.ways) + " exceeds the number of classes C = " +
                      std::to_string(C));
  }
  if (spec.clients * spec.ways < C) {
    throw ConfigError("partition: K*m = " + std::to_string(spec.clients * spec.ways) + " cannot cover C = " +
                      std::to_string(C) + " classes");
  }
  auto pools = ds.indices_by_class();
  for (std::size_t c = 0; c < C; ++c) {
    if (pools[c].size() < spec.shots) {
      throw ConfigError("partition: class " + std::to_string(c) + " has " + std::to_string(pools[c].size()) +
                        " samples, fewer than q = " + std::to_string(spec.shots));
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> all_classes(C);
  std::iota(all_classes.begin(), all_classes.end(), 0);
  std::vector<std::vector<std::size_t>> assignment(spec.clients);
  std::string violation;
  bool ok = false;
  for (int attempt = 0; attempt < kMaxPartitionRetries && !ok; ++attempt) {
    std::vector<std::size_t> owners(C, 0);
    for (auto& classes : assignment) {
      std::vector<std::size_t> perm = all_classes;
      std::shuffle(perm.begin(), perm.end(), rng);
      classes.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(spec.ways));
      std::sort(classes.begin(), classes.end());
      for (std::size_t c : classes) ++owners[c];
    }
    ok = true;
    for (std::size_t c = 0; c < C && ok; ++c) {
      if (owners[c] == 0) {
        violation = "class " + std::to_string(c) + " is owned by no client";
        ok = false;
      } else if (owners[c] * spec.shots > pools[c].size()) {
        violation = "class " + std::to_string(c) + " needs " + std::to_string(owners[c] * spec.shots) +
                    " samples but has " + std::to_string(pools[c].size());
        ok = false;
      }
    }
  }
  if (!ok) {
    throw ConfigError("partition unsatisfiable after " + std::to_string(kMaxPartitionRetries) + " draws: " +
                      violation);
  }

  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> taken(C, 0);
  std::vector<Shard> shards(spec.clients);
  for (std::size_t k = 0; k < spec.clients; ++k) {
    shards[k].classes = assignment[k];
    for (std::size_t c : assignment[k]) {
      for (std::size_t n = 0; n < spec.shots; ++n) shards[k].indices.push_back(pools[c][taken[c]++]);
    }
  }
  return shards;
}

HoldoutSplit split_holdout(const Dataset& ds, std::size_t per_class, std::uint64_t seed) {
  auto pools = ds.indices_by_class();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t c = 0; c < pools.size(); ++c) {
    auto& pool = pools[c];
    if (pool.size() <= per_class) {
      throw ConfigError("split_holdout: class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                        " samples, cannot hold out " + std::to_string(per_class));
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    test_idx.insert(test_idx.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_class));
    train_idx.insert(train_idx.end(), pool.begin() + static_cast<std::ptrdiff_t>(per_class), pool.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  HoldoutSplit split;
  split.train = ds.subset(train_idx);
  split.test = per_class > 0 ? ds.subset(test_idx) : Dataset{Tensor(), {}, ds.num_classes};
  return split;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(where(path, 1) + "empty file, expected header y,x0,...");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "y") throw ParseError(where(path, 1) + "header must start with y,x0");
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<std::size_t> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(where(path, line_no) + "expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::size_t label = 0;
    auto [lp, lec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), label);
    if (lec != std::errc() || lp != fields[0].data() + fields[0].size()) {
      throw ParseError(where(path, line_no) + "label '" + std::string(fields[0]) + "' is not a class index");
    }
    labels.push_back(label);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(fields[j].data(), fields[j].data() + fields[j].size(), v);
      if (ec != std::errc() || p != fields[j].data() + fields[j].size() || !std::isfinite(v)) {
        throw ParseError(where(path, line_no) + "field " + std::to_string(j) + " '" + std::string(fields[j]) +
                         "' is not a finite number");
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(where(path, line_no) + "no data rows");
  Dataset ds;
  ds.num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  ds.x = Tensor({labels.size(), dim}, std::move(values));
  ds.y = std::move(labels);
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << 'y';
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.y[i];
    for (double v : ds.x.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace fedcl::data
