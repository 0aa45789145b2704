#include "fedcl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fedcl/error.hpp"
#include "fedcl/metrics.hpp"

namespace fedcl {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                    std::string(expected));
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v, bool allow_inf = false) {
  if (allow_inf && (v == "inf" || v == "+inf" || v == "noiseless")) return std::numeric_limits<double>::infinity();
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view key, std::string_view v, F&& one) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (auto part : split(v, ',')) out.push_back(one(key, part));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string render(double v) {
  if (std::isinf(v)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string_view>& ExperimentConfig::keys() {
  static const std::vector<std::string_view> k{
      "scheme",      "clients",         "rounds",        "classes",        "m",
      "q",           "batch",           "local_iters",   "scg_iters",      "lambda",
      "lr",          "client_lr",       "scg_lr",         "scg_clip",        "snr_db",         "downlink_snr_db",
      "fading",      "equalize",        "feature_dim",   "encoder_hidden", "decoder_hidden",
      "scg_hidden",  "dataset",         "input_dim",     "samples_per_class", "blob_spread",
      "blob_radius", "test_per_class",  "seed",          "out"};
  return k;
}

void ExperimentConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "scheme") scheme = protocol::parse_scheme(v);
  else if (key == "clients") clients = to_size(key, v);
  else if (key == "rounds") rounds = to_size(key, v);
  else if (key == "classes") classes = to_size(key, v);
  else if (key == "m") ways = to_size(key, v);
  else if (key == "q") shots = to_size(key, v);
  else if (key == "batch") batch = to_size(key, v);
  else if (key == "local_iters") local_iters = to_size(key, v);
  else if (key == "scg_iters") scg_iters = to_size(key, v);
  else if (key == "lambda") lambda = to_double(key, v);
  else if (key == "lr") lr = to_double(key, v);
  else if (key == "client_lr") client_lr = to_list<double>(key, v, [](auto k, auto p) { return to_double(k, p); });
  else if (key == "scg_lr") scg_lr = v.empty() || v == "auto" ? std::nullopt : std::optional(to_double(key, v));
  else if (key == "scg_clip") scg_clip = to_double(key, v);
  else if (key == "snr_db") snr_db = to_double(key, v, true);
  else if (key == "downlink_snr_db") {
    downlink_snr_db = v.empty() || v == "auto" ? std::nullopt : std::optional(to_double(key, v, true));
  } else if (key == "fading") {
    if (v == "none") fading = channel::Fading::none;
    else if (v == "rayleigh") fading = channel::Fading::rayleigh;
    else bad_value(key, v, "none or rayleigh");
  } else if (key == "equalize") equalize = to_bool(key, v);
  else if (key == "feature_dim") feature_dim = to_size(key, v);
  else if (key == "encoder_hidden") {
    encoder_hidden = std::string(v);
    (void)encoder_architectures();
  } else if (key == "decoder_hidden") decoder_hidden = to_list<std::size_t>(key, v, to_size);
  else if (key == "scg_hidden") scg_hidden = to_size(key, v);
  else if (key == "dataset") dataset = std::string(v);
  else if (key == "input_dim") input_dim = to_size(key, v);
  else if (key == "samples_per_class") samples_per_class = to_size(key, v);
  else if (key == "blob_spread") blob_spread = to_double(key, v);
  else if (key == "blob_radius") blob_radius = to_double(key, v);
  else if (key == "test_per_class") test_per_class = to_size(key, v);
  else if (key == "seed") seed = to_u64(key, v);
  else if (key == "out") out = std::string(v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string ExperimentConfig::get(std::string_view key) const {
  if (key == "scheme") return std::string(protocol::to_string(scheme));
  if (key == "clients") return std::to_string(clients);
  if (key == "rounds") return std::to_string(rounds);
  if (key == "classes") return std::to_string(classes);
  if (key == "m") return std::to_string(ways);
  if (key == "q") return std::to_string(shots);
  if (key == "batch") return std::to_string(batch);
  if (key == "local_iters") return std::to_string(local_iters);
  if (key == "scg_iters") return std::to_string(scg_iters);
  if (key == "lambda") return render(lambda);
  if (key == "lr") return render(lr);
  if (key == "client_lr") {
    std::string s;
    for (std::size_t i = 0; i < client_lr.size(); ++i) s += (i ? "," : "") + render(client_lr[i]);
    return s;
  }
  if (key == "scg_lr") return render(scg_lr.value_or(lr));
  if (key == "scg_clip") return render(scg_clip);
  if (key == "snr_db") return render(snr_db);
  if (key == "downlink_snr_db") return render(downlink_snr_db.value_or(snr_db));
  if (key == "fading") return fading == channel::Fading::none ? "none" : "rayleigh";
  if (key == "equalize") return equalize ? "true" : "false";
  if (key == "feature_dim") return std::to_string(feature_dim);
  if (key == "encoder_hidden") return encoder_hidden;
  if (key == "decoder_hidden") return join(decoder_hidden);
  if (key == "scg_hidden") return std::to_string(scg_hidden);
  if (key == "dataset") return dataset;
  if (key == "input_dim") return std::to_string(input_dim);
  if (key == "samples_per_class") return std::to_string(resolved_samples_per_class());
  if (key == "blob_spread") return render(blob_spread);
  if (key == "blob_radius") return render(blob_radius);
  if (key == "test_per_class") return std::to_string(test_per_class);
  if (key == "seed") return std::to_string(seed);
  if (key == "out") return out;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::vector<std::size_t>> ExperimentConfig::encoder_architectures() const {
  std::vector<std::vector<std::size_t>> archs;
  for (auto part : split(encoder_hidden, ';')) {
    archs.push_back(to_list<std::size_t>("encoder_hidden", part, to_size));
  }
  return archs;
}

double ExperimentConfig::client_learning_rate(std::size_t k) const {
  return client_lr.size() == 1 ? client_lr.front() : client_lr.at(k);
}

std::size_t ExperimentConfig::resolved_samples_per_class() const {
  return samples_per_class ? samples_per_class : test_per_class + clients * shots;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  if (clients == 0) fail("clients (K) must be >= 1");
  if (classes < 2) fail("classes (C) must be >= 2");
  if (ways == 0 || ways > classes) {
    fail("m = " + std::to_string(ways) + " must satisfy 1 <= m <= C = " + std::to_string(classes));
  }
  if (shots == 0) fail("q must be >= 1");
  if (clients * ways < classes) fail("K*m must be >= C so every class has an owner");
  if (batch == 0) fail("batch (B) must be >= 1");
  if (local_iters == 0) fail("local_iters (E) must be >= 1");
  if (lambda < 0.0) fail("lambda must be >= 0");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (scg_lr && *scg_lr < 0.0) fail("scg_lr must be >= 0");
  if (!(scg_clip >= 0.0)) fail("scg_clip must be >= 0");
  if (client_lr.empty()) fail("client_lr needs at least one value");
  if (client_lr.size() != 1 && client_lr.size() != clients) {
    fail("client_lr must hold 1 or K = " + std::to_string(clients) + " values");
  }
  for (double v : client_lr) {
    if (!(v >= 0.0)) fail("client_lr values must be >= 0");
  }
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) fail("snr_db must be finite or inf");
  if (feature_dim == 0) fail("feature_dim must be >= 1");
  if (scg_hidden == 0) fail("scg_hidden must be >= 1");
  for (std::size_t w : decoder_hidden) {
    if (w == 0) fail("decoder_hidden widths must be >= 1");
  }
  for (const auto& arch : encoder_architectures()) {
    for (std::size_t w : arch) {
      if (w == 0) fail("encoder_hidden widths must be >= 1");
    }
  }
  if (scheme == protocol::Scheme::fedavg && encoder_architectures().size() > 1 && clients > 1) {
    const auto archs = encoder_architectures();
    for (const auto& a : archs) {
      if (a != archs.front()) fail("fedavg requires homogeneous encoder_hidden (one architecture for all clients)");
    }
  }
  if (dataset == "blobs") {
    if (input_dim == 0) fail("input_dim must be >= 1");
    if (!(blob_spread >= 0.0)) fail("blob_spread must be >= 0");
    if (!(blob_radius > 0.0)) fail("blob_radius must be > 0");
    if (resolved_samples_per_class() <= test_per_class) fail("samples_per_class must exceed test_per_class");
  }
  if (out.empty()) fail("out must name a directory");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  for (auto key : keys()) os << key << " = " << get(key) << '\n';
  return os.str();
}

ExperimentConfig parse_config_text(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg = path ? parse_config_file(*path) : ExperimentConfig{};
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace fedcl
