#include "fedcl/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <string>

#include "fedcl/error.hpp"
#include "fedcl/metrics.hpp"
#include "fedcl/models.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

namespace {

std::uint64_t seed_for(const ExperimentConfig& cfg, StreamPurpose purpose, std::uint64_t a = 0) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(purpose), a});
}

}  // namespace

data::Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "blobs") {
    data::BlobSpec spec;
    spec.classes = cfg.classes;
    spec.dim = cfg.input_dim;
    spec.per_class = cfg.resolved_samples_per_class();
    spec.spread = cfg.blob_spread;
    spec.radius = cfg.blob_radius;
    spec.seed = seed_for(cfg, StreamPurpose::data);
    return data::gen_blobs(spec);
  }
  data::Dataset ds = data::load_csv(cfg.dataset);
  if (ds.num_classes > cfg.classes) {
    throw ConfigError("dataset " + cfg.dataset + " has " + std::to_string(ds.num_classes) + " classes but classes = " +
                      std::to_string(cfg.classes));
  }
  ds.num_classes = cfg.classes;
  return ds;
}

protocol::TrainingSetup build_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  const data::Dataset full = load_dataset(cfg);
  const data::HoldoutSplit split = data::split_holdout(full, cfg.test_per_class, seed_for(cfg, StreamPurpose::data, 1));

  data::PartitionSpec pspec{cfg.clients, cfg.ways, cfg.shots, seed_for(cfg, StreamPurpose::partition)};
  const auto shards = data::partition_mwayqshot(split.train, pspec);
  const auto test_by_class = split.test.indices_by_class();
  const auto archs = cfg.encoder_architectures();
  const std::size_t input_dim = full.dim();

  protocol::TrainingSetup setup;
  setup.rounds = cfg.rounds;
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    protocol::ClientState client;
    client.id = k;
    client.shard = split.train.subset(shards[k].indices);
    std::vector<std::size_t> test_idx;
    for (std::size_t c : shards[k].classes) {
      if (c < test_by_class.size()) test_idx.insert(test_idx.end(), test_by_class[c].begin(), test_by_class[c].end());
    }
    if (!test_idx.empty()) client.test = split.test.subset(test_idx);
    models::EncoderSpec es{input_dim, archs[k % archs.size()], cfg.feature_dim,
                           seed_for(cfg, StreamPurpose::init, 100 + k)};
    client.encoder = models::make_encoder(es);
    client.lr = cfg.client_learning_rate(k);
    setup.clients.push_back(std::move(client));
  }

  auto& server = setup.server;
  models::DecoderSpec ds{cfg.feature_dim, cfg.decoder_hidden, cfg.classes, seed_for(cfg, StreamPurpose::init, 1)};
  server.global_decoder = models::make_decoder(ds);
  server.scg = models::CentroidGenerator(cfg.classes, cfg.feature_dim, cfg.scg_hidden,
                                         seed_for(cfg, StreamPurpose::init, 2));
  server.centroids = models::scg_forward(server.scg);
  server.lr = cfg.lr;
  server.scg_lr = cfg.scg_lr.value_or(cfg.lr);
  server.scg_clip = cfg.scg_clip;
  server.lambda = cfg.lambda;
  server.local_iters = cfg.local_iters;
  server.scg_iters = cfg.scg_iters;
  if (cfg.scheme == protocol::Scheme::fedavg) {
    server.global_encoder = setup.clients.front().encoder;
    for (auto& c : setup.clients) c.encoder = *server.global_encoder;
  }

  auto& st = setup.settings;
  st.scheme = cfg.scheme;
  st.batch_size = cfg.batch;
  st.seed = seed_for(cfg, StreamPurpose::minibatch);
  st.uplink = channel::ChannelConfig{cfg.snr_db, cfg.fading, cfg.equalize, seed_for(cfg, StreamPurpose::uplink)};
  st.downlink = channel::ChannelConfig{cfg.downlink_snr_db.value_or(cfg.snr_db), cfg.fading, cfg.equalize,
                                       seed_for(cfg, StreamPurpose::downlink)};
  return setup;
}

protocol::TrainingResult run_experiment(const ExperimentConfig& cfg, std::size_t threads) {
  protocol::TrainingSetup setup = build_setup(cfg);
  setup.settings.threads = threads;
  return protocol::run_training(std::move(setup));
}

void write_outputs(const ExperimentConfig& cfg, const protocol::TrainingResult& result,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  metrics::write_metrics_csv(result.series, dir / "metrics.csv");

  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error((dir / name).string() + ": cannot open for writing");
    return out;
  };

  {
    std::ofstream out = open("config.resolved");
    out << cfg.to_text();
  }

  const auto& ev = result.final_eval;
  {
    std::ofstream out = open("features.csv");
    out << "client,label";
    const std::size_t d = ev.features.empty() ? 0 : ev.features.cols();
    for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
    out << '\n';
    for (std::size_t n = 0; n < ev.labels.size(); ++n) {
      out << ev.owners[n] << ',' << ev.labels[n];
      for (double v : ev.features.row(n)) out << ',' << metrics::format_value(v);
      out << '\n';
    }
  }

  {
    std::ofstream out = open("projection.csv");
    out << "client,label,pc0,pc1\n";
    if (ev.labels.size() >= 2 && ev.features.cols() >= 2) {
      const metrics::Projection proj = metrics::pca_project(ev.features, 2);
      for (std::size_t n = 0; n < ev.labels.size(); ++n) {
        out << ev.owners[n] << ',' << ev.labels[n] << ',' << metrics::format_value(proj.coordinates.at(n, 0)) << ','
            << metrics::format_value(proj.coordinates.at(n, 1)) << '\n';
      }
    }
  }

  {
    std::ofstream out = open("summary.csv");
    out << "key,value\n";
    out << "scheme," << protocol::to_string(cfg.scheme) << '\n';
    out << "rounds," << result.series.size() << '\n';
    out << "test_accuracy," << metrics::format_value(ev.mean_accuracy) << '\n';
    out << "test_separability," << metrics::format_value(ev.separability) << '\n';
    for (std::size_t k = 0; k < ev.client_accuracy.size(); ++k) {
      out << "test_accuracy_client_" << k << ',' << metrics::format_value(ev.client_accuracy[k]) << '\n';
    }
    if (!result.series.empty()) {
      out << "final_mean_loss," << metrics::format_value(result.series.back().mean_loss) << '\n';
    }
  }
}

std::size_t threads_from_env() {
  const char* v = std::getenv("FEDCL_THREADS");
  if (!v) return 1;
  try {
    const long n = std::stol(v);
    return n > 0 ? static_cast<std::size_t>(n) : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace fedcl
