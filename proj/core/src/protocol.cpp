#include "fedcl/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "fedcl/error.hpp"

namespace fedcl::protocol {

std::string_view to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::fedcl: return "fedcl";
    case Scheme::fedproto: return "fedproto";
    case Scheme::fedavg: return "fedavg";
    case Scheme::vanilla: return "vanilla";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::fedcl, Scheme::fedproto, Scheme::fedavg, Scheme::vanilla}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown scheme '" + std::string(name) + "' (expected fedcl, fedproto, fedavg or vanilla)");
}

namespace {

/// Runs body(slot) for every slot on up to `threads` workers. The first
/// exception is rethrown on the calling thread after all workers finish.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::size_t> visiting_order(const RoundSettings& settings, std::size_t clients) {
  if (settings.schedule.empty()) {
    std::vector<std::size_t> order(clients);
    std::iota(order.begin(), order.end(), 0);
    return order;
  }
  std::vector<std::size_t> sorted = settings.schedule;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i || sorted.size() != clients) throw ConfigError("round schedule must be a permutation of clients");
  }
  return settings.schedule;
}

/// dst = src_0 + sum_k (D_k / D) (src_k - src_0): the dataset-weighted mean,
/// anchored on the first network so identical inputs come back bit-exact.
void weighted_sum_into(std::span<Tensor* const> dst, std::span<const std::vector<const Tensor*>> srcs,
                       std::span<const std::size_t> sizes) {
  double total = 0.0;
  for (std::size_t s : sizes) total += static_cast<double>(s);
  if (!(total > 0.0)) throw std::invalid_argument("aggregate: total dataset size must be positive");
  for (std::size_t p = 0; p < dst.size(); ++p) {
    auto out = dst[p]->data();
    const auto anchor = srcs[0][p]->data();
    std::copy(anchor.begin(), anchor.end(), out.begin());
    for (std::size_t k = 1; k < srcs.size(); ++k) {
      const double w = static_cast<double>(sizes[k]) / total;
      const auto in = srcs[k][p]->data();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (in[i] - anchor[i]);
    }
  }
}

Mlp average_networks(std::span<const Mlp> nets, std::span<const std::size_t> sizes, const char* what) {
  if (nets.empty()) throw std::invalid_argument(std::string(what) + ": nothing to aggregate");
  if (nets.size() != sizes.size()) throw std::invalid_argument(std::string(what) + ": one size per network required");
  std::vector<std::vector<const Tensor*>> params;
  for (const auto& n : nets) params.push_back(n.parameters());
  for (std::size_t k = 1; k < nets.size(); ++k) {
    if (params[k].size() != params[0].size()) throw DimensionError(std::string(what) + ": architectures differ");
    for (std::size_t p = 0; p < params[0].size(); ++p) {
      require_same_shape(*params[k][p], *params[0][p], what);
    }
  }
  Mlp out = nets[0];
  out.clear_cache();
  auto dst = out.parameters();
  weighted_sum_into(dst, params, sizes);
  return out;
}

double norm_of(const GradBundle& a, const GradBundle& b) { return std::sqrt(a.squared_norm() + b.squared_norm()); }

/// Results of one client's local phase, merged on the server in client order.
struct ClientOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
  double grad_norm = 0.0;
  Tensor features;  // received features of every local iteration, stacked
  std::vector<std::size_t> labels;
};

void append_rows(Tensor& dst, const Tensor& rows) {
  if (dst.empty()) {
    dst = rows;
    return;
  }
  auto& storage = dst.storage();
  storage.insert(storage.end(), rows.data().begin(), rows.data().end());
  dst = Tensor({dst.rows() + rows.rows(), dst.cols()}, std::move(storage));
}

struct LocalBatch {
  Tensor x;
  std::vector<std::size_t> y;
};

LocalBatch draw_batch(const ClientState& client, const RoundSettings& settings, std::size_t round, std::size_t iter) {
  Rng rng = make_stream(settings.seed, StreamPurpose::minibatch, client.id, round, iter);
  const auto idx = sample_minibatch(client.shard.size(), settings.batch_size, rng);
  data::Dataset b = client.shard.subset(idx);
  return {std::move(b.x), std::move(b.y)};
}

void check_finite(double loss, std::size_t round, std::size_t client) {
  if (!std::isfinite(loss)) {
    throw NumericError("round " + std::to_string(round) + ", client " + std::to_string(client) +
                       ": loss is not finite (" + std::to_string(loss) + "); aborting round");
  }
}

ClientOutcome split_client_phase(ClientState& client, Mlp& decoder, const ServerState& server,
                                 const RoundSettings& settings, double lambda, std::size_t round) {
  ClientOutcome out;
  const std::size_t iters = server.local_iters;
  for (std::size_t e = 0; e < iters; ++e) {
    LocalBatch batch = draw_batch(client, settings, round, e);
    const Tensor features = models::encoder_forward(batch.x, client.encoder);
    Rng up = make_stream(settings.uplink.noise_seed, StreamPurpose::uplink, client.id, round, e);
    const Tensor received = channel::transmit_rows(features, settings.uplink, up);
    const Tensor logits = models::decoder_forward(received, decoder);

    const RegularizedLoss rl = regularized_loss(logits, batch.y, received, server.centroids, lambda);
    check_finite(rl.loss, round, client.id);

    Rng down = make_stream(settings.downlink.noise_seed, StreamPurpose::downlink, client.id, round, e);
    const models::SplitGradients g =
        models::split_backward(rl.logit_grad, rl.feature_grad, decoder, client.encoder, settings.downlink, down);
    auto dec_params = decoder.parameters();
    sgd_step(dec_params, g.decoder, server.lr);
    auto enc_params = client.encoder.parameters();
    sgd_step(enc_params, g.encoder, client.lr);

    out.loss += rl.loss;
    out.accuracy += metrics::accuracy(logits, batch.y);
    out.grad_norm += norm_of(g.decoder, g.encoder);
    append_rows(out.features, received);
    out.labels.insert(out.labels.end(), batch.y.begin(), batch.y.end());
  }
  const double n = static_cast<double>(iters);
  out.loss /= n;
  out.accuracy /= n;
  out.grad_norm /= n;
  return out;
}

ClientOutcome fedavg_client_phase(ClientState& client, Mlp& decoder, const ServerState& server,
                                  const RoundSettings& settings, std::size_t round) {
  ClientOutcome out;
  const std::size_t iters = server.local_iters;
  for (std::size_t e = 0; e < iters; ++e) {
    LocalBatch batch = draw_batch(client, settings, round, e);
    const Tensor features = client.encoder.forward(batch.x);
    Rng up = make_stream(settings.uplink.noise_seed, StreamPurpose::uplink, client.id, round, e);
    const Tensor received = channel::transmit_rows(features, settings.uplink, up);
    const Tensor logits = decoder.forward(received);
    const CentroidSet none;
    const RegularizedLoss rl = regularized_loss(logits, batch.y, received, none, 0.0);
    check_finite(rl.loss, round, client.id);

    Mlp::Backprop dec = decoder.backward(rl.logit_grad);
    GradBundle enc = client.encoder.backward(dec.input).params;
    auto dec_params = decoder.parameters();
    sgd_step(dec_params, dec.params, server.lr);
    auto enc_params = client.encoder.parameters();
    sgd_step(enc_params, enc, client.lr);

    out.loss += rl.loss;
    out.accuracy += metrics::accuracy(logits, batch.y);
    out.grad_norm += norm_of(dec.params, enc);
    append_rows(out.features, received);
    out.labels.insert(out.labels.end(), batch.y.begin(), batch.y.end());
  }
  const double n = static_cast<double>(iters);
  out.loss /= n;
  out.accuracy /= n;
  out.grad_norm /= n;
  return out;
}

metrics::RoundMetrics collect(const std::vector<ClientOutcome>& outcomes, std::size_t round, Tensor& pooled,
                              std::vector<std::size_t>& pooled_labels) {
  metrics::RoundMetrics m;
  m.round = round;
  for (const auto& o : outcomes) {
    m.client_loss.push_back(o.loss);
    m.client_accuracy.push_back(o.accuracy);
    m.client_grad_norm.push_back(o.grad_norm);
    append_rows(pooled, o.features);
    pooled_labels.insert(pooled_labels.end(), o.labels.begin(), o.labels.end());
  }
  m.summarize();
  return m;
}

double pooled_separability(const Tensor& features, const std::vector<std::size_t>& labels) {
  std::vector<bool> seen;
  std::size_t distinct = 0;
  for (std::size_t y : labels) {
    if (y >= seen.size()) seen.resize(y + 1, false);
    if (!seen[y]) ++distinct, seen[y] = true;
  }
  return distinct >= 2 ? metrics::separability(features, labels) : 0.0;
}

std::vector<std::size_t> shard_sizes(const std::vector<ClientState>& clients) {
  std::vector<std::size_t> sizes;
  for (const auto& c : clients) sizes.push_back(c.shard.size());
  return sizes;
}

CentroidSet mean_of_local_centroids(std::span<const CentroidSet> local_sets, std::size_t num_classes) {
  if (local_sets.empty()) throw std::invalid_argument("fedproto centroids: no local centroid sets");
  const std::size_t d = local_sets.front().dim();
  CentroidSet out(num_classes, d);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t owners = 0;
    auto dst = out.vectors.row(c);
    for (const auto& s : local_sets) {
      if (s.num_classes() != num_classes || s.dim() != d) throw DimensionError("fedproto centroids: shape mismatch");
      if (!s.has(c)) continue;
      const auto src = s[c];
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++owners;
    }
    if (owners == 0) continue;
    for (double& v : dst) v /= static_cast<double>(owners);
    out.present[c] = true;
  }
  return out;
}

}  // namespace

std::vector<std::size_t> sample_minibatch(std::size_t n, std::size_t batch, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_minibatch: empty shard");
  if (batch == 0) throw std::invalid_argument("sample_minibatch: batch size must be positive");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (batch >= n) return idx;
  // Partial Fisher-Yates: the first `batch` slots end up a uniform sample.
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch);
  return idx;
}

CentroidSet local_centroid_aggregate(const Tensor& features, std::span<const std::size_t> labels,
                                     std::size_t num_classes, int owner) {
  if (labels.empty()) throw std::invalid_argument("local_centroid_aggregate: empty batch");
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("local_centroid_aggregate: features " + features.shape_string() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = features.cols();
  CentroidSet set(num_classes, d, owner);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= num_classes) throw std::invalid_argument("local_centroid_aggregate: label out of range");
    auto dst = set.vectors.row(labels[n]);
    const auto src = features.row(n);
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    ++counts[labels[n]];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : set.vectors.row(c)) v /= static_cast<double>(counts[c]);
    set.present[c] = true;
  }
  return set;
}

ContrastiveResult contrastive_loss(std::span<const CentroidSet> local_sets, const CentroidSet& global) {
  const std::size_t C = global.num_classes();
  if (C < 2) throw std::invalid_argument("contrastive_loss: need at least two classes for negatives");
  if (!global.is_complete()) throw std::invalid_argument("contrastive_loss: global centroid set is incomplete");
  const std::size_t d = global.dim();
  ContrastiveResult out{0.0, Tensor({C, d})};
  std::vector<double> scores(C);
  for (std::size_t c = 0; c < C; ++c) {
    for (const CentroidSet& local : local_sets) {
      if (local.num_classes() != C || local.dim() != d) {
        throw DimensionError("contrastive_loss: local centroid set shape differs from global");
      }
      if (!local.has(c)) continue;
      const auto f = local[c];
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t n = 0; n < C; ++n) {
        scores[n] = dot(f, global[n]);
        if (n != c) peak = std::max(peak, scores[n]);
      }
      double total = 0.0;
      for (std::size_t n = 0; n < C; ++n) {
        if (n != c) total += std::exp(scores[n] - peak);
      }
      out.loss += peak + std::log(total) - scores[c];
      for (std::size_t n = 0; n < C; ++n) {
        const double w = n == c ? -1.0 : std::exp(scores[n] - peak) / total;
        auto g = out.centroid_grad.row(n);
        for (std::size_t j = 0; j < d; ++j) g[j] += w * f[j];
      }
    }
  }
  return out;
}

ScgUpdate scg_update(models::CentroidGenerator& scg, std::span<const CentroidSet> local_sets, std::size_t steps,
                     double lr, CentroidSet& centroids, double clip) {
  bool any = false;
  for (const auto& s : local_sets) any = any || s.count() > 0;
  if (!any) throw std::invalid_argument("scg_update: no local centroids to contrast against");
  ScgUpdate out;
  auto params = scg.network().parameters();
  for (std::size_t step = 0; step < steps; ++step) {
    const CentroidSet current = CentroidSet::complete(scg.forward());
    const ContrastiveResult cr = contrastive_loss(local_sets, current);
    if (step == 0) out.loss_before = cr.loss;
    GradBundle g = scg.backward(cr.centroid_grad);
    const double norm = std::sqrt(g.squared_norm());
    if (clip > 0.0 && norm > clip) g.scale(clip / norm);
    sgd_step(params, g, lr);
  }
  centroids = models::scg_forward(scg);
  out.loss_after = contrastive_loss(local_sets, centroids).loss;
  if (steps == 0) out.loss_before = out.loss_after;
  return out;
}

RegularizedLoss regularized_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& features,
                                 const CentroidSet& centroids, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("regularized_loss: lambda must be >= 0");
  if (logits.rank() != 2 || logits.rows() != labels.size() || features.rank() != 2 ||
      features.rows() != labels.size()) {
    throw DimensionError("regularized_loss: logits " + logits.shape_string() + ", features " +
                         features.shape_string() + " and " + std::to_string(labels.size()) + " labels disagree");
  }
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  BatchLoss ce = softmax_cross_entropy(logits, labels);
  RegularizedLoss out;
  for (double l : ce.losses) out.task_loss += l;
  out.task_loss *= inv_b;
  out.loss = out.task_loss;
  for (double& g : ce.grad.data()) g *= inv_b;
  out.logit_grad = std::move(ce.grad);
  if (lambda == 0.0) return out;

  if (centroids.dim() != features.cols()) throw DimensionError("regularized_loss: centroid dim differs from features");
  out.feature_grad = Tensor::zeros_like(features);
  double penalty = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (!centroids.has(labels[n])) throw std::invalid_argument("regularized_loss: no centroid for a label class");
    const auto f = features.row(n);
    const auto target = centroids[labels[n]];
    auto g = out.feature_grad.row(n);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double diff = f[j] - target[j];
      penalty += diff * diff;
      g[j] = 2.0 * lambda * diff * inv_b;
    }
  }
  out.loss += lambda * penalty * inv_b;
  return out;
}

Mlp decoder_aggregate(std::span<const Mlp> decoders, std::span<const std::size_t> sizes) {
  return average_networks(decoders, sizes, "decoder_aggregate");
}

CentroidSet baseline_fedproto_centroids(std::span<const CentroidSet> local_sets, std::size_t num_classes) {
  CentroidSet out = mean_of_local_centroids(local_sets, num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!out.has(c)) {
      throw std::invalid_argument("baseline_fedproto_centroids: class " + std::to_string(c) + " is owned by no client");
    }
  }
  return out;
}

metrics::RoundMetrics run_round(std::vector<ClientState>& clients, ServerState& server, const RoundSettings& settings,
                                std::size_t round) {
  if (settings.scheme == Scheme::fedavg) return baseline_fedavg_round(clients, server, settings, round);
  if (clients.empty()) throw std::invalid_argument("run_round: no clients");
  const double lambda = settings.scheme == Scheme::vanilla ? 0.0 : server.lambda;
  const std::size_t K = clients.size();
  const std::size_t C = server.centroids.num_classes();

  server.client_decoders.assign(K, server.global_decoder);
  std::vector<ClientOutcome> outcomes(K);
  const auto order = visiting_order(settings, K);
  parallel_for(K, settings.threads, [&](std::size_t slot) {
    const std::size_t k = order[slot];
    outcomes[k] = split_client_phase(clients[k], server.client_decoders[k], server, settings, lambda, round);
  });

  Tensor pooled;
  std::vector<std::size_t> pooled_labels;
  metrics::RoundMetrics m = collect(outcomes, round, pooled, pooled_labels);

  std::vector<CentroidSet> local_sets;
  local_sets.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    local_sets.push_back(local_centroid_aggregate(outcomes[k].features, outcomes[k].labels, C, static_cast<int>(k)));
  }

  if (settings.scheme == Scheme::fedproto) {
    // Classes nobody sampled this round keep last round's centroid.
    const CentroidSet means = mean_of_local_centroids(local_sets, C);
    for (std::size_t c = 0; c < C; ++c) {
      if (means.has(c)) server.centroids.set(c, means[c]);
    }
    m.contrastive_loss = contrastive_loss(local_sets, server.centroids).loss;
  } else if (settings.train_scg) {
    m.contrastive_loss = scg_update(server.scg, local_sets, server.scg_iters, server.scg_lr, server.centroids,
                                  server.scg_clip)
                             .loss_before;
  }

  server.global_decoder = decoder_aggregate(server.client_decoders, shard_sizes(clients));
  m.separability = pooled_separability(pooled, pooled_labels);
  return m;
}

metrics::RoundMetrics baseline_fedavg_round(std::vector<ClientState>& clients, ServerState& server,
                                            const RoundSettings& settings, std::size_t round) {
  if (clients.empty()) throw std::invalid_argument("baseline_fedavg_round: no clients");
  if (!server.global_encoder) throw ConfigError("fedavg requires a shared initial encoder");
  const std::size_t K = clients.size();
  for (const auto& c : clients) {
    const auto a = c.encoder.parameters();
    const auto b = server.global_encoder->parameters();
    bool same = a.size() == b.size();
    for (std::size_t p = 0; same && p < a.size(); ++p) same = a[p]->shape() == b[p]->shape();
    if (!same) throw ConfigError("fedavg requires homogeneous encoder architectures; client " + std::to_string(c.id) + " differs");
  }

  server.client_decoders.assign(K, server.global_decoder);
  for (auto& c : clients) c.encoder = *server.global_encoder;
  std::vector<ClientOutcome> outcomes(K);
  const auto order = visiting_order(settings, K);
  parallel_for(K, settings.threads, [&](std::size_t slot) {
    const std::size_t k = order[slot];
    outcomes[k] = fedavg_client_phase(clients[k], server.client_decoders[k], server, settings, round);
  });

  Tensor pooled;
  std::vector<std::size_t> pooled_labels;
  metrics::RoundMetrics m = collect(outcomes, round, pooled, pooled_labels);

  const auto sizes = shard_sizes(clients);
  std::vector<Mlp> encoders;
  for (const auto& c : clients) encoders.push_back(c.encoder);
  server.global_encoder = average_networks(encoders, sizes, "fedavg encoder aggregate");
  server.global_decoder = decoder_aggregate(server.client_decoders, sizes);
  for (auto& c : clients) c.encoder = *server.global_encoder;
  m.separability = pooled_separability(pooled, pooled_labels);
  return m;
}

Evaluation evaluate(const std::vector<ClientState>& clients, const ServerState& server, const RoundSettings& settings) {
  Evaluation ev;
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& c : clients) {
    if (c.test.size() == 0) {
      ev.client_accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const Tensor features = c.encoder.predict(c.test.x);
    Rng up = make_stream(settings.uplink.noise_seed, StreamPurpose::evaluation, c.id);
    const Tensor received = channel::transmit_rows(features, settings.uplink, up);
    const Tensor logits = server.global_decoder.predict(received);
    const double acc = metrics::accuracy(logits, c.test.y);
    ev.client_accuracy.push_back(acc);
    sum += acc;
    ++counted;
    append_rows(ev.features, received);
    ev.labels.insert(ev.labels.end(), c.test.y.begin(), c.test.y.end());
    ev.owners.insert(ev.owners.end(), c.test.size(), c.id);
  }
  ev.mean_accuracy = counted ? sum / static_cast<double>(counted) : 0.0;
  ev.separability = ev.labels.empty() ? 0.0 : pooled_separability(ev.features, ev.labels);
  return ev;
}

TrainingResult run_training(TrainingSetup setup) {
  TrainingResult result;
  result.series.reserve(setup.rounds);
  for (std::size_t t = 0; t < setup.rounds; ++t) {
    result.series.push_back(run_round(setup.clients, setup.server, setup.settings, t));
  }
  result.final_eval = evaluate(setup.clients, setup.server, setup.settings);
  result.clients = std::move(setup.clients);
  result.server = std::move(setup.server);
  return result;
}

}  // namespace fedcl::protocol
