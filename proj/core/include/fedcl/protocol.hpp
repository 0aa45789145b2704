#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedcl/centroids.hpp"
#include "fedcl/channel.hpp"
#include "fedcl/data.hpp"
#include "fedcl/metrics.hpp"
#include "fedcl/mlp.hpp"
#include "fedcl/models.hpp"

namespace fedcl::protocol {

/// fedcl: SCG centroids + regularised loss. fedproto: centroids are the mean
/// of client centroids. vanilla: fedcl with lambda forced to 0. fedavg:
/// local full-model training and parameter averaging.
enum class Scheme { fedcl, fedproto, fedavg, vanilla };

std::string_view to_string(Scheme s) noexcept;
Scheme parse_scheme(std::string_view name);

struct ClientState {
  std::size_t id = 0;
  data::Dataset shard;   // D_k, non-empty
  data::Dataset test;    // held-out samples of the owned classes; may be empty
  Mlp encoder;           // theta_k
  double lr = 1e-3;      // eta_k
};

struct ServerState {
  Mlp global_decoder;                  // phi
  std::vector<Mlp> client_decoders;    // phi_k after the last round's local steps
  std::optional<Mlp> global_encoder;   // fedavg only
  models::CentroidGenerator scg;
  CentroidSet centroids;               // F used by the next round
  double lr = 1e-3;                    // eta
  double scg_lr = 1e-3;
  double scg_clip = 1.0;               // max global gradient norm per SCG step; 0 disables
  double lambda = 1.0;
  std::size_t local_iters = 1;         // E
  std::size_t scg_iters = 1;           // E'
};

struct RoundSettings {
  Scheme scheme = Scheme::fedcl;
  std::size_t batch_size = 32;
  channel::ChannelConfig uplink;
  channel::ChannelConfig downlink;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Skip the SCG update entirely. Only used to check that lambda = 0
  /// decouples the SCG from the encoder/decoder trajectory.
  bool train_scg = true;
  /// Client visiting order for the parallel phase; empty means 0..K-1.
  std::vector<std::size_t> schedule;
};

/// Minibatch of min(batch, n) distinct row indices.
std::vector<std::size_t> sample_minibatch(std::size_t n, std::size_t batch, Rng& rng);

/// Per-class mean of received features; classes absent from the batch are
/// left unset.
CentroidSet local_centroid_aggregate(const Tensor& features, std::span<const std::size_t> labels,
                                     std::size_t num_classes, int owner = 0);

struct ContrastiveResult {
  double loss = 0.0;
  Tensor centroid_grad;  // dL_F/dF, [C x d]
};

/// sum_c sum_{k owning c} [ logsumexp_{n != c}(f_k^c . F^n) - f_k^c . F^c ].
/// Local centroids are constants.
ContrastiveResult contrastive_loss(std::span<const CentroidSet> local_sets, const CentroidSet& global);

struct ScgUpdate {
  double loss_before = 0.0;
  double loss_after = 0.0;
};

/// `steps` SGD steps on the generator network against contrastive_loss,
/// then refreshes `centroids` from the updated generator. The objective is
/// unbounded below in the centroid scale, so each step's gradient is
/// rescaled to global norm at most `clip` (0 disables clipping).
ScgUpdate scg_update(models::CentroidGenerator& scg, std::span<const CentroidSet> local_sets, std::size_t steps,
                     double lr, CentroidSet& centroids, double clip = 0.0);

struct RegularizedLoss {
  double loss = 0.0;
  double task_loss = 0.0;
  Tensor logit_grad;    // dL/dlogits, [B x C]
  Tensor feature_grad;  // dL/df_hat of the centroid term; empty when lambda = 0
};

/// (1/B) sum_i [ CE(r_i, y_i) + lambda ||f_hat_i - F^{y_i}||^2 ].
RegularizedLoss regularized_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& features,
                                 const CentroidSet& centroids, double lambda);

/// phi = sum_k (D_k / D) phi_k.
Mlp decoder_aggregate(std::span<const Mlp> decoders, std::span<const std::size_t> sizes);

/// Mean of the client centroids per class. Throws if some class has none.
CentroidSet baseline_fedproto_centroids(std::span<const CentroidSet> local_sets, std::size_t num_classes);

/// One communication round for fedcl / fedproto / vanilla. Client work runs
/// in parallel on disjoint random streams; all reductions are in client
/// order, so the result does not depend on scheduling.
metrics::RoundMetrics run_round(std::vector<ClientState>& clients, ServerState& server, const RoundSettings& settings,
                                std::size_t round);

/// Classic FedAvg round; requires identical encoder architectures.
metrics::RoundMetrics baseline_fedavg_round(std::vector<ClientState>& clients, ServerState& server,
                                            const RoundSettings& settings, std::size_t round);

struct Evaluation {
  std::vector<double> client_accuracy;  // NaN for clients without test data
  double mean_accuracy = 0.0;
  double separability = 0.0;
  Tensor features;                      // received test features, client order
  std::vector<std::size_t> labels;
  std::vector<std::size_t> owners;
};

/// Each client's test set through its encoder, the uplink, and the global
/// decoder.
Evaluation evaluate(const std::vector<ClientState>& clients, const ServerState& server, const RoundSettings& settings);

struct TrainingSetup {
  std::vector<ClientState> clients;
  ServerState server;
  RoundSettings settings;
  std::size_t rounds = 200;
};

struct TrainingResult {
  std::vector<metrics::RoundMetrics> series;
  Evaluation final_eval;
  std::vector<ClientState> clients;
  ServerState server;
};

TrainingResult run_training(TrainingSetup setup);

}  // namespace fedcl::protocol
