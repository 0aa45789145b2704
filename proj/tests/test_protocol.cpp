#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "fedcl/config.hpp"
#include "fedcl/error.hpp"
#include "fedcl/experiment.hpp"
#include "fedcl/grad_check.hpp"
#include "fedcl/protocol.hpp"
#include "reference_sgd.hpp"

using namespace fedcl;
using namespace fedcl::protocol;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.classes = 3;
  cfg.clients = 4;
  cfg.ways = 2;
  cfg.shots = 20;
  cfg.rounds = 4;
  cfg.batch = 8;
  cfg.input_dim = 4;
  cfg.feature_dim = 6;
  cfg.encoder_hidden = "8;5,5";
  cfg.decoder_hidden = {7};
  cfg.scg_hidden = 8;
  cfg.test_per_class = 10;
  cfg.lr = 0.05;
  cfg.client_lr = {0.05};
  cfg.snr_db = 5.0;
  cfg.seed = 3;
  return cfg;
}

CentroidSet set_from(std::size_t classes, std::size_t d, std::initializer_list<std::pair<std::size_t, std::vector<double>>> rows,
                     int owner = 0) {
  CentroidSet s(classes, d, owner);
  for (const auto& [c, v] : rows) s.set(c, v);
  return s;
}

bool same_parameters(const Mlp& a, const Mlp& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(*pa[i] == *pb[i])) return false;
  }
  return true;
}

Mlp scalar_net(double v) {
  return Mlp::from_layers({AffineLayer{Tensor::matrix(1, 1, {v}), Tensor::vector({v})}});
}

std::vector<metrics::RoundMetrics> run_rounds(TrainingSetup& s, std::size_t rounds) {
  std::vector<metrics::RoundMetrics> out;
  for (std::size_t t = 0; t < rounds; ++t) out.push_back(run_round(s.clients, s.server, s.settings, t));
  return out;
}

}  // namespace

TEST(Scheme, NamesRoundTrip) {
  for (Scheme s : {Scheme::fedcl, Scheme::fedproto, Scheme::fedavg, Scheme::vanilla}) {
    EXPECT_EQ(parse_scheme(to_string(s)), s);
  }
  EXPECT_THROW(parse_scheme("fedsgd"), ConfigError);
}

TEST(Minibatch, DistinctAndBounded) {
  Rng rng(1);
  auto idx = sample_minibatch(50, 10, rng);
  ASSERT_EQ(idx.size(), 10u);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(std::unique(idx.begin(), idx.end()), idx.end());
  EXPECT_LT(idx.back(), 50u);
  EXPECT_EQ(sample_minibatch(5, 10, rng).size(), 5u);
}

TEST(LocalCentroids, MeanOfOneAndTwo) {
  const Tensor f = Tensor::matrix(3, 2, {0, 0, 5, -1, 2, 2});
  const std::vector<std::size_t> y{1, 0, 1};
  const CentroidSet s = local_centroid_aggregate(f, y, 3);
  EXPECT_EQ(std::vector<double>(s[0].begin(), s[0].end()), (std::vector<double>{5, -1}));
  EXPECT_EQ(std::vector<double>(s[1].begin(), s[1].end()), (std::vector<double>{1, 1}));
  EXPECT_FALSE(s.has(2));
}

TEST(LocalCentroids, PermutationInvariant) {
  const Tensor f = Tensor::matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor g = Tensor::matrix(4, 2, {7, 8, 3, 4, 1, 2, 5, 6});
  const CentroidSet a = local_centroid_aggregate(f, std::vector<std::size_t>{0, 1, 0, 1}, 2);
  const CentroidSet b = local_centroid_aggregate(g, std::vector<std::size_t>{1, 1, 0, 0}, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.vectors[i], b.vectors[i], 1e-15);
}

TEST(Contrastive, OrthogonalGivesLogOfNegatives) {
  const std::size_t C = 3;
  const CentroidSet F = CentroidSet::complete(Tensor::matrix(3, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0}));
  const std::vector<CentroidSet> local{set_from(C, 4, {{0, {0, 0, 0, 2}}, {1, {0, 0, 0, 1}}, {2, {0, 0, 0, 3}}})};
  EXPECT_NEAR(contrastive_loss(local, F).loss, 3.0 * std::log(2.0), 1e-14);
}

TEST(Contrastive, TwoClassHandExample) {
  const CentroidSet F = CentroidSet::complete(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const std::vector<CentroidSet> local{set_from(2, 2, {{0, {1, 0}}})};
  EXPECT_DOUBLE_EQ(contrastive_loss(local, F).loss, -1.0);
}

TEST(Contrastive, DuplicatedClientDoublesLoss) {
  const CentroidSet F = CentroidSet::complete(Tensor::matrix(3, 2, {1, 0.5, -0.3, 1, 0.2, -1}));
  const CentroidSet a = set_from(3, 2, {{0, {0.4, 0.1}}, {2, {-1, 2}}});
  const std::vector<CentroidSet> one{a}, two{a, a};
  EXPECT_DOUBLE_EQ(contrastive_loss(two, F).loss, 2.0 * contrastive_loss(one, F).loss);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  Tensor Fv({4, 5});
  for (double& v : Fv.data()) v = n(rng);
  std::vector<CentroidSet> local;
  for (int k = 0; k < 3; ++k) {
    CentroidSet s(4, 5, k);
    for (std::size_t c = 0; c < 4; ++c) {
      if ((c + k) % 3 == 0) continue;
      std::vector<double> v(5);
      for (double& x : v) x = n(rng);
      s.set(c, v);
    }
    local.push_back(s);
  }
  CentroidSet F = CentroidSet::complete(Fv);
  const auto r = contrastive_loss(local, F);
  Tensor* p = &F.vectors;
  const double err = max_relative_error(std::span<Tensor* const>(&p, 1), GradBundle{{r.centroid_grad}},
                                        [&] { return contrastive_loss(local, F).loss; }, 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(ScgUpdate, ZeroRateLeavesCentroids) {
  models::CentroidGenerator scg(3, 4, 6, 1);
  CentroidSet F = models::scg_forward(scg);
  const Tensor before = F.vectors;
  const std::vector<CentroidSet> local{set_from(3, 4, {{0, {1, 0, 0, 0}}, {1, {0, 1, 0, 0}}})};
  scg_update(scg, local, 3, 0.0, F);
  EXPECT_EQ(F.vectors, before);
}

TEST(ScgUpdate, SmallStepDecreasesLoss) {
  models::CentroidGenerator scg(2, 3, 5, 4);
  CentroidSet F = models::scg_forward(scg);
  const std::vector<CentroidSet> local{set_from(2, 3, {{0, {1, 0.5, 0}}, {1, {-0.5, 1, 0.2}}})};
  const auto r = scg_update(scg, local, 1, 1e-3, F);
  EXPECT_LT(r.loss_after, r.loss_before);
}

TEST(ScgUpdate, ClipBoundsStep) {
  models::CentroidGenerator a(2, 3, 5, 4), b = a;
  CentroidSet Fa = models::scg_forward(a), Fb = Fa;
  const std::vector<CentroidSet> local{set_from(2, 3, {{0, {50, 20, 0}}, {1, {-30, 40, 10}}})};
  scg_update(a, local, 1, 0.1, Fa, 0.0);
  scg_update(b, local, 1, 0.1, Fb, 1e-3);
  double moved_a = 0, moved_b = 0;
  const auto pa = a.network().parameters(), pb = b.network().parameters();
  const models::CentroidGenerator orig(2, 3, 5, 4);
  const auto po = orig.network().parameters();
  for (std::size_t i = 0; i < po.size(); ++i) {
    for (std::size_t j = 0; j < po[i]->size(); ++j) {
      moved_a += std::pow((*pa[i])[j] - (*po[i])[j], 2);
      moved_b += std::pow((*pb[i])[j] - (*po[i])[j], 2);
    }
  }
  EXPECT_NEAR(std::sqrt(moved_b), 0.1 * 1e-3, 1e-12);
  EXPECT_GT(std::sqrt(moved_a), std::sqrt(moved_b));
}

TEST(RegularizedLoss, LambdaZeroIsTaskLoss) {
  const Tensor logits = Tensor::matrix(2, 2, {1, 0, 0.5, 2});
  const Tensor f = Tensor::matrix(2, 1, {3, 4});
  const auto r = regularized_loss(logits, std::vector<std::size_t>{0, 1}, f, CentroidSet{}, 0.0);
  EXPECT_EQ(r.loss, r.task_loss);
  EXPECT_TRUE(r.feature_grad.empty());
}

TEST(RegularizedLoss, HandArithmetic) {
  // CE = 0.5 exactly when the competing logit sits at -ln(e^0.5 - 1) below.
  const double a = -std::log(std::exp(0.5) - 1.0);
  const Tensor logits = Tensor::matrix(1, 2, {a, 0});
  const Tensor f = Tensor::matrix(1, 2, {2, 3});
  const CentroidSet F = CentroidSet::complete(Tensor::matrix(1, 2, {1, 2}));
  const auto r = regularized_loss(logits, std::vector<std::size_t>{0}, f, F, 0.1);
  EXPECT_NEAR(r.task_loss, 0.5, 1e-15);
  EXPECT_NEAR(r.loss, 0.7, 1e-15);
}

TEST(RegularizedLoss, ZeroAtCentroidsAndNegativeLambda) {
  const Tensor logits = Tensor::matrix(2, 2, {0, 0, 0, 0});
  const Tensor f = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const CentroidSet F = CentroidSet::complete(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const std::vector<std::size_t> y{0, 1};
  const auto r = regularized_loss(logits, y, f, F, 2.0);
  EXPECT_EQ(r.loss, r.task_loss);
  EXPECT_THROW(regularized_loss(logits, y, f, F, -1.0), ConfigError);
}

TEST(DecoderAggregate, WeightedMean) {
  const std::vector<Mlp> nets{scalar_net(0.0), scalar_net(4.0)};
  const std::vector<std::size_t> sizes{1, 3};
  const Mlp avg = decoder_aggregate(nets, sizes);
  EXPECT_EQ(avg.layers()[0].weight[0], 3.0);
  EXPECT_EQ(avg.layers()[0].bias[0], 3.0);
}

TEST(DecoderAggregate, SingleAndIdentical) {
  const Mlp d(3, std::vector<std::size_t>{4}, 2, 8);
  const std::vector<Mlp> one{d};
  const std::vector<std::size_t> s1{5};
  EXPECT_TRUE(same_parameters(decoder_aggregate(one, s1), d));
  const std::vector<Mlp> three{d, d, d};
  const std::vector<std::size_t> s3{2, 2, 2};
  EXPECT_TRUE(same_parameters(decoder_aggregate(three, s3), d));
}

TEST(FedProto, MeanAndPermutation) {
  const CentroidSet a = set_from(2, 2, {{0, {0, 0}}, {1, {1, 1}}}, 0);
  const CentroidSet b = set_from(2, 2, {{0, {2, 0}}}, 1);
  const std::vector<CentroidSet> ab{a, b}, ba{b, a}, just_a{a};
  const CentroidSet g = baseline_fedproto_centroids(ab, 2);
  EXPECT_EQ(std::vector<double>(g[0].begin(), g[0].end()), (std::vector<double>{1, 0}));
  EXPECT_EQ(std::vector<double>(g[1].begin(), g[1].end()), (std::vector<double>{1, 1}));
  EXPECT_EQ(baseline_fedproto_centroids(ba, 2).vectors, g.vectors);
  EXPECT_EQ(baseline_fedproto_centroids(just_a, 2).vectors, a.vectors);
  const std::vector<CentroidSet> only_b{b};
  EXPECT_THROW(baseline_fedproto_centroids(only_b, 2), std::invalid_argument);
}

TEST(Round, DeterministicReplay) {
  const auto cfg = small_config();
  TrainingSetup a = build_setup(cfg), b = build_setup(cfg);
  EXPECT_EQ(run_rounds(a, 3), run_rounds(b, 3));
}

TEST(Round, IndependentOfScheduleAndThreads) {
  const auto cfg = small_config();
  TrainingSetup a = build_setup(cfg), b = build_setup(cfg);
  b.settings.schedule = {2, 0, 3, 1};
  b.settings.threads = 3;
  EXPECT_EQ(run_rounds(a, 3), run_rounds(b, 3));
  EXPECT_TRUE(same_parameters(a.server.global_decoder, b.server.global_decoder));
  EXPECT_EQ(a.server.centroids.vectors, b.server.centroids.vectors);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(same_parameters(a.clients[k].encoder, b.clients[k].encoder));
}

TEST(Round, BadScheduleRejected) {
  TrainingSetup a = build_setup(small_config());
  a.settings.schedule = {0, 0, 1, 2};
  EXPECT_THROW(run_round(a.clients, a.server, a.settings, 0), ConfigError);
}

TEST(Round, VanillaEqualsLambdaZero) {
  auto cfg = small_config();
  cfg.scheme = Scheme::vanilla;
  TrainingSetup v = build_setup(cfg);
  cfg.scheme = Scheme::fedcl;
  cfg.lambda = 0.0;
  TrainingSetup z = build_setup(cfg);
  EXPECT_EQ(run_rounds(v, 3), run_rounds(z, 3));
}

TEST(Round, ScgIsolatedWhenLambdaZero) {
  auto cfg = small_config();
  cfg.lambda = 0.0;
  TrainingSetup with = build_setup(cfg), without = build_setup(cfg);
  without.settings.train_scg = false;
  const auto mw = run_rounds(with, 3), mo = run_rounds(without, 3);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(mw[t].client_loss, mo[t].client_loss);
  EXPECT_TRUE(same_parameters(with.server.global_decoder, without.server.global_decoder));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(same_parameters(with.clients[k].encoder, without.clients[k].encoder));
  EXPECT_NE(with.server.centroids.vectors, without.server.centroids.vectors);
}

TEST(Round, FedProtoKeepsUnsampledClasses) {
  auto cfg = small_config();
  cfg.scheme = Scheme::fedproto;
  TrainingSetup s = build_setup(cfg);
  const Tensor before = s.server.centroids.vectors;
  run_round(s.clients, s.server, s.settings, 0);
  EXPECT_NE(s.server.centroids.vectors, before);
  EXPECT_TRUE(s.server.centroids.is_complete());
}

TEST(Round, ZeroLearningRatesFreezeModels) {
  auto cfg = small_config();
  cfg.lr = 0.0;
  cfg.client_lr = {0.0};
  cfg.scg_lr = 0.0;
  TrainingSetup s = build_setup(cfg);
  const TrainingSetup init = s;
  run_rounds(s, 2);
  EXPECT_TRUE(same_parameters(s.server.global_decoder, init.server.global_decoder));
  EXPECT_EQ(s.server.centroids.vectors, init.server.centroids.vectors);
}

TEST(FedAvg, ZeroRateAggregationIsIdentity) {
  auto cfg = small_config();
  cfg.scheme = Scheme::fedavg;
  cfg.encoder_hidden = "8";
  cfg.lr = 0.0;
  cfg.client_lr = {0.0};
  TrainingSetup s = build_setup(cfg);
  const Mlp enc = *s.server.global_encoder, dec = s.server.global_decoder;
  run_rounds(s, 2);
  EXPECT_TRUE(same_parameters(*s.server.global_encoder, enc));
  EXPECT_TRUE(same_parameters(s.server.global_decoder, dec));
}

TEST(FedAvg, SingleClientEqualsLocalTraining) {
  auto cfg = small_config();
  cfg.clients = 1;
  cfg.ways = 3;
  cfg.encoder_hidden = "8";
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.scheme = Scheme::fedavg;
  TrainingSetup f = build_setup(cfg);
  cfg.scheme = Scheme::vanilla;
  TrainingSetup v = build_setup(cfg);
  const auto mf = run_rounds(f, 3), mv = run_rounds(v, 3);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(mf[t].client_loss, mv[t].client_loss);
  EXPECT_TRUE(same_parameters(*f.server.global_encoder, v.clients[0].encoder));
  EXPECT_TRUE(same_parameters(f.server.global_decoder, v.server.global_decoder));
}

TEST(FedAvg, HeterogeneousEncodersRejected) {
  auto cfg = small_config();
  cfg.scheme = Scheme::fedavg;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Round, SingleClientNoiselessMatchesCentralizedReference) {
  auto cfg = small_config();
  cfg.clients = 1;
  cfg.ways = 3;
  cfg.lambda = 0.0;
  cfg.encoder_hidden = "8,5";
  cfg.snr_db = std::numeric_limits<double>::infinity();
  TrainingSetup s = build_setup(cfg);

  reference::Net net{reference::copy_layers(s.clients[0].encoder), reference::copy_layers(s.server.global_decoder)};
  const auto& shard = s.clients[0].shard;
  for (std::size_t t = 0; t < 10; ++t) {
    Rng rng = make_stream(s.settings.seed, StreamPurpose::minibatch, 0, t, 0);
    const auto idx = sample_minibatch(shard.size(), s.settings.batch_size, rng);
    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ys;
    for (std::size_t i : idx) {
      xs.emplace_back(shard.x.row(i).begin(), shard.x.row(i).end());
      ys.push_back(shard.y[i]);
    }
    const double expected = reference::sgd_step(net, xs, ys, cfg.client_lr[0], cfg.lr);
    const auto m = run_round(s.clients, s.server, s.settings, t);
    EXPECT_NEAR(m.client_loss[0], expected, 1e-9) << "round " << t;
  }
}

TEST(Round, NonFiniteLossNamesRoundAndClient) {
  TrainingSetup s = build_setup(small_config());
  for (Tensor* p : s.server.global_decoder.parameters()) {
    for (double& v : p->data()) v = std::nan("");
  }
  try {
    run_round(s.clients, s.server, s.settings, 0);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("round 0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("client"), std::string::npos);
  }
}

TEST(Training, ZeroRoundsReturnsInitialModels) {
  TrainingSetup s = build_setup(small_config());
  s.rounds = 0;
  const Mlp dec = s.server.global_decoder;
  const auto r = run_training(s);
  EXPECT_TRUE(r.series.empty());
  EXPECT_TRUE(same_parameters(r.server.global_decoder, dec));
}

TEST(Training, SmoothedLossFallsOnThreeClassBlobs) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = small_config();
    cfg.rounds = 200;
    cfg.lr = 1e-3;
    cfg.client_lr = {1e-3};
    cfg.feature_dim = 16;
    cfg.seed = seed;
    const auto r = run_experiment(cfg);
    double first = 0, last = 0;
    for (std::size_t t = 0; t < 10; ++t) {
      first += r.series[t].mean_loss;
      last += r.series[190 + t].mean_loss;
    }
    EXPECT_LT(last, first) << "seed " << seed;
  }
}
