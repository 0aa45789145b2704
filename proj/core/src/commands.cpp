#include "fedcl/commands.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <atomic>
#include <functional>

#include "fedcl/error.hpp"
#include "fedcl/experiment.hpp"
#include "fedcl/grad_check.hpp"
#include "fedcl/metrics.hpp"
#include "fedcl/models.hpp"
#include "fedcl/protocol.hpp"

namespace fedcl {

int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err, std::size_t threads) {
  try {
    const protocol::TrainingResult result = run_experiment(cfg, threads);
    write_outputs(cfg, result, cfg.out);
    out << "scheme=" << protocol::to_string(cfg.scheme) << " rounds=" << result.series.size()
        << " test_accuracy=" << metrics::format_value(result.final_eval.mean_accuracy)
        << " separability=" << metrics::format_value(result.final_eval.separability) << " out=" << cfg.out << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "train failed: " << e.what() << '\n';
    return 1;
  }
}

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> unit(0.0, scale);
  for (double& v : t.data()) v = unit(rng);
  return t;
}

void maybe_corrupt(GradBundle& g, const GradcheckOptions& opts) {
  if (!opts.corrupt_backward) return;
  for (auto& t : g.tensors) {
    for (double& v : t.data()) v = v * 1.5 + 1e-3;
  }
}

std::size_t count(std::span<Tensor* const> params) {
  std::size_t n = 0;
  for (const Tensor* p : params) n += p->size();
  return n;
}

GradcheckEntry finish(std::string name, std::span<Tensor* const> params, GradBundle analytic,
                      const std::function<double()>& loss, const GradcheckOptions& opts) {
  maybe_corrupt(analytic, opts);
  GradcheckEntry e;
  e.name = std::move(name);
  e.parameters = count(params);
  e.max_rel_error = max_relative_error(params, analytic, loss, opts.eps);
  e.pass = e.max_rel_error < opts.tolerance;
  return e;
}

std::string describe(const std::vector<std::size_t>& hidden) {
  std::string s = "[";
  for (std::size_t i = 0; i < hidden.size(); ++i) s += (i ? "," : "") + std::to_string(hidden[i]);
  return s + "]";
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck_suite(const GradcheckOptions& opts) {
  std::vector<GradcheckEntry> report;
  Rng rng(opts.seed);
  constexpr std::size_t kBatch = 5, kIn = 6, kFeat = 8, kClasses = 4;

  {  // affine: loss = <proj, W x + b>, input gradient included as a parameter
    std::mt19937_64 init(rng());
    AffineLayer layer = AffineLayer::glorot(kIn, kFeat, init);
    layer.bias = random_tensor({kFeat}, rng);
    Tensor x = random_tensor({kBatch, kIn}, rng);
    const Tensor proj = random_tensor({kBatch, kFeat}, rng);
    AffineGrads g = affine_backward(x, layer, proj);
    std::vector<Tensor*> params{&layer.weight, &layer.bias, &x};
    auto loss = [&] { return dot(affine_forward(x, layer).data(), proj.data()); };
    report.push_back(finish("affine", params, GradBundle{{g.weight, g.bias, g.input}}, loss, opts));
  }
  {  // relu, checked through its input
    Tensor x = random_tensor({kBatch, kFeat}, rng);
    const Tensor proj = random_tensor({kBatch, kFeat}, rng);
    std::vector<Tensor*> params{&x};
    auto loss = [&] { return dot(relu(x).data(), proj.data()); };
    report.push_back(finish("relu", params, GradBundle{{relu_backward(x, proj)}}, loss, opts));
  }
  {  // softmax cross-entropy w.r.t. logits
    Tensor logits = random_tensor({kClasses}, rng, 2.0);
    const std::size_t label = 1;
    std::vector<Tensor*> params{&logits};
    auto loss = [&] { return softmax_cross_entropy(logits, label).loss; };
    report.push_back(
        finish("softmax_cross_entropy", params, GradBundle{{softmax_cross_entropy(logits, label).grad}}, loss, opts));
  }

  const std::vector<std::vector<std::size_t>> encoder_archs{{}, {16}, {12, 10}};
  const std::vector<std::size_t> decoder_hidden{10};
  std::vector<std::size_t> labels(kBatch);
  for (std::size_t n = 0; n < kBatch; ++n) labels[n] = n % kClasses;
  const Tensor inputs = random_tensor({kBatch, kIn}, rng);

  auto ce_check = [&](std::string name, Mlp net, const Tensor& x) {
    const BatchLoss bl = softmax_cross_entropy(net.forward(x), labels);
    GradBundle g = net.backward(bl.grad).params;
    auto params = net.parameters();
    auto loss = [&] {
      double s = 0.0;
      for (double l : softmax_cross_entropy(net.predict(x), labels).losses) s += l;
      return s;
    };
    report.push_back(finish(std::move(name), params, std::move(g), loss, opts));
  };
  for (const auto& arch : encoder_archs) {
    ce_check("encoder mlp hidden=" + describe(arch), models::make_encoder({kIn, arch, kClasses, rng()}), inputs);
  }
  ce_check("decoder mlp hidden=" + describe(decoder_hidden),
           models::make_decoder({kFeat, decoder_hidden, kClasses, rng()}), random_tensor({kBatch, kFeat}, rng));

  // Split network across an ideal channel, with and without the centroid term.
  const CentroidSet centroids = CentroidSet::complete(random_tensor({kClasses, kFeat}, rng));
  for (double lambda : {0.0, 0.7}) {
    Mlp encoder = models::make_encoder({kIn, {12}, kFeat, rng()});
    Mlp decoder = models::make_decoder({kFeat, decoder_hidden, kClasses, rng()});
    const Tensor f = models::encoder_forward(inputs, encoder);
    const Tensor logits = models::decoder_forward(f, decoder);
    const protocol::RegularizedLoss rl = protocol::regularized_loss(logits, labels, f, centroids, lambda);
    Rng link(0);
    models::SplitGradients sg = models::split_backward(rl.logit_grad, rl.feature_grad, decoder, encoder,
                                                       channel::ChannelConfig::ideal(), link);
    GradBundle analytic = sg.encoder;
    for (auto& t : sg.decoder.tensors) analytic.tensors.push_back(std::move(t));
    std::vector<Tensor*> params = encoder.parameters();
    for (Tensor* p : decoder.parameters()) params.push_back(p);
    auto loss = [&] {
      const Tensor fe = encoder.predict(inputs);
      return protocol::regularized_loss(decoder.predict(fe), labels, fe, centroids, lambda).loss;
    };
    report.push_back(finish(lambda == 0.0 ? "split network (noiseless, lambda=0)" : "split network + centroid regularizer",
                            params, std::move(analytic), loss, opts));
  }

  {  // SCG through the contrastive objective
    models::CentroidGenerator scg(kClasses, kFeat, 10, rng());
    std::vector<CentroidSet> locals;
    for (int k = 0; k < 3; ++k) {
      CentroidSet s(kClasses, kFeat, k);
      for (std::size_t c = 0; c < kClasses; ++c) {
        if ((c + static_cast<std::size_t>(k)) % 3 == 0) continue;  // leave holes
        s.set(c, random_tensor({kFeat}, rng, 0.5).data());
      }
      locals.push_back(std::move(s));
    }
    const protocol::ContrastiveResult cr = protocol::contrastive_loss(locals, CentroidSet::complete(scg.forward()));
    GradBundle g = scg.backward(cr.centroid_grad);
    auto params = scg.network().parameters();
    auto loss = [&] { return protocol::contrastive_loss(locals, models::scg_forward(scg)).loss; };
    report.push_back(finish("scg contrastive loss", params, std::move(g), loss, opts));
  }
  return report;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
  bool ok = true;
  for (const auto& e : run_gradcheck_suite(opts)) {
    out << (e.pass ? "PASS " : "FAIL ") << e.name << "  params=" << e.parameters
        << "  max_rel_error=" << metrics::format_value(e.max_rel_error) << '\n';
    ok = ok && e.pass;
  }
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << opts.tolerance << ")\n";
  return ok ? 0 : 1;
}

ChannelTestResult run_channel_test(double snr_db, std::size_t symbols, std::uint64_t seed) {
  if (symbols == 0) throw std::invalid_argument("channeltest: need at least one symbol");
  Rng src = make_stream(seed, StreamPurpose::channel_test, 0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  channel::SymbolFrame frame;
  frame.original_shape = {2 * symbols};
  for (std::size_t i = 0; i < symbols; ++i) frame.symbols.push_back(std::polar(1.0, phase(src)));

  const channel::ChannelConfig cfg{snr_db, channel::Fading::none, true, seed};
  ChannelTestResult r;
  r.configured_db = snr_db;
  r.symbols = symbols;
  Rng a = make_stream(seed, StreamPurpose::uplink, 1, 0, 0);
  const channel::Transmission ta = channel::transmit(frame, cfg, a);
  r.empirical_db = channel::empirical_snr_db(frame, ta.frame);

  if (cfg.noiseless()) {
    r.pass = ta.frame.symbols == frame.symbols;
    return r;
  }
  Rng b = make_stream(seed, StreamPurpose::uplink, 2, 0, 0);
  const channel::Transmission tb = channel::transmit(frame, cfg, b);
  // Sample correlation between the real noise components of the two streams.
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < symbols; ++i) {
    const double na = (ta.frame.symbols[i] - frame.symbols[i]).real();
    const double nb = (tb.frame.symbols[i] - frame.symbols[i]).real();
    sa += na, sb += nb, saa += na * na, sbb += nb * nb, sab += na * nb;
  }
  const double n = static_cast<double>(symbols);
  const double cov = sab / n - (sa / n) * (sb / n);
  r.noise_correlation = cov / std::sqrt((saa / n - (sa / n) * (sa / n)) * (sbb / n - (sb / n) * (sb / n)));
  r.pass = symbols < kSnrCalibrationSymbols || std::abs(r.empirical_db - snr_db) <= kSnrToleranceDb;
  return r;
}

int cmd_channeltest(double snr_db, std::size_t symbols, std::uint64_t seed, std::ostream& out) {
  const ChannelTestResult r = run_channel_test(snr_db, symbols, seed);
  out << "configured_snr_db=" << metrics::format_value(r.configured_db)
      << " empirical_snr_db=" << metrics::format_value(r.empirical_db)
      << " delta_db=" << metrics::format_value(std::isinf(r.configured_db) ? 0.0 : r.empirical_db - r.configured_db)
      << " symbols=" << r.symbols << " stream_noise_corr=" << metrics::format_value(r.noise_correlation) << '\n';
  out << (r.pass ? "channeltest passed" : "channeltest FAILED") << '\n';
  return r.pass ? 0 : 1;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& key, const std::vector<std::string>& values,
              std::ostream& out, std::ostream& err, std::size_t threads) {
  if (values.empty()) {
    err << "sweep: no values given\n";
    return 2;
  }
  std::vector<ExperimentConfig> cells;
  try {
    for (const auto& v : values) {
      ExperimentConfig cell = base;
      cell.set(key, v);
      cell.out = (std::filesystem::path(base.out) / (key + "=" + v)).string();
      cell.validate();
      cells.push_back(std::move(cell));
    }
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << '\n';
    return 2;
  }
  // Cells are independent; run them concurrently up to `threads`.
  std::vector<int> codes(cells.size(), 0);
  std::vector<std::string> logs(cells.size());
  {
    std::vector<std::jthread> workers;
    std::atomic<std::size_t> next{0};
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, cells.size()));
    for (std::size_t t = 0; t < n; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          std::ostringstream o, e;
          codes[i] = cmd_train(cells[i], o, e, 1);
          logs[i] = o.str() + e.str();
        }
      });
    }
  }
  int rc = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out << key << '=' << values[i] << ": " << logs[i];
    if (codes[i] != 0) rc = 1;
  }
  return rc;
}

}  // namespace fedcl
