#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fedcl/commands.hpp"
#include "fedcl/config.hpp"

using namespace fedcl;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fedcl_test_commands" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig quick(const std::filesystem::path& out) {
  return parse_config(std::nullopt, {{"classes", "4"}, {"clients", "4"}, {"m", "2"}, {"q", "20"}, {"rounds", "5"},
                                     {"feature_dim", "8"}, {"encoder_hidden", "8;6,6"}, {"decoder_hidden", "8"},
                                     {"scg_hidden", "8"}, {"test_per_class", "10"}, {"out", out.string()}});
}

}  // namespace

TEST(Gradcheck, FreshSuitePassesAndCoversEveryPart) {
  const auto entries = run_gradcheck_suite({});
  std::string names;
  for (const auto& e : entries) {
    EXPECT_TRUE(e.pass) << e.name << " " << e.max_rel_error;
    EXPECT_GT(e.parameters, 0u) << e.name;
    names += e.name + "\n";
  }
  for (const char* part : {"affine", "relu", "softmax_cross_entropy", "encoder", "decoder", "split", "centroid", "scg"}) {
    EXPECT_NE(names.find(part), std::string::npos) << part;
  }
  std::ostringstream out;
  EXPECT_EQ(cmd_gradcheck({}, out), 0);
}

TEST(Gradcheck, CorruptedBackwardFails) {
  GradcheckOptions opts;
  opts.corrupt_backward = true;
  for (const auto& e : run_gradcheck_suite(opts)) EXPECT_FALSE(e.pass) << e.name;
  std::ostringstream out;
  EXPECT_NE(cmd_gradcheck(opts, out), 0);
}

TEST(ChannelTest, CalibratedAtSpecPoints) {
  for (double snr : {0.0, 5.0, 10.0, 20.0}) {
    const auto r = run_channel_test(snr, kSnrCalibrationSymbols, 1);
    EXPECT_TRUE(r.pass) << snr;
    EXPECT_NEAR(r.empirical_db, snr, kSnrToleranceDb);
    EXPECT_LT(std::abs(r.noise_correlation), 0.01);
  }
}

TEST(ChannelTest, NoiselessExact) {
  const auto r = run_channel_test(std::numeric_limits<double>::infinity(), 1000, 0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.empirical_db, std::numeric_limits<double>::infinity());
  std::ostringstream out;
  EXPECT_EQ(cmd_channeltest(std::numeric_limits<double>::infinity(), 1000, 0, out), 0);
}

TEST(Train, WritesEveryOutput) {
  const auto dir = scratch("outputs");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(quick(dir), out, err), 0) << err.str();
  for (const char* f : {"metrics.csv", "features.csv", "projection.csv", "summary.csv", "config.resolved"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const std::string features = slurp(dir / "features.csv");
  EXPECT_EQ(features.substr(0, features.find('\n')), "client,label,f0,f1,f2,f3,f4,f5,f6,f7");
  EXPECT_EQ(parse_config_file(dir / "config.resolved").to_text(), quick(dir).to_text());
}

TEST(Train, ByteIdenticalAcrossThreadCounts) {
  const auto a = scratch("t1"), b = scratch("t4"), c = scratch("t1_again");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(quick(a), out, err, 1), 0);
  ASSERT_EQ(cmd_train(quick(b), out, err, 4), 0);
  ASSERT_EQ(cmd_train(quick(c), out, err, 1), 0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(c / "metrics.csv"));
  EXPECT_EQ(slurp(a / "features.csv"), slurp(b / "features.csv"));
}

TEST(Train, VanillaEqualsLambdaZeroMetrics) {
  const auto a = scratch("vanilla"), b = scratch("lambda0");
  auto va = quick(a);
  va.scheme = protocol::Scheme::vanilla;
  auto lz = quick(b);
  lz.lambda = 0.0;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(va, out, err), 0);
  ASSERT_EQ(cmd_train(lz, out, err), 0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
}

TEST(Train, FailureReturnsNonZero) {
  auto cfg = quick(scratch("bad"));
  cfg.dataset = (std::filesystem::temp_directory_path() / "fedcl_no_such_file.csv").string();
  std::ostringstream out, err;
  EXPECT_NE(cmd_train(cfg, out, err), 0);
  EXPECT_NE(err.str().find("no_such_file"), std::string::npos);
}

TEST(Sweep, OneDirectoryPerCell) {
  const auto dir = scratch("sweep");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep(quick(dir), "snr_db", {"0", "20"}, out, err, 2), 0) << err.str();
  EXPECT_TRUE(std::filesystem::exists(dir / "snr_db=0" / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "snr_db=20" / "metrics.csv"));
}
