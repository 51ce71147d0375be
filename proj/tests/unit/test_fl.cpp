#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fedunlearn/datasets.hpp"
#include "fedunlearn/error.hpp"
#include "fedunlearn/fl.hpp"

using namespace fedunlearn;
using namespace fedunlearn::fl;

namespace {

Dataset tiny() {
  Dataset d{2, {}, {}};
  d.append(std::vector<double>{1.0, 2.0}, 0);
  return d;
}

ModelShape logistic(std::size_t in, std::size_t c) { return {in, 0, c, Activation::kTanh}; }

std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

TEST(Fl, ParameterCount) {
  EXPECT_EQ(logistic(8, 4).parameter_count(), 36u);
  EXPECT_EQ((ModelShape{8, 5, 4, Activation::kRelu}).parameter_count(), 8u * 5 + 5 + 5 * 4 + 4);
}

TEST(Fl, UniformModelLossIsLn2) {
  const auto d = tiny();
  const std::vector<double> w(logistic(2, 2).parameter_count(), 0.0);
  const auto idx = all_rows(d);
  EXPECT_NEAR(loss_and_gradient(logistic(2, 2), w, d, idx, {}), 0.6931471805599453, 1e-15);
  const auto p = predict_proba(logistic(2, 2), w, d.row(0));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Fl, GradientMatchesHandDerivation) {
  // Zero weights, x = (1, 2), y = 0; oracle in tests/oracles/derive.py.
  const auto d = tiny();
  const std::vector<double> w(6, 0.0);
  std::vector<double> g(6);
  const auto idx = all_rows(d);
  loss_and_gradient(logistic(2, 2), w, d, idx, g);
  const std::vector<double> expected{-0.5, -1.0, 0.5, 1.0, -0.5, 0.5};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(g[i], expected[i]) << i;
}

TEST(Fl, OneStepSgdExample) {
  const GlobalModel m{logistic(2, 2), std::vector<double>(6, 0.0), 0};
  const ClientDataset cd{1, tiny(), 1.0};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.local_epochs = 1;
  cfg.batch_size = 1;
  const auto u = local_train(m, cd, cfg);
  const std::vector<double> expected{0.05, 0.1, -0.05, -0.1, 0.05, -0.05};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(u.delta[i], expected[i], 1e-15) << i;
  EXPECT_EQ(u.client, 1u);
}

TEST(Fl, ZeroEpochsGivesZeroUpdate) {
  const GlobalModel m = init_model(logistic(2, 2), 3);
  TrainConfig cfg;
  cfg.local_epochs = 0;
  const auto u = local_train(m, {1, tiny(), 1.0}, cfg);
  for (double v : u.delta) EXPECT_EQ(v, 0.0);
}

TEST(Fl, LocalTrainIsDeterministicAndValidates) {
  const auto data = make_blobs({}, 4, {1}, 9);
  const GlobalModel m = init_model(logistic(8, 4), 2);
  TrainConfig cfg;
  const auto a = local_train(m, data.clients[1], cfg);
  const auto b = local_train(m, data.clients[1], cfg);
  EXPECT_EQ(a.delta, b.delta);
  cfg.seed = 2;
  EXPECT_NE(local_train(m, data.clients[1], cfg).delta, a.delta);

  ClientDataset empty{1, Dataset{8, {}, {}}, 1.0};
  EXPECT_THROW(local_train(m, empty, cfg), Error);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(local_train(m, data.clients[1], cfg), Error);
}

TEST(Fl, DivergenceIsReported) {
  const auto data = make_blobs({}, 2, {1}, 1);
  GlobalModel m = init_model({8, 4, 4, Activation::kRelu}, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  try {
    local_train(m, data.clients[1], cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
  }
}

TEST(Fl, FedAvgAndApplyExamples) {
  const std::vector<ModelUpdate> ups{{{1.0, 0.0}, 1, 0}, {{0.0, 1.0}, 2, 0}};
  const std::vector<double> w{1.0, 1.0};
  const auto agg = fedavg_aggregate(ups, w);
  EXPECT_EQ(agg.delta, (std::vector<double>{0.5, 0.5}));

  const GlobalModel m{logistic(1, 2), {1.0, 2.0, 0.0, 0.0}, 3};
  const auto next = apply_update(m, {{0.5, -1.0, 0.0, 0.0}, 0, 3});
  EXPECT_EQ(next.weights, (std::vector<double>{1.5, 1.0, 0.0, 0.0}));
  EXPECT_EQ(next.round, 4u);
  EXPECT_THROW(apply_update(m, {{0.5}, 0, 3}), Error);
}

TEST(Fl, FedAvgMatchesExactOracle) {
  // Same data as the exact-rational oracle.
  const std::vector<ModelUpdate> ups{{{1, -2, 3}, 1, 0},    {{0.5, 0.25, -1}, 2, 0}, {{2, 2, 2}, 3, 0},
                                     {{-1, 0, 4}, 4, 0},    {{0.75, -0.5, 0}, 5, 0}};
  const std::vector<double> w{1, 2, 3, 4, 5};
  const auto agg = fedavg_aggregate(ups, w);
  EXPECT_NEAR(agg.delta[0], 0.5166666666666667, 1e-15);
  EXPECT_NEAR(agg.delta[1], 0.13333333333333333, 1e-15);
  EXPECT_NEAR(agg.delta[2], 1.5333333333333334, 1e-15);
}

TEST(Fl, FedAvgOfIdenticalUpdatesIsThatUpdate) {
  const std::vector<ModelUpdate> ups(3, ModelUpdate{{0.25, -3.0, 7.5}, 0, 0});
  const auto agg = fedavg_aggregate(ups, std::vector<double>{1.0, 7.0, 0.5});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(agg.delta[i], ups[0].delta[i], 1e-15);
  const GlobalModel m{logistic(1, 2), {1.0, 2.0, 3.0, 4.0}, 0};
  const auto same = apply_update(m, {{0, 0, 0, 0}, 0, 0});
  EXPECT_EQ(same.weights, m.weights);
  EXPECT_EQ(same.round, 1u);
}

TEST(Fl, SeparableSetIsLearnedPerfectly) {
  Dataset d{1, {}, {}};
  for (int i = 1; i <= 10; ++i) {
    d.append(std::vector<double>{double(i)}, 0);
    d.append(std::vector<double>{-double(i)}, 1);
  }
  GlobalModel m = init_model(logistic(1, 2), 1);
  TrainConfig cfg;
  cfg.local_epochs = 50;
  cfg.batch_size = 4;
  const auto u = local_train(m, {1, d, 1.0}, cfg);
  m = apply_update(m, u);
  EXPECT_DOUBLE_EQ(evaluate(m, d).accuracy, 1.0);
  EXPECT_TRUE(std::isfinite(evaluate(m, d).loss));

  // Every label is one the model never predicts: accuracy 0.
  Dataset wrong{1, {}, {}};
  for (int i = 1; i <= 4; ++i) wrong.append(std::vector<double>{double(i)}, 1);
  EXPECT_DOUBLE_EQ(evaluate(m, wrong).accuracy, 0.0);
}

TEST(Fl, FedAvgErrors) {
  const std::vector<ModelUpdate> ups{{{1.0, 0.0}, 1, 0}, {{0.0}, 2, 0}};
  EXPECT_THROW(fedavg_aggregate(ups, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(fedavg_aggregate({}, {}), Error);
  const std::vector<ModelUpdate> ok{{{1.0}, 1, 0}};
  EXPECT_THROW(fedavg_aggregate(ok, std::vector<double>{0.0}), Error);
  EXPECT_THROW(fedavg_aggregate(ok, std::vector<double>{1.0, 2.0}), Error);
}

TEST(Fl, GradientCheckMlpBothActivations) {
  Rng rng(77);
  for (auto act : {Activation::kTanh, Activation::kRelu}) {
    const ModelShape s{3, 4, 3, act};
    const auto m = init_model(s, 5, 0.5);
    Dataset d{3, {}, {}};
    for (int i = 0; i < 5; ++i) {
      d.append(std::vector<double>{uniform01(rng) - 0.5, uniform01(rng), -uniform01(rng)}, i % 3);
    }
    const auto idx = all_rows(d);
    std::vector<double> g(m.weights.size());
    loss_and_gradient(s, m.weights, d, idx, g);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      auto wp = m.weights, wm = m.weights;
      wp[j] += 1e-6;
      wm[j] -= 1e-6;
      const double fd =
          (loss_and_gradient(s, wp, d, idx, {}) - loss_and_gradient(s, wm, d, idx, {})) / 2e-6;
      num += (fd - g[j]) * (fd - g[j]);
      den += (std::abs(fd) + std::abs(g[j])) * (std::abs(fd) + std::abs(g[j]));
    }
    EXPECT_LT(std::sqrt(num) / std::sqrt(den), 1e-5);
  }
}

TEST(Fl, EvaluateAndPerExampleLoss) {
  const auto data = make_blobs({}, 4, {1}, 2);
  const auto m = init_model(logistic(8, 4), 1);
  const auto r = evaluate(m, data.test);
  EXPECT_GE(r.accuracy, 0.0);
  EXPECT_LE(r.accuracy, 1.0);
  const auto losses = per_example_loss(m.shape, m.weights, data.test);
  ASSERT_EQ(losses.size(), data.test.size());
  EXPECT_NEAR(std::accumulate(losses.begin(), losses.end(), 0.0) / double(losses.size()), r.loss, 1e-12);
}

TEST(Fl, CheckpointRoundTrip) {
  GlobalModel m = init_model({5, 3, 2, Activation::kRelu}, 8);
  m.round = 17;
  const auto bytes = save_checkpoint(m);
  const auto back = load_checkpoint(bytes);
  EXPECT_EQ(back.shape, m.shape);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.round, 17u);
  auto broken = bytes;
  broken.resize(10);
  EXPECT_THROW(load_checkpoint(broken), Error);
}

TEST(Fl, L2Distance) {
  EXPECT_DOUBLE_EQ(l2_distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}), 5.0);
  EXPECT_THROW(l2_distance(std::vector<double>{0}, std::vector<double>{3, 4}), Error);
}

TEST(Datasets, BlobsShapeAndTargets) {
  BlobSpec spec;
  const auto data = make_blobs(spec, 5, {2}, 4);
  ASSERT_EQ(data.clients.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(data.clients[k].client, k + 1);
    EXPECT_EQ(data.clients[k].data.size(), spec.samples_per_client);
    EXPECT_DOUBLE_EQ(data.clients[k].weight, double(spec.samples_per_client));
  }
  // The target carries a single label.
  const auto& t = data.clients[1].data.labels;
  EXPECT_TRUE(std::all_of(t.begin(), t.end(), [&](int l) { return l == t.front(); }));
  EXPECT_EQ(data.test.size(), spec.holdout_samples);
  EXPECT_EQ(data.mia_calibration.size(), spec.holdout_samples);
  EXPECT_GT(data.target_holdout.size(), 0u);
  // Same seed, same data.
  EXPECT_EQ(make_blobs(spec, 5, {2}, 4).clients[3].data.features, data.clients[3].data.features);
}

TEST(Datasets, PartitionIid) {
  Dataset pool{1, {}, {}};
  for (int i = 0; i < 10; ++i) pool.append(std::vector<double>{double(i)}, i % 2);
  const auto parts = partition_iid(pool, 3, 1);
  ASSERT_EQ(parts.size(), 3u);
  for (const auto& p : parts) EXPECT_EQ(p.data.size(), 3u);
  EXPECT_THROW(partition_iid(pool, 11, 1), Error);
}

TEST(Datasets, CsvLoader) {
  const auto path = std::filesystem::temp_directory_path() / "fedunlearn_test.csv";
  {
    std::ofstream f(path);
    f << "label,a,b\n1,0.5,2\r\n0,-1,3e2\n\n";
  }
  const auto d = load_csv(path);
  EXPECT_EQ(d.dim, 2u);
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.features, (std::vector<double>{0.5, 2, -1, 300}));
  {
    std::ofstream f(path);
    f << "1,0.5\n0,x\n";
  }
  EXPECT_THROW(load_csv(path), Error);
  {
    std::ofstream f(path);
    f << "1.5,0.5\n";
  }
  EXPECT_THROW(load_csv(path), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(load_csv(path), Error);
}

TEST(Datasets, IdxLoader) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto img = dir / "fedunlearn_img.idx", lab = dir / "fedunlearn_lab.idx";
  auto be32 = [](std::ofstream& f, std::uint32_t v) {
    const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    f.write(b, 4);
  };
  {
    std::ofstream fi(img, std::ios::binary), fl(lab, std::ios::binary);
    be32(fi, 0x803);
    be32(fi, 3);
    be32(fi, 1);
    be32(fi, 2);
    const unsigned char px[6] = {0, 255, 51, 102, 255, 0};
    fi.write(reinterpret_cast<const char*>(px), 6);
    be32(fl, 0x801);
    be32(fl, 3);
    const char labels[3] = {7, 1, 0};
    fl.write(labels, 3);
  }
  const auto d = load_idx(img, lab);
  EXPECT_EQ(d.dim, 2u);
  EXPECT_EQ(d.labels, (std::vector<int>{7, 1, 0}));
  EXPECT_DOUBLE_EQ(d.features[1], 1.0);
  EXPECT_DOUBLE_EQ(d.features[2], 0.2);
  EXPECT_EQ(load_idx(img, lab, 2).size(), 2u);
  EXPECT_THROW(load_idx(lab, img), Error);
  std::filesystem::remove(img);
  std::filesystem::remove(lab);
}
