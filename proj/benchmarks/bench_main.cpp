#include <benchmark/benchmark.h>

#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/datasets.hpp"
#include "fedunlearn/fl.hpp"
#include "fedunlearn/ledger.hpp"
#include "fedunlearn/offchain.hpp"
#include "fedunlearn/unlearning.hpp"

using namespace fedunlearn;
namespace ch = fedunlearn::chameleon;

namespace {

const ch::KeyPair& keys(unsigned lambda) {
  static std::map<unsigned, ch::KeyPair> cache;
  auto it = cache.find(lambda);
  if (it == cache.end()) {
    it = cache.emplace(lambda, ch::generate_keys(ch::setup(lambda, lambda), 1)).first;
  }
  return it->second;
}

void BM_ChameleonSetup(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(ch::setup(unsigned(state.range(0)), ++seed));
}
BENCHMARK(BM_ChameleonSetup)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ChameleonHash(benchmark::State& state) {
  const auto& kp = keys(unsigned(state.range(0)));
  Rng rng(3);
  const ch::Digest m{random_below(rng, kp.pk.q)};
  const auto r = ch::random_randomizer(kp.pk, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ch::hash(kp.pk, m, r));
}
BENCHMARK(BM_ChameleonHash)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_ChameleonRewrite(benchmark::State& state) {
  const auto& kp = keys(unsigned(state.range(0)));
  Rng rng(4);
  const ch::Digest m{random_below(rng, kp.pk.q)}, m_new{random_below(rng, kp.pk.q)};
  const auto r = ch::random_randomizer(kp.pk, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ch::rewrite(kp.pk, kp.sk, m, m_new, r));
}
BENCHMARK(BM_ChameleonRewrite)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_DigestUpdate(benchmark::State& state) {
  const auto& kp = keys(128);
  std::vector<double> v(std::size_t(state.range(0)), 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(ch::digest_update(v, kp.pk.q));
  state.SetBytesProcessed(std::int64_t(state.iterations()) * state.range(0) * 8);
}
BENCHMARK(BM_DigestUpdate)->Arg(36)->Arg(1 << 12)->Arg(1 << 16);

void BM_StoreRewrite(benchmark::State& state) {
  const auto& kp = keys(128);
  offchain::OffchainStore store;
  Rng rng(5);
  const auto key = store.put(1, std::vector<double>(36, 0.5), kp.pk, ch::random_randomizer(kp.pk, rng));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(store.rewrite_entry(key, kp.sk, ++seed));
}
BENCHMARK(BM_StoreRewrite)->Unit(benchmark::kMicrosecond);

void BM_LocalTrain(benchmark::State& state) {
  const auto data = fl::make_blobs({}, 2, {1}, 1);
  const fl::ModelShape shape{8, std::size_t(state.range(0)), 4, fl::Activation::kTanh};
  const auto model = fl::init_model(shape, 1);
  fl::TrainConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fl::local_train(model, data.clients[1], cfg));
}
BENCHMARK(BM_LocalTrain)->Arg(0)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_FedAvg(benchmark::State& state) {
  const std::size_t k = std::size_t(state.range(0));
  std::vector<fl::ModelUpdate> ups(k, fl::ModelUpdate{std::vector<double>(4096, 0.1), 0, 0});
  std::vector<double> w(k, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fl::fedavg_aggregate(ups, w));
}
BENCHMARK(BM_FedAvg)->Arg(10)->Arg(50);

void BM_Calibrate(benchmark::State& state) {
  const std::size_t k = std::size_t(state.range(0));
  std::vector<fl::ModelUpdate> ups(k - 1, fl::ModelUpdate{std::vector<double>(4096, 0.1), 0, 0});
  std::vector<double> w(k - 1, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(unlearning::calibrate_aggregate(ups, w, k));
}
BENCHMARK(BM_Calibrate)->Arg(10)->Arg(50);

void BM_SealBlock(benchmark::State& state) {
  ledger::ConsensusStub stub;
  stub.kind = state.range(0) ? ledger::ConsensusKind::kPow : ledger::ConsensusKind::kDpos;
  stub.difficulty = 8;
  ledger::Ledger chain(stub);
  for (auto _ : state) benchmark::DoNotOptimize(chain.seal_block(true).hash);
}
BENCHMARK(BM_SealBlock)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
