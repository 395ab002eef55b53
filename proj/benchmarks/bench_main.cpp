// Microbenchmarks for the latency-sensitive pieces: view switching vs
// checkpoint loading, forward cost by decoder depth, and the measurement
// statistics themselves.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>
#include <random>

#include "dynhat/elastic_model.hpp"
#include "dynhat/latency.hpp"
#include "dynhat/rng.hpp"
#include "dynhat/runtime.hpp"

using namespace dynhat;

namespace {

DesignSpace bench_space() {
    DesignSpace s;
    s.encoder_embed_choices = {32, 64};
    s.decoder_embed_choices = {32, 64};
    s.ffn_dim_choices = {64, 128};
    s.head_choices = {2, 4};
    s.decoder_layer_choices = {1, 2, 3, 4, 5, 6};
    s.enc_dec_attn_choices = {-1, 1};
    s.encoder_layers = 2;
    return s;
}

const SuperWeights& bench_bank() {
    static const SuperWeights bank = init_super(bench_space(), 64, 7);
    return bank;
}

SubConfig config_with_depth(int layers) {
    SubConfig c;
    c.encoder_embed_dim = 64;
    c.decoder_embed_dim = 64;
    c.encoder_ffn_dims = {128, 128};
    c.encoder_heads = {4, 4};
    c.n_decoder_layers = layers;
    c.decoder_ffn_dims.assign(static_cast<std::size_t>(layers), 128);
    c.decoder_heads.assign(static_cast<std::size_t>(layers), 4);
    c.enc_dec_attn.assign(static_cast<std::size_t>(layers), -1);
    return c;
}

OperatingLibrary bench_library() {
    OperatingLibrary lib;
    for (int layers = 1; layers <= 6; ++layers) {
        OperatingPoint p;
        p.config = config_with_depth(layers);
        p.measured_latency_ms = 100.0 * layers;
        p.val_loss = 5.0 - 0.1 * layers;
        lib.points.push_back(p);
    }
    return lib;
}

void BM_SwitchActive(benchmark::State& state) {
    auto bank = std::make_shared<const SuperWeights>(bench_bank());
    Controller ctl(bank, bench_library());
    int i = 0;
    for (auto _ : state) {
        const auto& point = ctl.library().points[static_cast<std::size_t>(i++ % 6)];
        benchmark::DoNotOptimize(ctl.switch_active(point));
    }
}
BENCHMARK(BM_SwitchActive);

void BM_CheckpointLoad(benchmark::State& state) {
    const auto path = std::filesystem::temp_directory_path() / "dynhat_bench_bank.ckpt";
    save_checkpoint(bench_bank(), path.string());
    for (auto _ : state) {
        benchmark::DoNotOptimize(load_checkpoint(path.string()));
    }
    std::filesystem::remove(path);
}
BENCHMARK(BM_CheckpointLoad);

void BM_TranslateByDepth(benchmark::State& state) {
    const auto view = inherit(bench_bank(), config_with_depth(static_cast<int>(state.range(0))));
    auto rng = make_rng(3);
    std::vector<int> src(12);
    for (int& t : src) t = kNumReservedIds + static_cast<int>(pick_index(rng, 60));
    for (auto _ : state) {
        benchmark::DoNotOptimize(greedy_translate_forced_length(view, src, 12));
    }
}
BENCHMARK(BM_TranslateByDepth)->DenseRange(1, 6, 1);

void BM_TrimmedMean(benchmark::State& state) {
    auto rng = make_rng(4);
    std::lognormal_distribution<double> dist(3.0, 0.5);
    std::vector<double> samples(300);
    for (double& x : samples) x = dist(rng);
    for (auto _ : state) {
        auto copy = samples;
        benchmark::DoNotOptimize(trimmed_mean_latency(std::move(copy), 0.10));
    }
}
BENCHMARK(BM_TrimmedMean);

}  // namespace

BENCHMARK_MAIN();
