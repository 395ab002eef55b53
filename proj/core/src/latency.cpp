#include "dynhat/latency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dynhat/rng.hpp"

namespace dynhat {

double CostModel::analytic_ms(const SubConfig& cfg) const {
    double ffn = 0.0, attended = 0.0;
    for (int f : cfg.encoder_ffn_dims) ffn += f;
    for (int f : cfg.decoder_ffn_dims) ffn += f;
    for (int a : cfg.enc_dec_attn) attended += attended_encoder_layers(a);
    return base_ms + per_decoder_layer_ms * cfg.n_decoder_layers + per_ffn_unit_ms * ffn +
           per_embed_unit_ms * (cfg.encoder_embed_dim + cfg.decoder_embed_dim) +
           per_attended_layer_ms * attended;
}

// Depth costs ~300 ms per decoder layer and width is nearly free, so a
// budget is best spent on wide, shallow configurations.
CostModel CostModel::sim_gpu() {
    CostModel m;
    m.base_ms = 56.0;
    m.per_decoder_layer_ms = 300.0;
    m.per_ffn_unit_ms = 0.0015;
    m.per_embed_unit_ms = 0.03;
    m.per_attended_layer_ms = 4.0;
    return m;
}

// Width is priced heavily relative to depth, so the same budget buys deeper,
// thinner configurations. Overall range overlaps sim_gpu so the two can be
// compared at one budget.
CostModel CostModel::sim_cpu() {
    CostModel m;
    m.base_ms = 120.0;
    m.per_decoder_layer_ms = 150.0;
    m.per_ffn_unit_ms = 0.03;
    m.per_embed_unit_ms = 0.3;
    m.per_attended_layer_ms = 6.0;
    return m;
}

CostModel cost_model_by_id(const std::string& hardware_id) {
    if (hardware_id == "sim-gpu") return CostModel::sim_gpu();
    if (hardware_id == "sim-cpu") return CostModel::sim_cpu();
    throw std::invalid_argument("unknown simulated hardware id: " + hardware_id);
}

double trimmed_mean_latency(std::vector<double> samples_ms, double trim_frac) {
    const auto n = samples_ms.size();
    if (n < 3) throw std::invalid_argument("trimmed_mean_latency: need at least 3 samples");
    if (!(trim_frac >= 0.0) || trim_frac >= 0.5)
        throw std::invalid_argument("trimmed_mean_latency: trim_frac must be in [0, 0.5)");
    const auto k = static_cast<std::size_t>(std::lround(trim_frac * static_cast<double>(n)));
    if (2 * k >= n)
        throw std::invalid_argument("trimmed_mean_latency: trim removes every sample");
    std::sort(samples_ms.begin(), samples_ms.end());
    // All surviving samples equal: the mean is that value, exactly.
    if (samples_ms[k] == samples_ms[n - 1 - k]) return samples_ms[k];
    const double sum = std::accumulate(samples_ms.begin() + static_cast<std::ptrdiff_t>(k),
                                       samples_ms.end() - static_cast<std::ptrdiff_t>(k), 0.0);
    return sum / static_cast<double>(n - 2 * k);
}

double measure_model_latency(const RunOnce& runner, const MeasureProtocol& p) {
    if (p.repeats < 3) throw std::invalid_argument("measure_model_latency: repeats must be >= 3");
    if (p.sentence_len < 1)
        throw std::invalid_argument("measure_model_latency: sentence_len must be >= 1");
    for (int i = 0; i < p.warmup_runs; ++i) runner(p.sentence_len);
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(p.repeats));
    for (int i = 0; i < p.repeats; ++i) times.push_back(runner(p.sentence_len));
    return trimmed_mean_latency(std::move(times), p.trim_frac);
}

RunOnce make_view_runner(const SubModelView& view, std::uint64_t seed) {
    const int vocab = view.vocab_size();
    return [&view, vocab, seed](int sentence_len) {
        auto rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(sentence_len)));
        std::vector<int> src(static_cast<std::size_t>(sentence_len));
        for (int& t : src)
            t = kNumReservedIds +
                static_cast<int>(pick_index(rng, static_cast<std::size_t>(vocab - kNumReservedIds)));
        const auto t0 = std::chrono::steady_clock::now();
        greedy_translate_forced_length(view, src, sentence_len);
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };
}

RunOnce make_cost_model_runner(const CostModel& model, const SubConfig& cfg, std::uint64_t seed) {
    const double analytic = model.analytic_ms(cfg);
    const double sd = model.noise_sd_ms;
    auto rng = std::make_shared<std::mt19937_64>(make_rng(mix_seed(seed, 0xC057)));
    return [analytic, sd, rng](int) {
        if (sd <= 0.0) return analytic;
        std::normal_distribution<double> noise(0.0, sd);
        return std::max(1e-3, analytic + noise(*rng));
    };
}

DatasetBuildReport build_latency_dataset(const DesignSpace& space, int n_samples,
                                         const MeasureFn& measure, std::uint64_t seed,
                                         const std::string& hardware_id) {
    if (n_samples < 1) throw std::invalid_argument("build_latency_dataset: n_samples must be >= 1");
    DatasetBuildReport report;
    for (int i = 0; i < n_samples; ++i) {
        SubConfig cfg = sample_uniform(space, mix_seed(seed, static_cast<std::uint64_t>(i)));
        try {
            const double ms = measure(cfg);
            report.samples.push_back({cfg, encode_features(cfg), ms, hardware_id});
        } catch (const std::exception&) {
            report.n_failed += 1;
        }
    }
    return report;
}

double LatencyPredictor::predict_features(const std::vector<double>& features) const {
    if (features.size() != coefficients.size())
        throw std::invalid_argument("predict: feature length mismatch");
    double y = intercept;
    for (std::size_t i = 0; i < features.size(); ++i) y += coefficients[i] * features[i];
    return y;
}

double LatencyPredictor::predict(const SubConfig& cfg) const {
    return predict_features(encode_features(cfg));
}

LatencyPredictor fit_predictor(const std::vector<LatencySample>& dataset) {
    const int f = kFeatureCount;
    const auto n = dataset.size();
    if (n < static_cast<std::size_t>(2 * f))
        throw std::invalid_argument("fit_predictor: need at least " + std::to_string(2 * f) +
                                    " samples, got " + std::to_string(n));

    // Deterministic 80/20 split by position.
    std::vector<std::size_t> train_idx, held_idx;
    for (std::size_t i = 0; i < n; ++i)
        (i % 5 == 4 ? held_idx : train_idx).push_back(i);

    const auto m = static_cast<Eigen::Index>(train_idx.size());
    Mat x(m, f);
    Eigen::VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& s = dataset[train_idx[static_cast<std::size_t>(i)]];
        if (static_cast<int>(s.features.size()) != f)
            throw std::invalid_argument("fit_predictor: sample feature length mismatch");
        for (int j = 0; j < f; ++j) x(i, j) = s.features[static_cast<std::size_t>(j)];
        y(i) = s.latency_ms;
    }

    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    Mat xc = x.rowwise() - x_mean;
    Eigen::VectorXd yc = y.array() - y_mean;

    LatencyPredictor p;
    Eigen::VectorXd beta;
    Eigen::ColPivHouseholderQR<Mat> qr(xc);
    qr.setThreshold(1e-9);
    if (qr.rank() < f) {
        p.ridge_fallback = true;
        const double lambda = 1e-6 * (xc.colwise().squaredNorm().mean() + 1.0);
        Mat gram = xc.transpose() * xc + lambda * Mat::Identity(f, f);
        beta = gram.ldlt().solve(xc.transpose() * yc);
    } else {
        beta = qr.solve(yc);
    }

    p.coefficients.assign(beta.data(), beta.data() + f);
    p.intercept = y_mean - x_mean.dot(beta);

    double sq = 0.0;
    for (std::size_t i : held_idx) {
        const double err = p.predict_features(dataset[i].features) - dataset[i].latency_ms;
        sq += err * err;
    }
    p.heldout_rmse = held_idx.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(held_idx.size()));
    return p;
}

void save_latency_dataset(const std::vector<LatencySample>& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& s : dataset) {
        nlohmann::json j{
            {"hardware_id", s.hardware_id},
            {"config", s.config},
            {"features", s.features},
            {"latency_ms", s.latency_ms},
        };
        out << j.dump() << "\n";
    }
}

std::vector<LatencySample> load_latency_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<LatencySample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        LatencySample s;
        j.at("config").get_to(s.config);
        j.at("features").get_to(s.features);
        s.latency_ms = j.at("latency_ms").get<double>();
        s.hardware_id = j.at("hardware_id").get<std::string>();
        out.push_back(std::move(s));
    }
    return out;
}

void save_predictor(const LatencyPredictor& p, const std::string& path) {
    nlohmann::json j{
        {"format_version", 1},
        {"feature_names", feature_names()},
        {"coefficients", p.coefficients},
        {"intercept", p.intercept},
        {"heldout_rmse", p.heldout_rmse},
        {"ridge_fallback", p.ridge_fallback},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

LatencyPredictor load_predictor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    auto j = nlohmann::json::parse(in);
    LatencyPredictor p;
    j.at("coefficients").get_to(p.coefficients);
    p.intercept = j.at("intercept").get<double>();
    p.heldout_rmse = j.at("heldout_rmse").get<double>();
    p.ridge_fallback = j.at("ridge_fallback").get<bool>();
    return p;
}

}  // namespace dynhat
