#include "dynhat/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dynhat/rng.hpp"

namespace dynhat {

namespace {

struct AdamState {
    std::vector<Mat> m, v;
    long long t = 0;
    double beta1 = 0.9, beta2 = 0.98, eps = 1e-9;

    explicit AdamState(const SuperWeights& bank) {
        m.reserve(bank.params.size());
        v.reserve(bank.params.size());
        for (const Mat& p : bank.params) {
            m.push_back(Mat::Zero(p.rows(), p.cols()));
            v.push_back(Mat::Zero(p.rows(), p.cols()));
        }
    }
};

double lr_at(const TrainSettings& s, int step) {
    const double w = static_cast<double>(s.warmup_steps);
    const double t = static_cast<double>(step);
    return s.learning_rate * std::min(t / w, std::sqrt(w / t));
}

struct SentenceRef {
    std::span<const int> src, tgt;
};

// Teacher-forced label-smoothed cross-entropy over a group of sentences,
// weighted so the result is mean nats per target token (eos included).
ad::Var batch_loss(ad::Graph& g, const BoundModel& bm, const std::vector<SentenceRef>& sentences,
                   double label_smoothing) {
    int total_tokens = 0;
    for (const auto& s : sentences) total_tokens += static_cast<int>(s.tgt.size()) + 1;

    ad::Var loss;
    for (const auto& s : sentences) {
        auto enc = encoder_forward(g, bm, s.src);
        std::vector<int> dec_input;
        dec_input.reserve(s.tgt.size() + 1);
        dec_input.push_back(kBosId);
        dec_input.insert(dec_input.end(), s.tgt.begin(), s.tgt.end());
        std::vector<int> targets(s.tgt.begin(), s.tgt.end());
        targets.push_back(kEosId);

        ad::Var logits = decoder_logits(g, bm, enc, pad_mask_of(s.src), dec_input);
        ad::Var ce = g.cross_entropy_mean(logits, targets, label_smoothing);
        ad::Var weighted =
            g.scale(ce, static_cast<double>(targets.size()) / static_cast<double>(total_tokens));
        loss = loss.valid() ? g.add(loss, weighted) : weighted;
    }
    return loss;
}

std::vector<int> depad(const std::vector<int>& tokens, const std::vector<bool>& pad) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (!pad[i]) out.push_back(tokens[i]);
    return out;
}

// One optimizer step through the view of `cfg`; returns the pre-update loss.
double train_step(SuperWeights& bank, AdamState& opt, const SubConfig& cfg,
                  const std::vector<SentenceRef>& sentences, const TrainSettings& s, int step) {
    ad::Graph g(true);
    BoundModel bm = bind_model(g, bank, cfg, true);
    ad::Var loss = batch_loss(g, bm, sentences, s.label_smoothing);
    const double loss_value = loss.scalar();
    if (!std::isfinite(loss_value))
        throw TrainingDiverged(step, canonical_config_json(cfg), loss_value);
    g.backward(loss);

    double sq_norm = 0.0;
    for (const auto& p : bm.bound) sq_norm += p.var.grad().squaredNorm();
    double clip_scale = 1.0;
    if (s.gradient_clip_norm > 0.0) {
        const double norm = std::sqrt(sq_norm);
        if (norm > s.gradient_clip_norm) clip_scale = s.gradient_clip_norm / norm;
    }

    opt.t += 1;
    const double lr = lr_at(s, step);
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
    for (const auto& p : bm.bound) {
        const auto i = static_cast<std::size_t>(p.param_index);
        auto m = opt.m[i].topLeftCorner(p.rows, p.cols);
        auto v = opt.v[i].topLeftCorner(p.rows, p.cols);
        auto w = bank.params[i].topLeftCorner(p.rows, p.cols);
        const Mat grad = clip_scale * p.var.grad();
        m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
        v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
        w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
    }
    return loss_value;
}

TrainLog run_training(SuperWeights& bank, const Corpus& corpus, const TrainSettings& s,
                      const std::function<SubConfig(int step)>& config_for_step) {
    check_settings(s);
    if (corpus.pairs.empty()) throw std::invalid_argument("training: empty corpus");
    if (corpus.vocab_size != bank.vocab_size)
        throw std::invalid_argument("training: corpus vocab does not match bank");

    AdamState opt(bank);
    BatchIterator it(corpus, s.batch_size, mix_seed(s.seed, 0xBA7C4));
    int epoch = 0;
    std::vector<Batch> batches = it.epoch(epoch);
    std::size_t batch_idx = 0;

    TrainLog log;
    log.reserve(static_cast<std::size_t>(s.steps));
    for (int step = 1; step <= s.steps; ++step) {
        if (batch_idx == batches.size()) {
            batches = it.epoch(++epoch);
            batch_idx = 0;
        }
        const Batch& b = batches[batch_idx++];

        std::vector<std::vector<int>> srcs, tgts;
        std::vector<SentenceRef> refs;
        for (std::size_t i = 0; i < b.src.size(); ++i) {
            srcs.push_back(depad(b.src[i], b.src_pad[i]));
            tgts.push_back(depad(b.tgt[i], b.tgt_pad[i]));
        }
        refs.reserve(srcs.size());
        for (std::size_t i = 0; i < srcs.size(); ++i) refs.push_back({srcs[i], tgts[i]});

        const SubConfig cfg = config_for_step(step);
        const double loss = train_step(bank, opt, cfg, refs, s, step);
        log.push_back({step, config_hash(cfg), loss});
    }
    return log;
}

}  // namespace

void check_settings(const TrainSettings& s) {
    if (s.steps < 1) throw std::invalid_argument("TrainSettings: steps must be >= 1");
    if (s.batch_size < 1) throw std::invalid_argument("TrainSettings: batch_size must be >= 1");
    if (!(s.learning_rate > 0.0)) throw std::invalid_argument("TrainSettings: learning_rate must be > 0");
    if (s.warmup_steps < 1) throw std::invalid_argument("TrainSettings: warmup_steps must be >= 1");
    if (s.label_smoothing < 0.0 || s.label_smoothing >= 1.0)
        throw std::invalid_argument("TrainSettings: label_smoothing must be in [0,1)");
    if (s.gradient_clip_norm < 0.0)
        throw std::invalid_argument("TrainSettings: gradient_clip_norm must be >= 0");
}

TrainingDiverged::TrainingDiverged(int step_, std::string config_json_, double loss_)
    : std::runtime_error("training diverged at step " + std::to_string(step_) +
                         " (loss=" + std::to_string(loss_) + ") config=" + config_json_),
      step(step_),
      config_json(std::move(config_json_)),
      loss(loss_) {}

TrainLog train_super(SuperWeights& bank, const DesignSpace& space, const Corpus& train_corpus,
                     const TrainSettings& settings) {
    if (auto v = validate_space(space); !v.empty())
        throw std::invalid_argument("train_super: invalid space: " + v.front());
    return run_training(bank, train_corpus, settings, [&](int step) {
        return sample_uniform(space, mix_seed(settings.seed, 0x5A3F1E + static_cast<std::uint64_t>(step)));
    });
}

std::pair<SuperWeights, TrainLog> train_from_scratch(const SubConfig& cfg,
                                                     const Corpus& train_corpus,
                                                     const TrainSettings& settings) {
    SuperWeights bank = init_exact(cfg, train_corpus.vocab_size, mix_seed(settings.seed, 0xF0E5));
    TrainLog log = run_training(bank, train_corpus, settings, [&](int) { return cfg; });
    return {std::move(bank), std::move(log)};
}

std::pair<double, int> sentence_loss_sum(const SubModelView& view, std::span<const int> src,
                                         std::span<const int> tgt) {
    ad::Graph g(false);
    BoundModel bm = bind_model(g, view.bank(), view.config(), false);
    auto enc = encoder_forward(g, bm, src);
    std::vector<int> dec_input;
    dec_input.reserve(tgt.size() + 1);
    dec_input.push_back(kBosId);
    dec_input.insert(dec_input.end(), tgt.begin(), tgt.end());
    std::vector<int> targets(tgt.begin(), tgt.end());
    targets.push_back(kEosId);
    ad::Var logits = decoder_logits(g, bm, enc, pad_mask_of(src), dec_input);
    ad::Var ce = g.cross_entropy_mean(logits, targets, 0.0);
    const int n = static_cast<int>(targets.size());
    return {ce.scalar() * n, n};
}

double validation_loss(const SubModelView& view, const Corpus& val_corpus) {
    if (val_corpus.pairs.empty()) throw std::invalid_argument("validation_loss: empty corpus");
    double total = 0.0;
    long long tokens = 0;
    for (const auto& [src, tgt] : val_corpus.pairs) {
        auto [sum, n] = sentence_loss_sum(view, src, tgt);
        total += sum;
        tokens += n;
    }
    return total / static_cast<double>(tokens);
}

std::vector<Mat> compute_bank_gradients(const SuperWeights& bank, const SubConfig& cfg,
                                        const Corpus& probe, double label_smoothing) {
    if (probe.pairs.empty()) throw std::invalid_argument("compute_bank_gradients: empty probe");
    ad::Graph g(true);
    BoundModel bm = bind_model(g, bank, cfg, true);
    std::vector<SentenceRef> refs;
    refs.reserve(probe.pairs.size());
    for (const auto& [src, tgt] : probe.pairs) refs.push_back({src, tgt});
    ad::Var loss = batch_loss(g, bm, refs, label_smoothing);
    g.backward(loss);

    std::vector<Mat> grads;
    grads.reserve(bank.params.size());
    for (const Mat& p : bank.params) grads.push_back(Mat::Zero(p.rows(), p.cols()));
    for (const auto& p : bm.bound)
        grads[static_cast<std::size_t>(p.param_index)].topLeftCorner(p.rows, p.cols) +=
            p.var.grad();
    return grads;
}

namespace {

double probe_loss(const SuperWeights& bank, const SubConfig& cfg, const Corpus& probe) {
    ad::Graph g(false);
    BoundModel bm = bind_model(g, bank, cfg, false);
    std::vector<SentenceRef> refs;
    refs.reserve(probe.pairs.size());
    for (const auto& [src, tgt] : probe.pairs) refs.push_back({src, tgt});
    return batch_loss(g, bm, refs, 0.0).scalar();
}

// Config with every width doubled and one extra decoder layer: a bank built
// for it strictly contains cfg's slices, so untouched regions exist.
SubConfig scaled_up(const SubConfig& cfg) {
    SubConfig big = cfg;
    big.encoder_embed_dim *= 2;
    big.decoder_embed_dim *= 2;
    for (int& f : big.encoder_ffn_dims) f *= 2;
    for (int& f : big.decoder_ffn_dims) f *= 2;
    big.n_decoder_layers += 1;
    big.decoder_ffn_dims.push_back(big.decoder_ffn_dims.back());
    big.decoder_heads.push_back(big.decoder_heads.back());
    big.enc_dec_attn.push_back(big.enc_dec_attn.back());
    return big;
}

}  // namespace

GradCheckResult gradient_check(const SubConfig& cfg, const Corpus& probe_batch, int n_params,
                               std::uint64_t seed) {
    if (probe_batch.pairs.empty()) throw std::invalid_argument("gradient_check: empty probe batch");
    SuperWeights bank = init_exact(scaled_up(cfg), probe_batch.vocab_size, mix_seed(seed, 0x9C));

    ad::Graph g(true);
    BoundModel bm = bind_model(g, bank, cfg, true);
    std::vector<SentenceRef> refs;
    for (const auto& [src, tgt] : probe_batch.pairs) refs.push_back({src, tgt});
    ad::Var loss = batch_loss(g, bm, refs, 0.0);
    g.backward(loss);

    const double h = 1e-4;
    auto rng = make_rng(mix_seed(seed, 0xD1FF));
    GradCheckResult res;

    for (int k = 0; k < n_params; ++k) {
        const auto& p = bm.bound[pick_index(rng, bm.bound.size())];
        const auto r = static_cast<Eigen::Index>(pick_index(rng, static_cast<std::size_t>(p.rows)));
        const auto c = static_cast<Eigen::Index>(pick_index(rng, static_cast<std::size_t>(p.cols)));
        Mat& w = bank.params[static_cast<std::size_t>(p.param_index)];
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double lp = probe_loss(bank, cfg, probe_batch);
        w(r, c) = orig - h;
        const double lm = probe_loss(bank, cfg, probe_batch);
        w(r, c) = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double analytic = p.var.grad()(r, c);
        const double rel = std::abs(analytic - numeric) /
                           std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        res.max_rel_error = std::max(res.max_rel_error, rel);
        res.n_checked += 1;
    }

    // Coordinates outside the view's slices: the loss may not move at all.
    for (const auto& p : bm.bound) {
        Mat& w = bank.params[static_cast<std::size_t>(p.param_index)];
        if (w.rows() == p.rows && w.cols() == p.cols) continue;
        const Eigen::Index r = p.rows < w.rows() ? p.rows : 0;
        const Eigen::Index c = p.rows < w.rows() ? 0 : p.cols;
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double lp = probe_loss(bank, cfg, probe_batch);
        w(r, c) = orig - h;
        const double lm = probe_loss(bank, cfg, probe_batch);
        w(r, c) = orig;
        res.max_abs_outside = std::max(res.max_abs_outside, std::abs(lp - lm) / (2.0 * h));
        res.n_outside_checked += 1;
        if (res.n_outside_checked >= 20) break;
    }
    // Decoder layers beyond the view's depth are untouched entirely.
    if (bank.max_decoder_layers > cfg.n_decoder_layers) {
        Mat& w = bank.params[static_cast<std::size_t>(
            bank.dec_index(cfg.n_decoder_layers, DecSlot::wq))];
        const double orig = w(0, 0);
        w(0, 0) = orig + h;
        const double lp = probe_loss(bank, cfg, probe_batch);
        w(0, 0) = orig - h;
        const double lm = probe_loss(bank, cfg, probe_batch);
        w(0, 0) = orig;
        res.max_abs_outside = std::max(res.max_abs_outside, std::abs(lp - lm) / (2.0 * h));
        res.n_outside_checked += 1;
    }
    return res;
}

void save_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& r : log) {
        std::ostringstream hash;
        hash << "0x" << std::hex << r.config_hash;
        nlohmann::json j{{"step", r.step}, {"config_hash", hash.str()}, {"loss", r.loss}};
        out << j.dump() << "\n";
    }
}

TrainLog load_train_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    TrainLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        StepRecord r;
        r.step = j.at("step").get<int>();
        r.loss = j.at("loss").get<double>();
        r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
        log.push_back(r);
    }
    return log;
}

}  // namespace dynhat
