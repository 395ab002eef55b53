#include "dynhat/search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "dynhat/rng.hpp"

namespace dynhat {

namespace {

constexpr int kOffspringRetries = 64;
constexpr int kRejectionBudgetPerSlot = 200;

int pick_of(std::mt19937_64& rng, int a, int b) { return (rng() & 1) ? a : b; }

SubConfig crossover(std::mt19937_64& rng, const SubConfig& a, const SubConfig& b) {
    SubConfig c;
    c.encoder_embed_dim = pick_of(rng, a.encoder_embed_dim, b.encoder_embed_dim);
    c.decoder_embed_dim = pick_of(rng, a.decoder_embed_dim, b.decoder_embed_dim);
    for (std::size_t i = 0; i < a.encoder_ffn_dims.size(); ++i) {
        c.encoder_ffn_dims.push_back(pick_of(rng, a.encoder_ffn_dims[i], b.encoder_ffn_dims[i]));
        c.encoder_heads.push_back(pick_of(rng, a.encoder_heads[i], b.encoder_heads[i]));
    }
    c.n_decoder_layers = pick_of(rng, a.n_decoder_layers, b.n_decoder_layers);
    for (int i = 0; i < c.n_decoder_layers; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const bool in_a = i < a.n_decoder_layers;
        const bool in_b = i < b.n_decoder_layers;
        const SubConfig& donor = (in_a && in_b) ? ((rng() & 1) ? a : b) : (in_a ? a : b);
        // Per-gene donor choice when both parents have the layer.
        if (in_a && in_b) {
            c.decoder_ffn_dims.push_back(pick_of(rng, a.decoder_ffn_dims[idx], b.decoder_ffn_dims[idx]));
            c.decoder_heads.push_back(pick_of(rng, a.decoder_heads[idx], b.decoder_heads[idx]));
            c.enc_dec_attn.push_back(pick_of(rng, a.enc_dec_attn[idx], b.enc_dec_attn[idx]));
        } else {
            c.decoder_ffn_dims.push_back(donor.decoder_ffn_dims[idx]);
            c.decoder_heads.push_back(donor.decoder_heads[idx]);
            c.enc_dec_attn.push_back(donor.enc_dec_attn[idx]);
        }
    }
    return c;
}

SubConfig mutate(std::mt19937_64& rng, const DesignSpace& space, const SubConfig& src,
                 double prob) {
    auto flip = [&] { return (static_cast<double>(rng() >> 11) * 0x1.0p-53) < prob; };
    auto resample = [&](const std::vector<int>& choices) {
        return choices[pick_index(rng, choices.size())];
    };

    SubConfig c = src;
    if (flip()) c.encoder_embed_dim = resample(space.encoder_embed_choices);
    if (flip()) c.decoder_embed_dim = resample(space.decoder_embed_choices);
    for (std::size_t i = 0; i < c.encoder_ffn_dims.size(); ++i) {
        if (flip()) c.encoder_ffn_dims[i] = resample(space.ffn_dim_choices);
        if (flip()) c.encoder_heads[i] = resample(space.head_choices);
    }
    if (flip()) {
        const int new_layers = resample(space.decoder_layer_choices);
        if (new_layers < c.n_decoder_layers) {
            c.decoder_ffn_dims.resize(static_cast<std::size_t>(new_layers));
            c.decoder_heads.resize(static_cast<std::size_t>(new_layers));
            c.enc_dec_attn.resize(static_cast<std::size_t>(new_layers));
        } else {
            for (int i = c.n_decoder_layers; i < new_layers; ++i) {
                c.decoder_ffn_dims.push_back(resample(space.ffn_dim_choices));
                c.decoder_heads.push_back(resample(space.head_choices));
                c.enc_dec_attn.push_back(resample(space.enc_dec_attn_choices));
            }
        }
        c.n_decoder_layers = new_layers;
    }
    for (std::size_t i = 0; i < c.decoder_ffn_dims.size(); ++i) {
        if (flip()) c.decoder_ffn_dims[i] = resample(space.ffn_dim_choices);
        if (flip()) c.decoder_heads[i] = resample(space.head_choices);
        if (flip()) c.enc_dec_attn[i] = resample(space.enc_dec_attn_choices);
    }
    return c;
}

struct Scored {
    SubConfig cfg;
    double loss;
    std::string key;  // canonical serialization, the deterministic tie-break
};

class LossCache {
  public:
    explicit LossCache(const LossFn& fn) : fn_(fn) {}
    double operator()(const SubConfig& cfg) {
        const std::string key = canonical_config_json(cfg);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const double v = fn_(cfg);
        cache_.emplace(key, v);
        return v;
    }

  private:
    const LossFn& fn_;
    std::unordered_map<std::string, double> cache_;
};

}  // namespace

double analytic_surrogate_loss(const SubConfig& c) {
    double ffn = 0.0, attended = 0.0;
    for (int f : c.encoder_ffn_dims) ffn += f;
    for (int f : c.decoder_ffn_dims) ffn += f;
    for (int a : c.enc_dec_attn) attended += attended_encoder_layers(a);
    return 6.0 - 0.35 * c.n_decoder_layers - 0.3 * (ffn / 36864.0) -
           0.2 * ((c.encoder_embed_dim + c.decoder_embed_dim) / 1280.0) - 0.02 * attended;
}

void check_settings(const SearchSettings& s) {
    auto frac = [](double f) { return f > 0.0 && f <= 1.0; };
    if (s.population_size < 4)
        throw std::invalid_argument("SearchSettings: population_size must be >= 4");
    if (s.n_iterations < 1) throw std::invalid_argument("SearchSettings: n_iterations must be >= 1");
    if (!frac(s.parent_fraction))
        throw std::invalid_argument("SearchSettings: parent_fraction must be in (0,1]");
    if (!(s.mutation_prob > 0.0 && s.mutation_prob < 1.0))
        throw std::invalid_argument("SearchSettings: mutation_prob must be in (0,1)");
    if (!frac(s.crossover_fraction) || !frac(s.mutation_fraction) ||
        s.crossover_fraction + s.mutation_fraction > 1.0 + 1e-12)
        throw std::invalid_argument(
            "SearchSettings: crossover_fraction + mutation_fraction must be in (0,1]");
}

SearchResult evolutionary_search(const DesignSpace& space, double constraint_ms,
                                 const PredictFn& predict, const LossFn& loss,
                                 const SearchSettings& settings) {
    check_settings(settings);
    if (auto v = validate_space(space); !v.empty())
        throw std::invalid_argument("evolutionary_search: invalid space: " + v.front());

    auto rng = make_rng(mix_seed(settings.seed, 0xE701));
    LossCache cached_loss(loss);

    auto feasible = [&](const SubConfig& c) { return predict(c) <= constraint_ms; };
    auto sample_feasible = [&](int budget) -> std::optional<SubConfig> {
        for (int i = 0; i < budget; ++i) {
            SubConfig c = sample_uniform(space, rng);
            if (feasible(c)) return c;
        }
        return std::nullopt;
    };

    // Seed population by rejection sampling; an empty result is the explicit
    // infeasibility signal.
    std::vector<Scored> population;
    const int budget = settings.population_size * kRejectionBudgetPerSlot;
    int spent = 0;
    while (static_cast<int>(population.size()) < settings.population_size && spent < budget) {
        SubConfig c = sample_uniform(space, rng);
        ++spent;
        if (feasible(c)) population.push_back({c, cached_loss(c), canonical_config_json(c)});
    }
    if (population.empty()) return SearchResult{};

    auto by_fitness = [](const Scored& a, const Scored& b) {
        return a.loss != b.loss ? a.loss < b.loss : a.key < b.key;
    };

    SearchResult result;
    result.feasible = true;
    bool has_best = false;
    std::string best_key;
    auto consider = [&](const Scored& s) {
        if (!has_best || s.loss < result.best_loss ||
            (s.loss == result.best_loss && s.key < best_key)) {
            has_best = true;
            result.best = s.cfg;
            result.best_loss = s.loss;
            best_key = s.key;
        }
    };
    for (const auto& s : population) consider(s);

    const int n_parents =
        std::max(1, static_cast<int>(std::lround(settings.parent_fraction * settings.population_size)));
    const int n_cross =
        static_cast<int>(std::lround(settings.crossover_fraction * settings.population_size));
    const int n_mut =
        static_cast<int>(std::lround(settings.mutation_fraction * settings.population_size));

    for (int gen = 0; gen < settings.n_iterations; ++gen) {
        std::sort(population.begin(), population.end(), by_fitness);
        const int keep = std::min<int>(n_parents, static_cast<int>(population.size()));
        std::vector<Scored> next(population.begin(), population.begin() + keep);

        auto add_offspring = [&](const std::function<SubConfig()>& make) {
            for (int attempt = 0; attempt < kOffspringRetries; ++attempt) {
                SubConfig c = make();
                if (feasible(c)) {
                    next.push_back({c, cached_loss(c), canonical_config_json(c)});
                    return;
                }
            }
            if (auto c = sample_feasible(kOffspringRetries)) {
                next.push_back({*c, cached_loss(*c), canonical_config_json(*c)});
            } else {
                next.push_back(next[pick_index(rng, static_cast<std::size_t>(keep))]);
            }
        };

        for (int i = 0; i < n_cross && static_cast<int>(next.size()) < settings.population_size; ++i) {
            add_offspring([&] {
                const auto& pa = population[pick_index(rng, static_cast<std::size_t>(keep))];
                const auto& pb = population[pick_index(rng, static_cast<std::size_t>(keep))];
                return crossover(rng, pa.cfg, pb.cfg);
            });
        }
        for (int i = 0; i < n_mut && static_cast<int>(next.size()) < settings.population_size; ++i) {
            add_offspring([&] {
                const auto& p = population[pick_index(rng, static_cast<std::size_t>(keep))];
                return mutate(rng, space, p.cfg, settings.mutation_prob);
            });
        }
        while (static_cast<int>(next.size()) < settings.population_size) {
            if (auto c = sample_feasible(kOffspringRetries))
                next.push_back({*c, cached_loss(*c), canonical_config_json(*c)});
            else
                next.push_back(next[pick_index(rng, next.size())]);
        }

        population = std::move(next);
        for (const auto& s : population) consider(s);
        result.history.push_back(result.best_loss);
    }

    result.predicted_ms = predict(result.best);
    return result;
}

SearchResult exhaustive_search(const DesignSpace& space, double constraint_ms,
                               const PredictFn& predict, const LossFn& loss) {
    if (auto v = validate_space(space); !v.empty())
        throw std::invalid_argument("exhaustive_search: invalid space: " + v.front());
    if (cardinality(space) > 100000)
        throw std::invalid_argument("exhaustive_search: space exceeds 1e5 configurations");

    SearchResult result;
    std::string best_key;
    for_each_config(space, [&](const SubConfig& c) {
        if (predict(c) > constraint_ms) return true;
        const double l = loss(c);
        const std::string key = canonical_config_json(c);
        if (!result.feasible || l < result.best_loss ||
            (l == result.best_loss && key < best_key)) {
            result.feasible = true;
            result.best = c;
            result.best_loss = l;
            best_key = key;
        }
        return true;
    });
    if (result.feasible) result.predicted_ms = predict(result.best);
    return result;
}

OperatingLibrary build_operating_library(const DesignSpace& space,
                                         const std::vector<double>& constraints_ms,
                                         const PredictFn& predict, const LossFn& loss,
                                         const MeasureFn& measure,
                                         const SearchSettings& settings) {
    if (constraints_ms.empty())
        throw std::invalid_argument("build_operating_library: no constraints given");

    OperatingLibrary lib;
    for (std::size_t k = 0; k < constraints_ms.size(); ++k) {
        SearchSettings per = settings;
        per.seed = mix_seed(settings.seed, 0x11B + k);
        SearchResult r = evolutionary_search(space, constraints_ms[k], predict, loss, per);
        if (!r.feasible) {
            lib.infeasible_constraints.push_back(constraints_ms[k]);
            continue;
        }
        const bool duplicate = std::any_of(lib.points.begin(), lib.points.end(),
                                           [&](const OperatingPoint& p) { return p.config == r.best; });
        if (duplicate) continue;
        OperatingPoint p;
        p.config = r.best;
        p.constraint_ms = constraints_ms[k];
        p.predicted_ms = r.predicted_ms;
        p.measured_latency_ms = measure(r.best);
        p.val_loss = r.best_loss;
        lib.points.push_back(std::move(p));
    }
    if (lib.points.empty())
        throw std::runtime_error("build_operating_library: every constraint was infeasible");
    std::sort(lib.points.begin(), lib.points.end(),
              [](const OperatingPoint& a, const OperatingPoint& b) {
                  return a.measured_latency_ms < b.measured_latency_ms;
              });
    return lib;
}

}  // namespace dynhat
