// dynhat command-line pipeline: corpus generation, shared-weight training,
// latency collection, predictor fitting, constrained search, space
// reduction, evaluation, and the long-running switching controller.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dynhat/corpus.hpp"
#include "dynhat/design_space.hpp"
#include "dynhat/elastic_model.hpp"
#include "dynhat/eval_metrics.hpp"
#include "dynhat/latency.hpp"
#include "dynhat/manifest.hpp"
#include "dynhat/operating_library.hpp"
#include "dynhat/rng.hpp"
#include "dynhat/runtime.hpp"
#include "dynhat/search.hpp"
#include "dynhat/training.hpp"

namespace fs = std::filesystem;
using namespace dynhat;

namespace {

Corpus load_split(const std::string& dir, const std::string& split) {
    const int vocab = load_vocab_file((fs::path(dir) / "vocab.json").string());
    return load_corpus_file((fs::path(dir) / (split + ".jsonl")).string(), vocab, split);
}

MeasureProtocol protocol_from(int repeats, double trim, int sentence_len) {
    MeasureProtocol p;
    p.repeats = repeats;
    p.trim_frac = trim;
    p.sentence_len = sentence_len;
    return p;
}

struct GenCorpusArgs {
    std::string out_dir;
    int vocab_size = 64;
    int n_train = 2000, n_valid = 200, n_test = 200;
    int len_min = 4, len_max = 12;
    std::uint64_t seed = 1;
};

int cmd_gen_corpus(const GenCorpusArgs& a) {
    fs::create_directories(a.out_dir);
    const auto splits = generate_reversal_splits(a.vocab_size, a.n_train, a.n_valid, a.n_test,
                                                 a.len_min, a.len_max, a.seed);
    save_corpus_file(splits.train, (fs::path(a.out_dir) / "train.jsonl").string());
    save_corpus_file(splits.valid, (fs::path(a.out_dir) / "valid.jsonl").string());
    save_corpus_file(splits.test, (fs::path(a.out_dir) / "test.jsonl").string());
    save_vocab_file(a.vocab_size, (fs::path(a.out_dir) / "vocab.json").string());
    std::cout << nlohmann::json{{"out_dir", a.out_dir},
                                {"train", a.n_train},
                                {"valid", a.n_valid},
                                {"test", a.n_test}}
                     .dump()
              << "\n";
    return 0;
}

struct TrainArgs {
    std::string space_path, corpus_dir, out_path, log_path;
    TrainSettings settings;
};

int cmd_train_super(const TrainArgs& a) {
    const auto space = load_space_file(a.space_path);
    if (auto v = validate_space(space); !v.empty())
        throw std::invalid_argument("invalid space: " + v.front());
    const auto corpus = load_split(a.corpus_dir, "train");

    SuperWeights bank = init_super(space, corpus.vocab_size, mix_seed(a.settings.seed, 0x1417));
    const TrainLog log = train_super(bank, space, corpus, a.settings);
    save_checkpoint(bank, a.out_path);
    if (!a.log_path.empty()) save_train_log(log, a.log_path);

    const auto valid = load_split(a.corpus_dir, "valid");
    const double val =
        validation_loss(inherit(bank, sample_uniform(space, mix_seed(a.settings.seed, 0xEA))), valid);
    std::cout << nlohmann::json{{"bank", a.out_path},
                                {"steps", a.settings.steps},
                                {"final_train_loss", log.empty() ? 0.0 : log.back().loss},
                                {"sampled_config_val_loss", val}}
                     .dump()
              << "\n";
    return 0;
}

struct CollectArgs {
    std::string space_path, out_path, hardware = "sim-gpu", bank_path;
    int n_samples = 64;
    std::uint64_t seed = 1;
    int repeats = 300;
    double trim = 0.10;
    int sentence_len = 30;
    double noise_sd = 0.0;
};

int cmd_collect_latency(const CollectArgs& a) {
    const auto space = load_space_file(a.space_path);
    const auto protocol = protocol_from(a.repeats, a.trim, a.sentence_len);

    MeasureFn measure;
    std::shared_ptr<SuperWeights> bank;
    if (a.hardware == "real") {
        if (a.bank_path.empty())
            throw std::invalid_argument("collect-latency on real hardware needs --bank");
        bank = std::make_shared<SuperWeights>(load_checkpoint(a.bank_path));
        measure = [&, bank](const SubConfig& cfg) {
            const auto view = inherit(*bank, cfg);
            return measure_model_latency(make_view_runner(view, a.seed), protocol);
        };
    } else {
        CostModel model = cost_model_by_id(a.hardware);
        model.noise_sd_ms = a.noise_sd;
        measure = [model, protocol, seed = a.seed](const SubConfig& cfg) {
            return measure_model_latency(make_cost_model_runner(model, cfg, seed), protocol);
        };
    }

    const auto report = build_latency_dataset(space, a.n_samples, measure, a.seed, a.hardware);
    save_latency_dataset(report.samples, a.out_path);
    std::cout << nlohmann::json{{"dataset", a.out_path},
                                {"n_samples", report.samples.size()},
                                {"n_failed", report.n_failed}}
                     .dump()
              << "\n";
    return 0;
}

struct FitArgs {
    std::string dataset_path, out_path;
};

int cmd_fit_predictor(const FitArgs& a) {
    const auto dataset = load_latency_dataset(a.dataset_path);
    const auto p = fit_predictor(dataset);
    save_predictor(p, a.out_path);
    std::cout << nlohmann::json{{"predictor", a.out_path},
                                {"heldout_rmse", p.heldout_rmse},
                                {"ridge_fallback", p.ridge_fallback}}
                     .dump()
              << "\n";
    return 0;
}

struct SearchArgs {
    std::string space_path, out_path, hardware = "sim-gpu";
    std::string predictor_path, bank_path, corpus_dir;
    std::vector<double> constraints;
    SearchSettings settings;
    bool with_bleu = false;
    int bleu_sentences = 64;
    int max_len = 64;
    int repeats = 300;
    double trim = 0.10;
    int sentence_len = 30;
};

int cmd_search(const SearchArgs& a) {
    const auto space = load_space_file(a.space_path);
    if (a.constraints.empty()) throw std::invalid_argument("search needs --constraints");

    // Predictor: from file, or fitted on the fly from the simulated device.
    LatencyPredictor predictor;
    if (!a.predictor_path.empty()) {
        predictor = load_predictor(a.predictor_path);
    } else {
        if (a.hardware == "real")
            throw std::invalid_argument("search on real hardware needs --predictor");
        const CostModel model = cost_model_by_id(a.hardware);
        const auto data = build_latency_dataset(
            space, 64, [&](const SubConfig& c) { return model.analytic_ms(c); },
            mix_seed(a.settings.seed, 0xDA7A), a.hardware);
        predictor = fit_predictor(data.samples);
    }
    const PredictFn predict = [&](const SubConfig& c) { return predictor.predict(c); };

    // Fitness: inherited validation loss when a trained bank is given,
    // otherwise the analytic surrogate.
    std::shared_ptr<SuperWeights> bank;
    Corpus valid;
    LossFn loss;
    if (!a.bank_path.empty()) {
        if (a.corpus_dir.empty())
            throw std::invalid_argument("search with --bank needs --corpus-dir for validation loss");
        bank = std::make_shared<SuperWeights>(load_checkpoint(a.bank_path));
        valid = load_split(a.corpus_dir, "valid");
        auto cache = std::make_shared<std::map<std::string, double>>();
        loss = [&, bank, cache](const SubConfig& cfg) {
            const std::string key = canonical_config_json(cfg);
            if (auto it = cache->find(key); it != cache->end()) return it->second;
            const double v = validation_loss(inherit(*bank, cfg), valid);
            cache->emplace(key, v);
            return v;
        };
    } else {
        loss = analytic_surrogate_loss;
    }

    const auto protocol = protocol_from(a.repeats, a.trim, a.sentence_len);
    MeasureFn measure;
    if (a.hardware == "real") {
        measure = [&, bank](const SubConfig& cfg) {
            if (!bank) throw std::invalid_argument("real measurement needs --bank");
            return measure_model_latency(make_view_runner(inherit(*bank, cfg), a.settings.seed),
                                         protocol);
        };
    } else {
        const CostModel model = cost_model_by_id(a.hardware);
        measure = [model, protocol, seed = a.settings.seed](const SubConfig& cfg) {
            return measure_model_latency(make_cost_model_runner(model, cfg, seed), protocol);
        };
    }

    OperatingLibrary lib =
        build_operating_library(space, a.constraints, predict, loss, measure, a.settings);

    if (a.with_bleu && bank) {
        Corpus test = load_split(a.corpus_dir, "test");
        if (static_cast<int>(test.pairs.size()) > a.bleu_sentences)
            test.pairs.resize(static_cast<std::size_t>(a.bleu_sentences));
        for (auto& p : lib.points) {
            const auto view = inherit(*bank, p.config);
            std::vector<std::vector<int>> cands, refs;
            for (const auto& [src, tgt] : test.pairs) {
                cands.push_back(greedy_translate(view, src, a.max_len));
                refs.push_back(tgt);
            }
            p.bleu = bleu_corpus(cands, refs);
        }
    }

    save_library(lib, a.out_path);
    nlohmann::json summary{{"library", a.out_path},
                           {"points", lib.points.size()},
                           {"infeasible_constraints", lib.infeasible_constraints}};
    std::cout << summary.dump() << "\n";
    return 0;
}

struct ReduceArgs {
    std::string space_path, library_path, out_path;
    int top_k = 5;
};

int cmd_reduce_space(const ReduceArgs& a) {
    const auto space = load_space_file(a.space_path);
    const auto lib = load_library(a.library_path);
    if (a.top_k < 1) throw std::invalid_argument("--top-k must be >= 1");

    auto points = lib.points;
    std::sort(points.begin(), points.end(),
              [](const OperatingPoint& x, const OperatingPoint& y) { return x.val_loss < y.val_loss; });
    if (static_cast<int>(points.size()) > a.top_k)
        points.resize(static_cast<std::size_t>(a.top_k));
    std::vector<SubConfig> top;
    top.reserve(points.size());
    for (const auto& p : points) top.push_back(p.config);

    const auto reduced = reduce_space(space, top);
    save_space_file(reduced, a.out_path);
    std::cout << nlohmann::json{{"reduced_space", a.out_path},
                                {"top_k_used", top.size()},
                                {"original_cardinality", cardinality(space).str()},
                                {"reduced_cardinality", cardinality(reduced).str()}}
                     .dump()
              << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string bank_path, config_path, corpus_dir, split = "test", out_path;
    int max_len = 64;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto bank = load_checkpoint(a.bank_path);
    const auto cfg = load_config_file(a.config_path);
    const auto corpus = load_split(a.corpus_dir, a.split);
    const auto view = inherit(bank, cfg);

    std::vector<std::vector<int>> cands, refs;
    for (const auto& [src, tgt] : corpus.pairs) {
        cands.push_back(greedy_translate(view, src, a.max_len));
        refs.push_back(tgt);
    }
    EvalReport report;
    report.bleu = bleu_corpus(cands, refs);
    report.token_accuracy = token_accuracy(cands, refs);
    report.n_sentences = static_cast<int>(corpus.pairs.size());

    nlohmann::json j = report;
    if (!a.out_path.empty()) {
        std::ofstream out(a.out_path, std::ios::binary);
        out << j.dump(2) << "\n";
    }
    std::cout << j.dump() << "\n";
    return 0;
}

struct RunArgs {
    std::string bank_path, library_path, event_log_path;
    int max_len = 64;
};

int cmd_run(const RunArgs& a) {
    auto bank = std::make_shared<const SuperWeights>(load_checkpoint(a.bank_path));
    Controller controller(bank, load_library(a.library_path));

    std::unique_ptr<std::ofstream> event_log;
    if (!a.event_log_path.empty())
        event_log = std::make_unique<std::ofstream>(a.event_log_path, std::ios::binary);
    auto emit_event = [&](const ControllerEvent& e) {
        nlohmann::json j = e;
        if (event_log) {
            *event_log << j.dump() << "\n";
            event_log->flush();
        }
        return j;
    };

    std::string line;
    while (std::getline(std::cin, line)) {
        std::istringstream in(line);
        std::string cmd;
        in >> cmd;
        if (cmd.empty()) continue;
        try {
            if (cmd == "set-constraint") {
                double ms;
                if (!(in >> ms)) throw std::invalid_argument("usage: set-constraint <ms>");
                const auto e = controller.handle_constraint_event(ms);
                std::cout << emit_event(e).dump() << "\n";
            } else if (cmd == "translate") {
                std::vector<int> tokens;
                int t;
                while (in >> t) tokens.push_back(t);
                const auto out = controller.translate_current(tokens, a.max_len);
                for (std::size_t i = 0; i < out.size(); ++i)
                    std::cout << (i ? " " : "") << out[i];
                std::cout << "\n";
            } else if (cmd == "stats") {
                const auto s = controller.stats();
                std::cout << nlohmann::json{{"n_events", s.n_events},
                                            {"n_switches", s.n_switches},
                                            {"n_violations", s.n_violations},
                                            {"active_measured_ms", s.active_measured_ms},
                                            {"active_val_loss", s.active_val_loss},
                                            {"active_decoder_layers", s.active_decoder_layers}}
                                 .dump()
                          << "\n";
            } else if (cmd == "quit") {
                break;
            } else {
                throw std::invalid_argument("unknown command: " + cmd);
            }
        } catch (const std::exception& e) {
            std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        }
        std::cout.flush();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Elastic-transformer pipeline: train one shared-weight bank, measure and "
                 "predict sub-model latency, search latency-constrained operating points, and "
                 "switch between them at run time."};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    GenCorpusArgs gen;
    auto* c_gen = app.add_subcommand("gen-corpus", "Generate the synthetic reversal task");
    c_gen->add_option("--out-dir", gen.out_dir)->required();
    c_gen->add_option("--vocab-size", gen.vocab_size);
    c_gen->add_option("--n-train", gen.n_train);
    c_gen->add_option("--n-valid", gen.n_valid);
    c_gen->add_option("--n-test", gen.n_test);
    c_gen->add_option("--len-min", gen.len_min);
    c_gen->add_option("--len-max", gen.len_max);
    c_gen->add_option("--seed", gen.seed);

    TrainArgs train;
    auto* c_train = app.add_subcommand("train-super", "Train the shared-weight bank");
    c_train->add_option("--space", train.space_path)->required();
    c_train->add_option("--corpus-dir", train.corpus_dir)->required();
    c_train->add_option("--out", train.out_path)->required();
    c_train->add_option("--log", train.log_path);
    c_train->add_option("--steps", train.settings.steps);
    c_train->add_option("--batch-size", train.settings.batch_size);
    c_train->add_option("--learning-rate", train.settings.learning_rate);
    c_train->add_option("--warmup", train.settings.warmup_steps);
    c_train->add_option("--label-smoothing", train.settings.label_smoothing);
    c_train->add_option("--clip-norm", train.settings.gradient_clip_norm);
    c_train->add_option("--seed", train.settings.seed);

    CollectArgs collect;
    auto* c_collect = app.add_subcommand("collect-latency", "Measure uniform configs");
    c_collect->add_option("--space", collect.space_path)->required();
    c_collect->add_option("--out", collect.out_path)->required();
    c_collect->add_option("--hardware", collect.hardware)
        ->check(CLI::IsMember({"real", "sim-gpu", "sim-cpu"}));
    c_collect->add_option("--bank", collect.bank_path);
    c_collect->add_option("--n-samples", collect.n_samples);
    c_collect->add_option("--seed", collect.seed);
    c_collect->add_option("--repeats", collect.repeats);
    c_collect->add_option("--trim", collect.trim);
    c_collect->add_option("--sentence-len", collect.sentence_len);
    c_collect->add_option("--noise-sd", collect.noise_sd);

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit-predictor", "Fit the linear latency predictor");
    c_fit->add_option("--dataset", fit.dataset_path)->required();
    c_fit->add_option("--out", fit.out_path)->required();

    SearchArgs search;
    auto* c_search = app.add_subcommand("search", "Search operating points under budgets");
    c_search->add_option("--space", search.space_path)->required();
    c_search->add_option("--constraints", search.constraints)->required()->delimiter(',');
    c_search->add_option("--out", search.out_path)->required();
    c_search->add_option("--hardware", search.hardware)
        ->check(CLI::IsMember({"real", "sim-gpu", "sim-cpu"}));
    c_search->add_option("--predictor", search.predictor_path);
    c_search->add_option("--bank", search.bank_path);
    c_search->add_option("--corpus-dir", search.corpus_dir);
    c_search->add_option("--seed", search.settings.seed);
    c_search->add_option("--population", search.settings.population_size);
    c_search->add_option("--iterations", search.settings.n_iterations);
    c_search->add_option("--parent-fraction", search.settings.parent_fraction);
    c_search->add_option("--mutation-prob", search.settings.mutation_prob);
    c_search->add_option("--crossover-fraction", search.settings.crossover_fraction);
    c_search->add_option("--mutation-fraction", search.settings.mutation_fraction);
    c_search->add_flag("--bleu", search.with_bleu, "Also score BLEU per point (needs --bank)");
    c_search->add_option("--bleu-sentences", search.bleu_sentences);
    c_search->add_option("--max-len", search.max_len);
    c_search->add_option("--repeats", search.repeats);
    c_search->add_option("--trim", search.trim);
    c_search->add_option("--sentence-len", search.sentence_len);

    ReduceArgs reduce;
    auto* c_reduce = app.add_subcommand("reduce-space", "Shrink the space to a library's top configs");
    c_reduce->add_option("--space", reduce.space_path)->required();
    c_reduce->add_option("--library", reduce.library_path)->required();
    c_reduce->add_option("--out", reduce.out_path)->required();
    c_reduce->add_option("--top-k", reduce.top_k);

    EvaluateArgs evaluate;
    auto* c_eval = app.add_subcommand("evaluate", "BLEU and token accuracy for one config");
    c_eval->add_option("--bank", evaluate.bank_path)->required();
    c_eval->add_option("--config", evaluate.config_path)->required();
    c_eval->add_option("--corpus-dir", evaluate.corpus_dir)->required();
    c_eval->add_option("--split", evaluate.split);
    c_eval->add_option("--max-len", evaluate.max_len);
    c_eval->add_option("--out", evaluate.out_path);

    RunArgs run;
    auto* c_run = app.add_subcommand("run", "Long-running switching controller on stdin commands");
    c_run->add_option("--bank", run.bank_path)->required();
    c_run->add_option("--library", run.library_path)->required();
    c_run->add_option("--event-log", run.event_log_path);
    c_run->add_option("--max-len", run.max_len);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_gen) return cmd_gen_corpus(gen);
        if (*c_train) return cmd_train_super(train);
        if (*c_collect) return cmd_collect_latency(collect);
        if (*c_fit) return cmd_fit_predictor(fit);
        if (*c_search) return cmd_search(search);
        if (*c_reduce) return cmd_reduce_space(reduce);
        if (*c_eval) return cmd_evaluate(evaluate);
        if (*c_run) return cmd_run(run);
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
