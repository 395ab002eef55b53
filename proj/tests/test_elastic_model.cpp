#include "doctest.h"

#include <fstream>
#include <set>

#include "dynhat/elastic_model.hpp"
#include "dynhat/rng.hpp"

#include "testutil.hpp"

using namespace dynhat;

namespace {

Mat teacher_logits(const SubModelView& view, const std::vector<int>& src,
                   const std::vector<int>& dec_input) {
    ad::Graph g(false);
    BoundModel bm = bind_model(g, view.bank(), view.config(), false);
    auto enc = encoder_forward(g, bm, src);
    return Mat(decoder_logits(g, bm, enc, pad_mask_of(src), dec_input).value());
}

std::vector<int> random_tokens(std::mt19937_64& rng, int len, int vocab) {
    std::vector<int> t(static_cast<std::size_t>(len));
    for (int& x : t)
        x = kNumReservedIds + static_cast<int>(pick_index(rng, static_cast<std::size_t>(vocab - kNumReservedIds)));
    return t;
}

}  // namespace

TEST_SUITE("elastic_model") {

TEST_CASE("init is deterministic and seed-sensitive") {
    const auto s = testutil::tiny_space();
    const auto a = init_super(s, 16, 5);
    const auto b = init_super(s, 16, 5);
    const auto c = init_super(s, 16, 6);
    CHECK(bank_checksum(a) == bank_checksum(b));
    CHECK(bank_checksum(a) != bank_checksum(c));
}

TEST_CASE("init statistics: zero mean within 4 sigma, gains one, biases zero") {
    const auto s = testutil::train_space();
    const auto bank = init_super(s, 64, 11);

    // weight matrices: mean of n draws with sd 1/sqrt(fan_in)
    auto check_mean = [&](int index) {
        const Mat& m = bank.params[static_cast<std::size_t>(index)];
        const double sd = 1.0 / std::sqrt(static_cast<double>(
            index == bank.embedding_index() ? m.cols() : m.rows()));
        const double mean = m.mean();
        CHECK(std::abs(mean) < 4.0 * sd / std::sqrt(static_cast<double>(m.size())));
    };
    check_mean(bank.embedding_index());
    check_mean(bank.enc_index(0, EncSlot::wq));
    check_mean(bank.enc_index(1, EncSlot::w1));
    check_mean(bank.dec_index(0, DecSlot::ck));
    check_mean(bank.dec_index(5, DecSlot::w2));

    CHECK((bank.params[static_cast<std::size_t>(bank.enc_index(0, EncSlot::ln_attn_gain))].array() == 1.0).all());
    CHECK((bank.params[static_cast<std::size_t>(bank.dec_index(2, DecSlot::ln_ffn_bias))].array() == 0.0).all());
}

TEST_CASE("init rejects tiny vocabularies") {
    CHECK_THROWS_AS(init_super(testutil::tiny_space(), 3, 1), std::invalid_argument);
}

TEST_CASE("all-maxima config covers the whole bank") {
    const auto s = testutil::tiny_space();
    const auto bank = init_super(s, 16, 1);
    SubConfig top;
    top.encoder_embed_dim = 16;
    top.decoder_embed_dim = 16;
    top.encoder_ffn_dims = {32, 32};
    top.encoder_heads = {4, 4};
    top.n_decoder_layers = 2;
    top.decoder_ffn_dims = {32, 32};
    top.decoder_heads = {4, 4};
    top.enc_dec_attn = {1, 1};

    std::int64_t bank_scalars = 0;
    for (const Mat& m : bank.params) bank_scalars += m.size();
    CHECK(param_count(top, 16) == bank_scalars);
}

TEST_CASE("inherit validates against bank capacities") {
    const auto bank = init_super(testutil::tiny_space(), 16, 1);
    auto cfg = testutil::tiny_config();
    CHECK_NOTHROW(inherit(bank, cfg));
    cfg.encoder_embed_dim = 32;  // above cap
    CHECK_THROWS_AS(inherit(bank, cfg), std::invalid_argument);
    cfg = testutil::tiny_config();
    cfg.n_decoder_layers = 3;
    cfg.decoder_ffn_dims = {16, 16, 16};
    cfg.decoder_heads = {2, 2, 2};
    cfg.enc_dec_attn = {-1, -1, -1};
    CHECK_THROWS_AS(inherit(bank, cfg), std::invalid_argument);
}

TEST_CASE("view forward equals standalone sliced-copy forward") {
    const auto s = testutil::tiny_space();
    const auto bank = init_super(s, 16, 21);
    auto rng = make_rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const auto cfg = sample_uniform(s, static_cast<std::uint64_t>(300 + trial));
        const auto view = inherit(bank, cfg);
        const auto copy = copy_standalone(bank, cfg);
        const auto copy_view = inherit(copy, cfg);

        const auto src = random_tokens(rng, 4 + trial % 4, 16);
        const auto enc_a = encode_source(view, src);
        const auto enc_b = encode_source(copy_view, src);
        REQUIRE(enc_a.size() == enc_b.size());
        for (std::size_t l = 0; l < enc_a.size(); ++l)
            CHECK((enc_a[l] - enc_b[l]).cwiseAbs().maxCoeff() < 1e-6);

        const std::vector<int> dec_input = {kBosId, src[0], src[1]};
        const Mat la = teacher_logits(view, src, dec_input);
        const Mat lb = teacher_logits(copy_view, src, dec_input);
        CHECK((la - lb).cwiseAbs().maxCoeff() < 1e-6);

        CHECK(greedy_translate(view, src, 8) == greedy_translate(copy_view, src, 8));
    }
}

TEST_CASE("inherit copies no weights and mutates nothing") {
    const auto bank = init_super(testutil::tiny_space(), 16, 3);
    const auto before = bank_checksum(bank);
    for (int i = 0; i < 100; ++i)
        inherit(bank, sample_uniform(testutil::tiny_space(), static_cast<std::uint64_t>(i)));
    CHECK(bank_checksum(bank) == before);
}

TEST_CASE("encode_source shapes and layer count") {
    const auto bank = init_super(testutil::tiny_space(), 16, 4);
    const auto view = inherit(bank, testutil::tiny_config());
    const auto outs = encode_source(view, std::vector<int>{5});
    REQUIRE(outs.size() == 2);  // encoder_layers of the space
    for (const auto& m : outs) {
        CHECK(m.rows() == 1);
        CHECK(m.cols() == 8);
        CHECK(m.allFinite());
    }
}

TEST_CASE("six per-layer outputs on a six-layer space") {
    DesignSpace s = testutil::tiny_space();
    s.encoder_layers = 6;
    s.enc_dec_attn_choices = {-1, 1, 2};
    const auto bank = init_super(s, 16, 4);
    const auto cfg = sample_uniform(s, 9);
    const auto outs = encode_source(inherit(bank, cfg), std::vector<int>{5, 6, 7});
    CHECK(outs.size() == 6);
}

TEST_CASE("position encodings break permutation symmetry") {
    const auto bank = init_super(testutil::tiny_space(), 16, 5);
    const auto view = inherit(bank, testutil::tiny_config());
    const auto a = encode_source(view, std::vector<int>{5, 6, 7});
    const auto b = encode_source(view, std::vector<int>{7, 6, 5});
    CHECK((a.back() - b.back()).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("all-pad input stays finite under masking") {
    const auto bank = init_super(testutil::tiny_space(), 16, 6);
    const auto view = inherit(bank, testutil::tiny_config());
    const auto outs = encode_source(view, std::vector<int>{kPadId, kPadId, kPadId});
    for (const auto& m : outs) CHECK(m.allFinite());
}

TEST_CASE("masked-positions oracle: trailing pads do not change real positions") {
    const auto bank = init_super(testutil::tiny_space(), 16, 7);
    const auto view = inherit(bank, testutil::tiny_config());
    const std::vector<int> bare = {5, 9, 12};
    const std::vector<int> padded = {5, 9, 12, kPadId, kPadId};
    const auto a = encode_source(view, bare);
    const auto b = encode_source(view, padded);
    for (std::size_t l = 0; l < a.size(); ++l)
        CHECK((a[l] - b[l].topRows(3)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("attention probes: rows sum to one, masks respected, causality") {
    const auto bank = init_super(testutil::tiny_space(), 16, 8);
    const auto view = inherit(bank, testutil::tiny_config());

    AttentionProbe enc_probe;
    const std::vector<int> src = {5, 9, kPadId, kPadId};
    encode_source(view, src, &enc_probe);
    REQUIRE(!enc_probe.weights.empty());
    for (const Mat& w : enc_probe.weights) {
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
        // pad keys are columns 2..3
        CHECK(w.col(2).maxCoeff() < 1e-9);
        CHECK(w.col(3).maxCoeff() < 1e-9);
    }

    // decoder: causal self-attention plus cross-attention over tiled memory
    ad::Graph g(false);
    BoundModel bm = bind_model(g, view.bank(), view.config(), false);
    auto enc = encoder_forward(g, bm, src);
    AttentionProbe dec_probe;
    const std::vector<int> dec_input = {kBosId, 5, 6};
    decoder_logits(g, bm, enc, pad_mask_of(src), dec_input, &dec_probe);
    REQUIRE(!dec_probe.weights.empty());
    for (const Mat& w : dec_probe.weights) {
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
        if (w.cols() == static_cast<Eigen::Index>(dec_input.size())) {
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = i + 1; j < w.cols(); ++j) CHECK(w(i, j) < 1e-9);
        } else {
            // cross memory tiles the source pad mask per attended layer
            const auto s_len = static_cast<Eigen::Index>(src.size());
            for (Eigen::Index block = 0; block * s_len < w.cols(); ++block) {
                CHECK(w.col(block * s_len + 2).maxCoeff() < 1e-9);
                CHECK(w.col(block * s_len + 3).maxCoeff() < 1e-9);
            }
        }
    }
}

TEST_CASE("nesting: deeper config shares the shallower one's parameters") {
    const auto s = testutil::tiny_space();
    auto bank = init_super(s, 16, 9);
    auto shallow = testutil::tiny_config();
    shallow.n_decoder_layers = 1;
    shallow.decoder_ffn_dims = {16};
    shallow.decoder_heads = {2};
    shallow.enc_dec_attn = {-1};
    auto deep = shallow;
    deep.n_decoder_layers = 2;
    deep.decoder_ffn_dims = {16, 16};
    deep.decoder_heads = {2, 2};
    deep.enc_dec_attn = {-1, -1};

    const std::vector<int> src = {5, 6, 7};
    const std::vector<int> dec_input = {kBosId, 5};
    const Mat s0 = teacher_logits(inherit(bank, shallow), src, dec_input);
    const Mat d0 = teacher_logits(inherit(bank, deep), src, dec_input);

    // Perturb a first-layer weight: both views must move.
    bank.params[static_cast<std::size_t>(bank.dec_index(0, DecSlot::wq))](0, 0) += 0.5;
    const Mat s1 = teacher_logits(inherit(bank, shallow), src, dec_input);
    const Mat d1 = teacher_logits(inherit(bank, deep), src, dec_input);
    CHECK((s1 - s0).cwiseAbs().maxCoeff() > 1e-9);
    CHECK((d1 - d0).cwiseAbs().maxCoeff() > 1e-9);

    // Perturb a second-layer weight: only the deep view moves.
    bank.params[static_cast<std::size_t>(bank.dec_index(1, DecSlot::wq))](0, 0) += 0.5;
    const Mat s2 = teacher_logits(inherit(bank, shallow), src, dec_input);
    const Mat d2 = teacher_logits(inherit(bank, deep), src, dec_input);
    CHECK((s2 - s1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d2 - d1).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("greedy decode honors max_len and stops only at eos") {
    const auto bank = init_super(testutil::tiny_space(), 16, 10);
    const auto view = inherit(bank, testutil::tiny_config());
    const std::vector<int> src = {5, 6, 7, 8};
    CHECK(greedy_translate(view, src, 1).size() <= 1);
    CHECK(greedy_translate_forced_length(view, src, 9).size() == 9);
    for (int t : greedy_translate_forced_length(view, src, 9)) CHECK(t != kEosId);
}

TEST_CASE("decode errors") {
    const auto bank = init_super(testutil::tiny_space(), 16, 11);
    const auto view = inherit(bank, testutil::tiny_config());
    CHECK_THROWS_AS(greedy_translate(view, std::vector<int>{}, 4), std::invalid_argument);
    CHECK_THROWS_AS(greedy_translate(view, std::vector<int>{99}, 4), std::out_of_range);
    CHECK_THROWS_AS(greedy_translate(view, std::vector<int>{5}, 0), std::invalid_argument);
    CHECK_THROWS_AS(encode_source(view, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("param_count: monotone, head-invariant, matches slice enumeration") {
    const auto base = testutil::tiny_config();
    CHECK(param_count(base, 16) > 0);

    auto wider = base;
    wider.encoder_embed_dim = 16;
    CHECK(param_count(wider, 16) > param_count(base, 16));
    auto deeper = base;
    deeper.n_decoder_layers = 2;
    CHECK(param_count(deeper, 16) >= param_count(base, 16));

    auto other_heads = base;
    other_heads.encoder_heads = {4, 4};
    other_heads.decoder_heads = {4, 4};
    CHECK(param_count(other_heads, 16) == param_count(base, 16));

    // slice-enumeration oracle over the bound regions
    const auto bank = init_super(testutil::tiny_space(), 10, 12);
    ad::Graph g(false);
    SubConfig small;
    small.encoder_embed_dim = 8;
    small.decoder_embed_dim = 8;
    small.encoder_ffn_dims = {16, 32};
    small.encoder_heads = {2, 2};
    small.n_decoder_layers = 1;
    small.decoder_ffn_dims = {16};
    small.decoder_heads = {2};
    small.enc_dec_attn = {-1};
    BoundModel bm = bind_model(g, bank, small, false);
    std::set<std::tuple<int, Eigen::Index, Eigen::Index>> coords;
    for (const auto& p : bm.bound)
        for (Eigen::Index r = 0; r < p.rows; ++r)
            for (Eigen::Index c = 0; c < p.cols; ++c) coords.emplace(p.param_index, r, c);
    CHECK(param_count(small, 10) == static_cast<std::int64_t>(coords.size()));
}

TEST_CASE("different head counts change the computation") {
    const auto bank = init_super(testutil::tiny_space(), 16, 13);
    auto two = testutil::tiny_config();
    auto four = two;
    four.encoder_heads = {4, 4};
    four.decoder_heads = {4, 4};
    const std::vector<int> src = {5, 6, 7};
    const auto a = encode_source(inherit(bank, two), src);
    const auto b = encode_source(inherit(bank, four), src);
    CHECK((a.back() - b.back()).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("checkpoint round-trip at float32 precision") {
    testutil::TempDir dir("ckpt");
    const auto s = testutil::tiny_space();
    const auto bank = init_super(s, 16, 14);
    save_checkpoint(bank, dir.file("bank.ckpt"));
    const auto loaded = load_checkpoint(dir.file("bank.ckpt"));

    REQUIRE(loaded.params.size() == bank.params.size());
    CHECK(loaded.vocab_size == bank.vocab_size);
    CHECK(loaded.space == bank.space);
    for (std::size_t i = 0; i < bank.params.size(); ++i) {
        const Mat& a = bank.params[i];
        const Mat& b = loaded.params[i];
        REQUIRE(a.rows() == b.rows());
        REQUIRE(a.cols() == b.cols());
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            const double rel = std::abs(a.data()[k] - b.data()[k]) /
                               std::max(1e-12, std::abs(a.data()[k]));
            CHECK(rel < 1e-6);  // float32 rounding only
        }
    }

    // Re-saving the loaded bank must be byte-identical.
    save_checkpoint(loaded, dir.file("bank2.ckpt"));
    std::ifstream f1(dir.file("bank.ckpt"), std::ios::binary);
    std::ifstream f2(dir.file("bank2.ckpt"), std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint loader rejects garbage") {
    testutil::TempDir dir("ckpt_bad");
    {
        std::ofstream out(dir.file("junk.ckpt"), std::ios::binary);
        out << "not a checkpoint";
    }
    CHECK_THROWS(load_checkpoint(dir.file("junk.ckpt")));
    CHECK_THROWS(load_checkpoint(dir.file("missing.ckpt")));
}

TEST_CASE("exact banks are not checkpointable") {
    testutil::TempDir dir("ckpt_exact");
    const auto bank = init_exact(testutil::tiny_config(), 16, 15);
    CHECK_THROWS_AS(save_checkpoint(bank, dir.file("x.ckpt")), std::invalid_argument);
}

}  // TEST_SUITE
