#include "dynhat/elastic_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "dynhat/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace dynhat {

namespace {

constexpr double kMaskBias = -1e9;

const char* enc_slot_name(EncSlot s) {
    switch (s) {
        case EncSlot::wq: return "wq";
        case EncSlot::wk: return "wk";
        case EncSlot::wv: return "wv";
        case EncSlot::wo: return "wo";
        case EncSlot::ln_attn_gain: return "ln_attn_gain";
        case EncSlot::ln_attn_bias: return "ln_attn_bias";
        case EncSlot::w1: return "w1";
        case EncSlot::w2: return "w2";
        case EncSlot::ln_ffn_gain: return "ln_ffn_gain";
        case EncSlot::ln_ffn_bias: return "ln_ffn_bias";
    }
    return "?";
}

const char* dec_slot_name(DecSlot s) {
    switch (s) {
        case DecSlot::wq: return "wq";
        case DecSlot::wk: return "wk";
        case DecSlot::wv: return "wv";
        case DecSlot::wo: return "wo";
        case DecSlot::ln_self_gain: return "ln_self_gain";
        case DecSlot::ln_self_bias: return "ln_self_bias";
        case DecSlot::cq: return "cq";
        case DecSlot::ck: return "ck";
        case DecSlot::cv: return "cv";
        case DecSlot::co: return "co";
        case DecSlot::ln_cross_gain: return "ln_cross_gain";
        case DecSlot::ln_cross_bias: return "ln_cross_bias";
        case DecSlot::w1: return "w1";
        case DecSlot::w2: return "w2";
        case DecSlot::ln_ffn_gain: return "ln_ffn_gain";
        case DecSlot::ln_ffn_bias: return "ln_ffn_bias";
    }
    return "?";
}

bool is_gain(EncSlot s) { return s == EncSlot::ln_attn_gain || s == EncSlot::ln_ffn_gain; }
bool is_bias(EncSlot s) { return s == EncSlot::ln_attn_bias || s == EncSlot::ln_ffn_bias; }
bool is_gain(DecSlot s) {
    return s == DecSlot::ln_self_gain || s == DecSlot::ln_cross_gain || s == DecSlot::ln_ffn_gain;
}
bool is_bias(DecSlot s) {
    return s == DecSlot::ln_self_bias || s == DecSlot::ln_cross_bias || s == DecSlot::ln_ffn_bias;
}

// Shape of every parameter, derived from the bank's capacities.
std::pair<int, int> param_shape(const SuperWeights& b, int index) {
    if (index == b.embedding_index()) return {b.vocab_size, b.embed_cols()};
    int i = index - 1;
    if (i < b.encoder_layers * kEncSlots) {
        const int layer = i / kEncSlots;
        const auto s = static_cast<EncSlot>(i % kEncSlots);
        const int e = b.enc_stream_cap;
        const int f = b.enc_ffn_cap[static_cast<std::size_t>(layer)];
        switch (s) {
            case EncSlot::wq:
            case EncSlot::wk:
            case EncSlot::wv:
            case EncSlot::wo: return {e, e};
            case EncSlot::w1: return {e, f};
            case EncSlot::w2: return {f, e};
            default: return {e, 1};  // norm vectors
        }
    }
    i -= b.encoder_layers * kEncSlots;
    const int layer = i / kDecSlots;
    const auto s = static_cast<DecSlot>(i % kDecSlots);
    const int e = b.dec_stream_cap;
    const int f = b.dec_ffn_cap[static_cast<std::size_t>(layer)];
    switch (s) {
        case DecSlot::wq:
        case DecSlot::wk:
        case DecSlot::wv:
        case DecSlot::wo:
        case DecSlot::cq:
        case DecSlot::co: return {e, e};
        case DecSlot::ck:
        case DecSlot::cv: return {b.cross_kv_rows_cap, e};
        case DecSlot::w1: return {e, f};
        case DecSlot::w2: return {f, e};
        default: return {e, 1};
    }
}

void fill_params(SuperWeights& b, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0x5EED));
    std::normal_distribution<double> unit(0.0, 1.0);
    b.params.resize(static_cast<std::size_t>(b.n_params()));
    for (int i = 0; i < b.n_params(); ++i) {
        auto [r, c] = param_shape(b, i);
        Mat& m = b.params[static_cast<std::size_t>(i)];
        m.resize(r, c);

        bool gain = false, bias = false;
        double sd = 0.0;
        if (i == b.embedding_index()) {
            sd = 1.0 / std::sqrt(static_cast<double>(c));  // used transposed as output projection
        } else {
            int k = i - 1;
            if (k < b.encoder_layers * kEncSlots) {
                const auto s = static_cast<EncSlot>(k % kEncSlots);
                gain = is_gain(s);
                bias = is_bias(s);
            } else {
                const auto s = static_cast<DecSlot>((k - b.encoder_layers * kEncSlots) % kDecSlots);
                gain = is_gain(s);
                bias = is_bias(s);
            }
            sd = 1.0 / std::sqrt(static_cast<double>(r));
        }

        if (gain) {
            m.setOnes();
        } else if (bias) {
            m.setZero();
        } else {
            double* p = m.data();
            for (Eigen::Index k = 0; k < m.size(); ++k) p[k] = sd * unit(rng);
        }
    }
}

// Structural validity of a config against bank capacities (not against a
// choice set; exact banks have none).
void check_against_bank(const SuperWeights& b, const SubConfig& c) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("inherit: " + msg); };
    if (c.encoder_embed_dim < 1 || c.encoder_embed_dim > b.enc_stream_cap ||
        c.encoder_embed_dim > b.cross_kv_rows_cap)
        fail("encoder_embed_dim " + std::to_string(c.encoder_embed_dim) + " exceeds bank capacity");
    if (c.decoder_embed_dim < 1 || c.decoder_embed_dim > b.dec_stream_cap)
        fail("decoder_embed_dim " + std::to_string(c.decoder_embed_dim) + " exceeds bank capacity");
    if (static_cast<int>(c.encoder_ffn_dims.size()) != b.encoder_layers ||
        static_cast<int>(c.encoder_heads.size()) != b.encoder_layers)
        fail("encoder list lengths must equal " + std::to_string(b.encoder_layers));
    if (c.n_decoder_layers < 1 || c.n_decoder_layers > b.max_decoder_layers)
        fail("n_decoder_layers " + std::to_string(c.n_decoder_layers) + " exceeds bank capacity");
    const auto dl = static_cast<std::size_t>(c.n_decoder_layers);
    if (c.decoder_ffn_dims.size() != dl || c.decoder_heads.size() != dl || c.enc_dec_attn.size() != dl)
        fail("decoder list lengths must equal n_decoder_layers");
    for (int l = 0; l < b.encoder_layers; ++l) {
        const auto i = static_cast<std::size_t>(l);
        if (c.encoder_ffn_dims[i] < 1 || c.encoder_ffn_dims[i] > b.enc_ffn_cap[i])
            fail("encoder ffn_dim exceeds bank capacity at layer " + std::to_string(l));
        if (c.encoder_heads[i] < 1 || c.encoder_embed_dim % c.encoder_heads[i] != 0)
            fail("encoder head count must divide encoder_embed_dim");
    }
    for (std::size_t i = 0; i < dl; ++i) {
        if (c.decoder_ffn_dims[i] < 1 || c.decoder_ffn_dims[i] > b.dec_ffn_cap[i])
            fail("decoder ffn_dim exceeds bank capacity at layer " + std::to_string(i));
        if (c.decoder_heads[i] < 1 || c.decoder_embed_dim % c.decoder_heads[i] != 0)
            fail("decoder head count must divide decoder_embed_dim");
        const int a = c.enc_dec_attn[i];
        if (a != -1 && a != 1 && a != 2) fail("enc_dec_attn value must be in {-1,1,2}");
        if (attended_encoder_layers(a) > b.encoder_layers)
            fail("enc_dec_attn span exceeds encoder depth");
    }
}

void check_tokens(const SubModelView& view, std::span<const int> tokens, const char* what) {
    if (tokens.empty()) throw std::invalid_argument(std::string(what) + ": empty token list");
    for (int t : tokens)
        if (t < 0 || t >= view.vocab_size())
            throw std::out_of_range(std::string(what) + ": token id " + std::to_string(t) +
                                    " outside vocabulary of size " + std::to_string(view.vocab_size()));
}

ad::Var bind_block(ad::Graph& g, const SuperWeights& bank, int index, Eigen::Index rows,
                   Eigen::Index cols, bool with_grads, std::vector<BoundParam>& reg) {
    const Mat& m = bank.params[static_cast<std::size_t>(index)];
    ad::Var v = g.leaf_view(m.data(), rows, cols, m.outerStride(), with_grads);
    reg.push_back({index, rows, cols, v});
    return v;
}

// Multi-head scaled dot-product attention. Head h reads columns
// [h*d, (h+1)*d) of the projected Q/K/V; elastic head counts repartition the
// sliced width, they never select different weights.
ad::Var multi_head_attention(ad::Graph& g, ad::Var q_in, ad::Var kv_in, ad::Var wq, ad::Var wk,
                             ad::Var wv, ad::Var wo, int heads, const Mat* bias,
                             AttentionProbe* probe) {
    ad::Var q = g.matmul(q_in, wq);
    ad::Var k = g.matmul(kv_in, wk);
    ad::Var v = g.matmul(kv_in, wv);
    const Eigen::Index d = q.cols() / heads;
    std::vector<ad::Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = g.slice_cols(q, h * d, d);
        ad::Var kh = g.slice_cols(k, h * d, d);
        ad::Var vh = g.slice_cols(v, h * d, d);
        ad::Var scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(d)));
        ad::Var attn = g.softmax_rows(scores, bias);
        if (probe) probe->weights.emplace_back(attn.value());
        outs.push_back(g.matmul(attn, vh));
    }
    return g.matmul(g.concat_cols(outs), wo);
}

Mat key_pad_bias(Eigen::Index query_len, const std::vector<bool>& key_pad) {
    Mat b = Mat::Zero(query_len, static_cast<Eigen::Index>(key_pad.size()));
    for (std::size_t j = 0; j < key_pad.size(); ++j)
        if (key_pad[j]) b.col(static_cast<Eigen::Index>(j)).setConstant(kMaskBias);
    return b;
}

Mat causal_bias(Eigen::Index len) {
    Mat b = Mat::Zero(len, len);
    for (Eigen::Index i = 0; i < len; ++i)
        for (Eigen::Index j = i + 1; j < len; ++j) b(i, j) = kMaskBias;
    return b;
}

ad::Var embed_tokens(ad::Graph& g, const BoundModel& bm, std::span<const int> ids, int dim) {
    ad::Var rows = g.gather_rows(bm.embedding, std::vector<int>(ids.begin(), ids.end()));
    if (rows.cols() != dim) rows = g.slice_cols(rows, 0, dim);
    ad::Var x = g.scale(rows, std::sqrt(static_cast<double>(dim)));
    return g.add_constant(x, sinusoidal_positions(static_cast<int>(ids.size()), dim));
}

}  // namespace

std::string SuperWeights::param_name(int index) const {
    if (index == embedding_index()) return "embedding";
    int i = index - 1;
    if (i < encoder_layers * kEncSlots)
        return "enc" + std::to_string(i / kEncSlots) + "." +
               enc_slot_name(static_cast<EncSlot>(i % kEncSlots));
    i -= encoder_layers * kEncSlots;
    return "dec" + std::to_string(i / kDecSlots) + "." +
           dec_slot_name(static_cast<DecSlot>(i % kDecSlots));
}

SuperWeights init_super(const DesignSpace& space, int vocab_size, std::uint64_t seed) {
    if (vocab_size < kNumReservedIds)
        throw std::invalid_argument("init_super: vocab_size must be >= 4 (pad/bos/eos/unk)");
    if (auto v = validate_space(space); !v.empty())
        throw std::invalid_argument("init_super: invalid space: " + v.front());

    SuperWeights b;
    b.vocab_size = vocab_size;
    const int e_enc_max = space.encoder_embed_choices.back();
    const int e_dec_max = space.decoder_embed_choices.back();
    const int e_max = std::max(e_enc_max, e_dec_max);
    b.enc_stream_cap = e_max;
    b.dec_stream_cap = e_max;
    b.cross_kv_rows_cap = e_enc_max;
    b.encoder_layers = space.encoder_layers;
    b.max_decoder_layers = space.decoder_layer_choices.back();
    b.enc_ffn_cap.assign(static_cast<std::size_t>(b.encoder_layers), space.ffn_dim_choices.back());
    b.dec_ffn_cap.assign(static_cast<std::size_t>(b.max_decoder_layers), space.ffn_dim_choices.back());
    b.space = space;
    fill_params(b, seed);
    return b;
}

SuperWeights init_exact(const SubConfig& cfg, int vocab_size, std::uint64_t seed) {
    if (vocab_size < kNumReservedIds)
        throw std::invalid_argument("init_exact: vocab_size must be >= 4");
    SuperWeights b;
    b.vocab_size = vocab_size;
    b.enc_stream_cap = cfg.encoder_embed_dim;
    b.dec_stream_cap = cfg.decoder_embed_dim;
    b.cross_kv_rows_cap = cfg.encoder_embed_dim;
    b.encoder_layers = static_cast<int>(cfg.encoder_ffn_dims.size());
    b.max_decoder_layers = cfg.n_decoder_layers;
    b.enc_ffn_cap.assign(cfg.encoder_ffn_dims.begin(), cfg.encoder_ffn_dims.end());
    b.dec_ffn_cap.assign(cfg.decoder_ffn_dims.begin(), cfg.decoder_ffn_dims.end());
    fill_params(b, seed);
    check_against_bank(b, cfg);
    return b;
}

SubModelView inherit(const SuperWeights& bank, const SubConfig& cfg) {
    check_against_bank(bank, cfg);
    return SubModelView(&bank, cfg);
}

SuperWeights copy_standalone(const SuperWeights& bank, const SubConfig& cfg) {
    check_against_bank(bank, cfg);
    SuperWeights b;
    b.vocab_size = bank.vocab_size;
    b.enc_stream_cap = cfg.encoder_embed_dim;
    b.dec_stream_cap = cfg.decoder_embed_dim;
    b.cross_kv_rows_cap = cfg.encoder_embed_dim;
    b.encoder_layers = bank.encoder_layers;
    b.max_decoder_layers = cfg.n_decoder_layers;
    b.enc_ffn_cap.assign(cfg.encoder_ffn_dims.begin(), cfg.encoder_ffn_dims.end());
    b.dec_ffn_cap.assign(cfg.decoder_ffn_dims.begin(), cfg.decoder_ffn_dims.end());
    b.params.resize(static_cast<std::size_t>(b.n_params()));
    for (int i = 0; i < b.n_params(); ++i) {
        // Same registry layout on both sides: decoder layers beyond cfg's
        // depth do not exist in the copy.
        auto [r, c] = param_shape(b, i);
        int src_index = i;
        if (i > 0) {
            int k = i - 1;
            if (k >= b.encoder_layers * kEncSlots) {
                const int layer = (k - b.encoder_layers * kEncSlots) / kDecSlots;
                const auto slot = static_cast<DecSlot>((k - b.encoder_layers * kEncSlots) % kDecSlots);
                src_index = bank.dec_index(layer, slot);
            }
        }
        b.params[static_cast<std::size_t>(i)] =
            bank.params[static_cast<std::size_t>(src_index)].topLeftCorner(r, c);
    }
    return b;
}

std::uint64_t bank_checksum(const SuperWeights& bank) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Mat& m : bank.params) {
        const std::int64_t dims[2] = {m.rows(), m.cols()};
        h = fnv1a(dims, sizeof(dims), h);
        h = fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
    }
    return h;
}

BoundModel bind_model(ad::Graph& g, const SuperWeights& bank, const SubConfig& cfg,
                      bool with_grads) {
    check_against_bank(bank, cfg);
    BoundModel bm;
    bm.cfg = cfg;
    bm.vocab_size = bank.vocab_size;

    const int e_enc = cfg.encoder_embed_dim;
    const int e_dec = cfg.decoder_embed_dim;
    bm.embedding = bind_block(g, bank, bank.embedding_index(), bank.vocab_size,
                              std::max(e_enc, e_dec), with_grads, bm.bound);

    for (int l = 0; l < bank.encoder_layers; ++l) {
        const int f = cfg.encoder_ffn_dims[static_cast<std::size_t>(l)];
        auto at = [&](EncSlot s, Eigen::Index r, Eigen::Index c) {
            return bind_block(g, bank, bank.enc_index(l, s), r, c, with_grads, bm.bound);
        };
        BoundModel::EncLayer layer;
        layer.wq = at(EncSlot::wq, e_enc, e_enc);
        layer.wk = at(EncSlot::wk, e_enc, e_enc);
        layer.wv = at(EncSlot::wv, e_enc, e_enc);
        layer.wo = at(EncSlot::wo, e_enc, e_enc);
        layer.ln_attn_gain = at(EncSlot::ln_attn_gain, e_enc, 1);
        layer.ln_attn_bias = at(EncSlot::ln_attn_bias, e_enc, 1);
        layer.w1 = at(EncSlot::w1, e_enc, f);
        layer.w2 = at(EncSlot::w2, f, e_enc);
        layer.ln_ffn_gain = at(EncSlot::ln_ffn_gain, e_enc, 1);
        layer.ln_ffn_bias = at(EncSlot::ln_ffn_bias, e_enc, 1);
        bm.enc.push_back(layer);
    }

    for (int l = 0; l < cfg.n_decoder_layers; ++l) {
        const int f = cfg.decoder_ffn_dims[static_cast<std::size_t>(l)];
        auto at = [&](DecSlot s, Eigen::Index r, Eigen::Index c) {
            return bind_block(g, bank, bank.dec_index(l, s), r, c, with_grads, bm.bound);
        };
        BoundModel::DecLayer layer;
        layer.wq = at(DecSlot::wq, e_dec, e_dec);
        layer.wk = at(DecSlot::wk, e_dec, e_dec);
        layer.wv = at(DecSlot::wv, e_dec, e_dec);
        layer.wo = at(DecSlot::wo, e_dec, e_dec);
        layer.ln_self_gain = at(DecSlot::ln_self_gain, e_dec, 1);
        layer.ln_self_bias = at(DecSlot::ln_self_bias, e_dec, 1);
        layer.cq = at(DecSlot::cq, e_dec, e_dec);
        layer.ck = at(DecSlot::ck, e_enc, e_dec);
        layer.cv = at(DecSlot::cv, e_enc, e_dec);
        layer.co = at(DecSlot::co, e_dec, e_dec);
        layer.ln_cross_gain = at(DecSlot::ln_cross_gain, e_dec, 1);
        layer.ln_cross_bias = at(DecSlot::ln_cross_bias, e_dec, 1);
        layer.w1 = at(DecSlot::w1, e_dec, f);
        layer.w2 = at(DecSlot::w2, f, e_dec);
        layer.ln_ffn_gain = at(DecSlot::ln_ffn_gain, e_dec, 1);
        layer.ln_ffn_bias = at(DecSlot::ln_ffn_bias, e_dec, 1);
        bm.dec.push_back(layer);
    }
    return bm;
}

std::vector<bool> pad_mask_of(std::span<const int> tokens) {
    std::vector<bool> m(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) m[i] = tokens[i] == kPadId;
    return m;
}

Mat sinusoidal_positions(int len, int dim) {
    Mat pe(len, dim);
    for (int p = 0; p < len; ++p) {
        for (int i = 0; i < dim; i += 2) {
            const double angle = p * std::exp(-std::log(10000.0) * i / dim);
            pe(p, i) = std::sin(angle);
            if (i + 1 < dim) pe(p, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

std::vector<ad::Var> encoder_forward(ad::Graph& g, const BoundModel& bm,
                                     std::span<const int> src_tokens, AttentionProbe* probe) {
    const int e = bm.cfg.encoder_embed_dim;
    const auto len = static_cast<Eigen::Index>(src_tokens.size());
    const std::vector<bool> pad = pad_mask_of(src_tokens);
    const bool any_pad = std::find(pad.begin(), pad.end(), true) != pad.end();
    const Mat bias = any_pad ? key_pad_bias(len, pad) : Mat();

    ad::Var x = embed_tokens(g, bm, src_tokens, e);
    std::vector<ad::Var> outs;
    outs.reserve(bm.enc.size());
    for (const auto& layer : bm.enc) {
        const int heads = bm.cfg.encoder_heads[outs.size()];
        ad::Var h = g.layer_norm(x, layer.ln_attn_gain, layer.ln_attn_bias);
        ad::Var a = multi_head_attention(g, h, h, layer.wq, layer.wk, layer.wv, layer.wo, heads,
                                         any_pad ? &bias : nullptr, probe);
        x = g.add(x, a);
        ad::Var h2 = g.layer_norm(x, layer.ln_ffn_gain, layer.ln_ffn_bias);
        ad::Var f = g.matmul(g.relu(g.matmul(h2, layer.w1)), layer.w2);
        x = g.add(x, f);
        outs.push_back(x);
    }
    return outs;
}

ad::Var decoder_logits(ad::Graph& g, const BoundModel& bm,
                       const std::vector<ad::Var>& encoder_outputs,
                       const std::vector<bool>& src_pad_mask,
                       std::span<const int> decoder_input, AttentionProbe* probe) {
    const int e = bm.cfg.decoder_embed_dim;
    const auto len = static_cast<Eigen::Index>(decoder_input.size());
    const Mat self_bias = causal_bias(len);

    // Cross-attention memory per distinct attention span: the last k encoder
    // layer outputs concatenated along the source-position axis (earliest
    // attended layer first), with the source pad mask tiled to match.
    struct Memory { ad::Var mem; Mat bias; bool any_pad; };
    std::map<int, Memory> memories;
    const bool any_src_pad =
        std::find(src_pad_mask.begin(), src_pad_mask.end(), true) != src_pad_mask.end();
    auto memory_for = [&](int attn) -> Memory& {
        auto it = memories.find(attn);
        if (it != memories.end()) return it->second;
        const int k = attended_encoder_layers(attn);
        const int n_layers = static_cast<int>(encoder_outputs.size());
        std::vector<ad::Var> parts;
        for (int l = n_layers - k; l < n_layers; ++l)
            parts.push_back(encoder_outputs[static_cast<std::size_t>(l)]);
        Memory m{g.concat_rows(parts), Mat(), any_src_pad};
        if (any_src_pad) {
            std::vector<bool> tiled;
            tiled.reserve(src_pad_mask.size() * static_cast<std::size_t>(k));
            for (int rep = 0; rep < k; ++rep)
                tiled.insert(tiled.end(), src_pad_mask.begin(), src_pad_mask.end());
            m.bias = key_pad_bias(len, tiled);
        }
        return memories.emplace(attn, std::move(m)).first->second;
    };

    ad::Var x = embed_tokens(g, bm, decoder_input, e);
    for (std::size_t l = 0; l < bm.dec.size(); ++l) {
        const auto& layer = bm.dec[l];
        const int heads = bm.cfg.decoder_heads[l];
        ad::Var h = g.layer_norm(x, layer.ln_self_gain, layer.ln_self_bias);
        ad::Var a = multi_head_attention(g, h, h, layer.wq, layer.wk, layer.wv, layer.wo, heads,
                                         &self_bias, probe);
        x = g.add(x, a);

        Memory& mem = memory_for(bm.cfg.enc_dec_attn[l]);
        ad::Var hc = g.layer_norm(x, layer.ln_cross_gain, layer.ln_cross_bias);
        ad::Var c = multi_head_attention(g, hc, mem.mem, layer.cq, layer.ck, layer.cv, layer.co,
                                         heads, mem.any_pad ? &mem.bias : nullptr, probe);
        x = g.add(x, c);

        ad::Var hf = g.layer_norm(x, layer.ln_ffn_gain, layer.ln_ffn_bias);
        ad::Var f = g.matmul(g.relu(g.matmul(hf, layer.w1)), layer.w2);
        x = g.add(x, f);
    }

    // Output projection tied to the decoder slice of the embedding table.
    ad::Var embed_out = bm.embedding;
    if (embed_out.cols() != e) embed_out = g.slice_cols(embed_out, 0, e);
    return g.matmul_nt(x, embed_out);
}

std::vector<Mat> encode_source(const SubModelView& view, std::span<const int> src_tokens,
                               AttentionProbe* probe) {
    check_tokens(view, src_tokens, "encode_source");
    ad::Graph g(false);
    BoundModel bm = bind_model(g, view.bank(), view.config(), false);
    auto outs = encoder_forward(g, bm, src_tokens, probe);
    std::vector<Mat> result;
    result.reserve(outs.size());
    for (const auto& v : outs) result.emplace_back(v.value());
    return result;
}

namespace {

std::vector<int> greedy_decode(const SubModelView& view, std::span<const int> src_tokens,
                               int max_len, int forced_len) {
    check_tokens(view, src_tokens, "greedy_translate");
    if (max_len < 1) throw std::invalid_argument("greedy_translate: max_len must be >= 1");

    ad::Graph g(false);
    BoundModel bm = bind_model(g, view.bank(), view.config(), false);
    auto enc_outs = encoder_forward(g, bm, src_tokens, nullptr);
    const std::vector<bool> src_pad = pad_mask_of(src_tokens);

    std::vector<int> decoder_input = {kBosId};
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
        ad::Var logits = decoder_logits(g, bm, enc_outs, src_pad, decoder_input, nullptr);
        const auto row = logits.value().row(logits.rows() - 1);
        const bool suppress_eos = static_cast<int>(out.size()) < forced_len;
        int best = -1;
        double best_score = 0.0;
        for (Eigen::Index v = 0; v < row.cols(); ++v) {
            if (suppress_eos && static_cast<int>(v) == kEosId) continue;
            if (best < 0 || row(v) > best_score) {
                best = static_cast<int>(v);
                best_score = row(v);
            }
        }
        if (best == kEosId) break;
        out.push_back(best);
        decoder_input.push_back(best);
    }
    return out;
}

}  // namespace

std::vector<int> greedy_translate(const SubModelView& view, std::span<const int> src_tokens,
                                  int max_len) {
    return greedy_decode(view, src_tokens, max_len, 0);
}

std::vector<int> greedy_translate_forced_length(const SubModelView& view,
                                                std::span<const int> src_tokens, int out_len) {
    if (out_len < 1) throw std::invalid_argument("forced-length decode: out_len must be >= 1");
    return greedy_decode(view, src_tokens, out_len, out_len);
}

std::int64_t param_count(const SubConfig& cfg, int vocab_size) {
    const std::int64_t e_enc = cfg.encoder_embed_dim;
    const std::int64_t e_dec = cfg.decoder_embed_dim;
    std::int64_t n = static_cast<std::int64_t>(vocab_size) * std::max(e_enc, e_dec);
    for (int f : cfg.encoder_ffn_dims) n += 4 * e_enc * e_enc + 2 * e_enc * f + 4 * e_enc;
    for (int f : cfg.decoder_ffn_dims) n += 6 * e_dec * e_dec + 2 * e_enc * e_dec + 2 * e_dec * f + 6 * e_dec;
    return n;
}

// --------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[8] = {'D', 'H', 'A', 'T', 'B', 'A', 'N', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const SuperWeights& bank, const std::string& path) {
    if (!bank.space)
        throw std::invalid_argument("save_checkpoint: bank has no design space descriptor");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);

    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kFormatVersion);
    nlohmann::json sj = *bank.space;
    const std::string space_json = sj.dump();
    write_pod(out, static_cast<std::uint64_t>(space_json.size()));
    out.write(space_json.data(), static_cast<std::streamsize>(space_json.size()));
    write_pod(out, static_cast<std::uint32_t>(bank.vocab_size));

    std::vector<float> row;
    for (const Mat& m : bank.params) {
        row.resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                row[static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(sizeof(float) * row.size()));
        }
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

SuperWeights load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kFormatVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));
    const auto space_len = read_pod<std::uint64_t>(in);
    std::string space_json(space_len, '\0');
    in.read(space_json.data(), static_cast<std::streamsize>(space_len));
    if (!in) throw std::runtime_error("load_checkpoint: truncated space descriptor");
    const DesignSpace space = nlohmann::json::parse(space_json).get<DesignSpace>();
    const auto vocab = read_pod<std::uint32_t>(in);

    // Shapes follow from the space; reuse the init path and overwrite.
    SuperWeights bank = init_super(space, static_cast<int>(vocab), 0);
    std::vector<float> row;
    for (Mat& m : bank.params) {
        row.resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            in.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(sizeof(float) * row.size()));
            if (!in) throw std::runtime_error("load_checkpoint: truncated matrix data");
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                m(i, j) = static_cast<double>(row[static_cast<std::size_t>(j)]);
        }
    }
    return bank;
}

}  // namespace dynhat
