#include "dynhat/design_space.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dynhat/rng.hpp"

namespace dynhat {

namespace {

std::string join_set(const std::vector<int>& v) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    os << "}";
    return os.str();
}

bool sorted_unique_positive(const std::vector<int>& v, bool allow_negative = false) {
    if (v.empty()) return false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!allow_negative && v[i] <= 0) return false;
        if (i > 0 && v[i] <= v[i - 1]) return false;
    }
    return true;
}

bool contains(const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

int pick(std::mt19937_64& rng, const std::vector<int>& choices) {
    return choices[pick_index(rng, choices.size())];
}

}  // namespace

DesignSpace DesignSpace::standard() {
    DesignSpace s;
    s.encoder_embed_choices = {512, 640};
    s.decoder_embed_choices = {512, 640};
    s.ffn_dim_choices = {1024, 2048, 3072};
    s.head_choices = {4, 8};
    s.decoder_layer_choices = {1, 2, 3, 4, 5, 6};
    s.enc_dec_attn_choices = {-1, 1, 2};
    s.encoder_layers = 6;
    return s;
}

std::vector<std::string> validate_space(const DesignSpace& s) {
    std::vector<std::string> v;
    auto need_sorted = [&](const std::vector<int>& c, const char* name, bool neg = false) {
        if (!sorted_unique_positive(c, neg))
            v.push_back(std::string(name) + " must be a non-empty strictly ascending set, got " + join_set(c));
    };
    need_sorted(s.encoder_embed_choices, "encoder_embed_choices");
    need_sorted(s.decoder_embed_choices, "decoder_embed_choices");
    need_sorted(s.ffn_dim_choices, "ffn_dim_choices");
    need_sorted(s.head_choices, "head_choices");
    need_sorted(s.decoder_layer_choices, "decoder_layer_choices");
    need_sorted(s.enc_dec_attn_choices, "enc_dec_attn_choices", true);

    if (s.encoder_layers < 1)
        v.push_back("encoder_layers must be >= 1, got " + std::to_string(s.encoder_layers));

    for (int a : s.enc_dec_attn_choices) {
        if (a != -1 && a != 1 && a != 2)
            v.push_back("enc_dec_attn value " + std::to_string(a) + " not in {-1,1,2}");
        else if (attended_encoder_layers(a) > s.encoder_layers)
            v.push_back("enc_dec_attn value " + std::to_string(a) + " attends to " +
                        std::to_string(attended_encoder_layers(a)) + " encoder layers but only " +
                        std::to_string(s.encoder_layers) + " exist");
    }

    if (!s.head_choices.empty()) {
        for (int e : s.encoder_embed_choices)
            for (int h : s.head_choices)
                if (h > 0 && e % h != 0)
                    v.push_back("encoder embed " + std::to_string(e) + " not divisible by head count " + std::to_string(h));
        for (int e : s.decoder_embed_choices)
            for (int h : s.head_choices)
                if (h > 0 && e % h != 0)
                    v.push_back("decoder embed " + std::to_string(e) + " not divisible by head count " + std::to_string(h));
    }

    return v;
}

std::vector<std::string> validate_config(const DesignSpace& s, const SubConfig& c) {
    std::vector<std::string> v;
    auto member = [&](int x, const std::vector<int>& choices, const std::string& dim) {
        if (!contains(choices, x))
            v.push_back(dim + " " + std::to_string(x) + " not in " + join_set(choices));
    };

    member(c.encoder_embed_dim, s.encoder_embed_choices, "encoder_embed_dim");
    member(c.decoder_embed_dim, s.decoder_embed_choices, "decoder_embed_dim");
    member(c.n_decoder_layers, s.decoder_layer_choices, "n_decoder_layers");

    const auto el = static_cast<std::size_t>(s.encoder_layers);
    if (c.encoder_ffn_dims.size() != el)
        v.push_back("encoder_ffn_dims length mismatch: " + std::to_string(c.encoder_ffn_dims.size()) +
                    " != " + std::to_string(s.encoder_layers));
    if (c.encoder_heads.size() != el)
        v.push_back("encoder_heads length mismatch: " + std::to_string(c.encoder_heads.size()) +
                    " != " + std::to_string(s.encoder_layers));
    const auto dl = static_cast<std::size_t>(c.n_decoder_layers);
    if (c.decoder_ffn_dims.size() != dl)
        v.push_back("decoder_ffn_dims length mismatch: " + std::to_string(c.decoder_ffn_dims.size()) +
                    " != " + std::to_string(c.n_decoder_layers));
    if (c.decoder_heads.size() != dl)
        v.push_back("decoder_heads length mismatch: " + std::to_string(c.decoder_heads.size()) +
                    " != " + std::to_string(c.n_decoder_layers));
    if (c.enc_dec_attn.size() != dl)
        v.push_back("enc_dec_attn length mismatch: " + std::to_string(c.enc_dec_attn.size()) +
                    " != " + std::to_string(c.n_decoder_layers));

    for (std::size_t i = 0; i < c.encoder_ffn_dims.size(); ++i)
        member(c.encoder_ffn_dims[i], s.ffn_dim_choices, "encoder ffn_dim");
    for (std::size_t i = 0; i < c.decoder_ffn_dims.size(); ++i)
        member(c.decoder_ffn_dims[i], s.ffn_dim_choices, "decoder ffn_dim");
    for (std::size_t i = 0; i < c.encoder_heads.size(); ++i) {
        member(c.encoder_heads[i], s.head_choices, "encoder head count");
        if (c.encoder_heads[i] > 0 && c.encoder_embed_dim % c.encoder_heads[i] != 0)
            v.push_back("encoder_embed_dim " + std::to_string(c.encoder_embed_dim) +
                        " not divisible by head count " + std::to_string(c.encoder_heads[i]));
    }
    for (std::size_t i = 0; i < c.decoder_heads.size(); ++i) {
        member(c.decoder_heads[i], s.head_choices, "decoder head count");
        if (c.decoder_heads[i] > 0 && c.decoder_embed_dim % c.decoder_heads[i] != 0)
            v.push_back("decoder_embed_dim " + std::to_string(c.decoder_embed_dim) +
                        " not divisible by head count " + std::to_string(c.decoder_heads[i]));
    }
    for (std::size_t i = 0; i < c.enc_dec_attn.size(); ++i)
        member(c.enc_dec_attn[i], s.enc_dec_attn_choices, "enc_dec_attn");
    return v;
}

SubConfig sample_uniform(const DesignSpace& s, std::uint64_t seed) {
    auto rng = make_rng(seed);
    return sample_uniform(s, rng);
}

SubConfig sample_uniform(const DesignSpace& s, std::mt19937_64& rng) {
    SubConfig c;
    c.encoder_embed_dim = pick(rng, s.encoder_embed_choices);
    c.decoder_embed_dim = pick(rng, s.decoder_embed_choices);
    for (int i = 0; i < s.encoder_layers; ++i) {
        c.encoder_ffn_dims.push_back(pick(rng, s.ffn_dim_choices));
        c.encoder_heads.push_back(pick(rng, s.head_choices));
    }
    c.n_decoder_layers = pick(rng, s.decoder_layer_choices);
    for (int i = 0; i < c.n_decoder_layers; ++i) {
        c.decoder_ffn_dims.push_back(pick(rng, s.ffn_dim_choices));
        c.decoder_heads.push_back(pick(rng, s.head_choices));
        c.enc_dec_attn.push_back(pick(rng, s.enc_dec_attn_choices));
    }
    return c;
}

BigInt cardinality(const DesignSpace& s) {
    const BigInt f = s.ffn_dim_choices.size();
    const BigInt h = s.head_choices.size();
    const BigInt a = s.enc_dec_attn_choices.size();
    BigInt enc = BigInt(s.encoder_embed_choices.size()) * BigInt(s.decoder_embed_choices.size());
    enc *= boost::multiprecision::pow(f * h, static_cast<unsigned>(s.encoder_layers));
    BigInt dec = 0;
    for (int layers : s.decoder_layer_choices)
        dec += boost::multiprecision::pow(f * h * a, static_cast<unsigned>(layers));
    return enc * dec;
}

void for_each_config(const DesignSpace& s, const std::function<bool(const SubConfig&)>& visit) {
    // Odometer over [e_enc, e_dec, (f,h) x enc_layers, (f,h,a) x L] for each L.
    SubConfig c;
    bool stop = false;

    std::function<void(std::size_t)> dec_layer = [&](std::size_t i) {
        if (stop) return;
        if (i == static_cast<std::size_t>(c.n_decoder_layers)) {
            if (!visit(c)) stop = true;
            return;
        }
        for (int f : s.ffn_dim_choices) {
            c.decoder_ffn_dims[i] = f;
            for (int h : s.head_choices) {
                c.decoder_heads[i] = h;
                for (int a : s.enc_dec_attn_choices) {
                    c.enc_dec_attn[i] = a;
                    dec_layer(i + 1);
                    if (stop) return;
                }
            }
        }
    };

    std::function<void(std::size_t)> enc_layer = [&](std::size_t i) {
        if (stop) return;
        if (i == static_cast<std::size_t>(s.encoder_layers)) {
            for (int layers : s.decoder_layer_choices) {
                c.n_decoder_layers = layers;
                c.decoder_ffn_dims.assign(layers, 0);
                c.decoder_heads.assign(layers, 0);
                c.enc_dec_attn.assign(layers, 0);
                dec_layer(0);
                if (stop) return;
            }
            return;
        }
        for (int f : s.ffn_dim_choices) {
            c.encoder_ffn_dims[i] = f;
            for (int h : s.head_choices) {
                c.encoder_heads[i] = h;
                enc_layer(i + 1);
                if (stop) return;
            }
        }
    };

    c.encoder_ffn_dims.assign(s.encoder_layers, 0);
    c.encoder_heads.assign(s.encoder_layers, 0);
    for (int ee : s.encoder_embed_choices) {
        c.encoder_embed_dim = ee;
        for (int de : s.decoder_embed_choices) {
            c.decoder_embed_dim = de;
            enc_layer(0);
            if (stop) return;
        }
    }
}

DesignSpace reduce_space(const DesignSpace& s, const std::vector<SubConfig>& top) {
    if (top.empty()) throw std::invalid_argument("reduce_space: empty top_configs");
    for (const auto& c : top) {
        auto v = validate_config(s, c);
        if (!v.empty())
            throw std::invalid_argument("reduce_space: top config invalid in space: " + v.front());
    }

    std::set<int> ee, de, ffn, heads, attn;
    int max_layers = 0;
    for (const auto& c : top) {
        ee.insert(c.encoder_embed_dim);
        de.insert(c.decoder_embed_dim);
        ffn.insert(c.encoder_ffn_dims.begin(), c.encoder_ffn_dims.end());
        ffn.insert(c.decoder_ffn_dims.begin(), c.decoder_ffn_dims.end());
        heads.insert(c.encoder_heads.begin(), c.encoder_heads.end());
        heads.insert(c.decoder_heads.begin(), c.decoder_heads.end());
        attn.insert(c.enc_dec_attn.begin(), c.enc_dec_attn.end());
        max_layers = std::max(max_layers, c.n_decoder_layers);
    }

    DesignSpace r;
    r.encoder_embed_choices.assign(ee.begin(), ee.end());
    r.decoder_embed_choices.assign(de.begin(), de.end());
    r.ffn_dim_choices.assign(ffn.begin(), ffn.end());
    r.head_choices.assign(heads.begin(), heads.end());
    for (int l = 1; l <= max_layers; ++l) r.decoder_layer_choices.push_back(l);
    r.enc_dec_attn_choices.assign(attn.begin(), attn.end());
    r.encoder_layers = s.encoder_layers;
    return r;
}

std::vector<double> encode_features(const SubConfig& c) {
    double enc_ffn = 0, dec_ffn = 0, enc_heads = 0, dec_heads = 0, attended = 0;
    for (int f : c.encoder_ffn_dims) enc_ffn += f;
    for (int f : c.decoder_ffn_dims) dec_ffn += f;
    for (int h : c.encoder_heads) enc_heads += h;
    for (int h : c.decoder_heads) dec_heads += h;
    for (int a : c.enc_dec_attn) attended += attended_encoder_layers(a);
    return {
        static_cast<double>(c.encoder_embed_dim),
        static_cast<double>(c.decoder_embed_dim),
        static_cast<double>(c.n_decoder_layers),
        enc_ffn,
        dec_ffn,
        enc_heads,
        dec_heads,
        attended * kSourcePositionsFactor,
    };
}

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = {
        "encoder_embed_dim", "decoder_embed_dim", "n_decoder_layers",
        "encoder_ffn_total", "decoder_ffn_total", "encoder_heads_total",
        "decoder_heads_total", "attended_positions",
    };
    return names;
}

void to_json(nlohmann::json& j, const DesignSpace& s) {
    j = nlohmann::json{
        {"encoder_embed_choices", s.encoder_embed_choices},
        {"decoder_embed_choices", s.decoder_embed_choices},
        {"ffn_dim_choices", s.ffn_dim_choices},
        {"head_choices", s.head_choices},
        {"decoder_layer_choices", s.decoder_layer_choices},
        {"enc_dec_attn_choices", s.enc_dec_attn_choices},
        {"encoder_layers", s.encoder_layers},
    };
}

void from_json(const nlohmann::json& j, DesignSpace& s) {
    j.at("encoder_embed_choices").get_to(s.encoder_embed_choices);
    j.at("decoder_embed_choices").get_to(s.decoder_embed_choices);
    j.at("ffn_dim_choices").get_to(s.ffn_dim_choices);
    j.at("head_choices").get_to(s.head_choices);
    j.at("decoder_layer_choices").get_to(s.decoder_layer_choices);
    j.at("enc_dec_attn_choices").get_to(s.enc_dec_attn_choices);
    s.encoder_layers = j.value("encoder_layers", 6);
}

void to_json(nlohmann::json& j, const SubConfig& c) {
    j = nlohmann::json{
        {"encoder_embed_dim", c.encoder_embed_dim},
        {"decoder_embed_dim", c.decoder_embed_dim},
        {"encoder_ffn_dims", c.encoder_ffn_dims},
        {"encoder_heads", c.encoder_heads},
        {"n_decoder_layers", c.n_decoder_layers},
        {"decoder_ffn_dims", c.decoder_ffn_dims},
        {"decoder_heads", c.decoder_heads},
        {"enc_dec_attn", c.enc_dec_attn},
    };
}

void from_json(const nlohmann::json& j, SubConfig& c) {
    j.at("encoder_embed_dim").get_to(c.encoder_embed_dim);
    j.at("decoder_embed_dim").get_to(c.decoder_embed_dim);
    j.at("encoder_ffn_dims").get_to(c.encoder_ffn_dims);
    j.at("encoder_heads").get_to(c.encoder_heads);
    j.at("n_decoder_layers").get_to(c.n_decoder_layers);
    j.at("decoder_ffn_dims").get_to(c.decoder_ffn_dims);
    j.at("decoder_heads").get_to(c.decoder_heads);
    j.at("enc_dec_attn").get_to(c.enc_dec_attn);
}

std::string canonical_config_json(const SubConfig& cfg) {
    nlohmann::json j = cfg;  // nlohmann objects keep keys sorted
    return j.dump();
}

std::uint64_t config_hash(const SubConfig& cfg) {
    const std::string s = canonical_config_json(cfg);
    return fnv1a(s.data(), s.size());
}

namespace {

void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return nlohmann::json::parse(in);
}

}  // namespace

void save_space_file(const DesignSpace& space, const std::string& path) {
    nlohmann::json j = space;
    j["format_version"] = 1;
    write_json_file(j, path);
}

DesignSpace load_space_file(const std::string& path) {
    return read_json_file(path).get<DesignSpace>();
}

void save_config_file(const SubConfig& cfg, const std::string& path) {
    nlohmann::json j = cfg;
    j["format_version"] = 1;
    write_json_file(j, path);
}

SubConfig load_config_file(const std::string& path) {
    return read_json_file(path).get<SubConfig>();
}

}  // namespace dynhat
