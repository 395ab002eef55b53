#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "json.hpp"

namespace dynhat {

using BigInt = boost::multiprecision::cpp_int;

/// The elastic architecture space: the set of allowed values per elastic
/// dimension. Encoder depth is fixed (not elastic); decoder depth, embedding
/// widths, per-layer FFN widths, per-layer head counts and the per-layer
/// encoder-decoder attention span all vary.
///
/// Attention span encoding: -1 attends to the last encoder layer only,
/// 1 to the last two, 2 to the last three.
struct DesignSpace {
    std::vector<int> encoder_embed_choices;
    std::vector<int> decoder_embed_choices;
    std::vector<int> ffn_dim_choices;
    std::vector<int> head_choices;
    std::vector<int> decoder_layer_choices;
    std::vector<int> enc_dec_attn_choices;
    int encoder_layers = 6;

    /// Stock space: embed {512,640}, FFN {1024,2048,3072}, heads {4,8},
    /// decoder depth 1..6, attention span {-1,1,2}, 6 encoder layers.
    static DesignSpace standard();

    bool operator==(const DesignSpace&) const = default;
};

/// One fully specified architecture drawn from a DesignSpace.
struct SubConfig {
    int encoder_embed_dim = 0;
    int decoder_embed_dim = 0;
    std::vector<int> encoder_ffn_dims;
    std::vector<int> encoder_heads;
    int n_decoder_layers = 0;
    std::vector<int> decoder_ffn_dims;
    std::vector<int> decoder_heads;
    std::vector<int> enc_dec_attn;

    bool operator==(const SubConfig&) const = default;
};

/// Number of encoder layers a decoder layer with attention span `attn`
/// attends to: -1 -> 1, 1 -> 2, 2 -> 3.
inline int attended_encoder_layers(int attn) { return attn == -1 ? 1 : attn + 1; }

/// Structural violations of the space itself (empty/unsorted choice sets,
/// head-divisibility, attention span out of {-1,1,2}, ...). Empty = valid.
std::vector<std::string> validate_space(const DesignSpace& space);

/// Violations of `cfg` against `space`; empty result means the config is a
/// member of the space. Every violation names the dimension and value.
std::vector<std::string> validate_config(const DesignSpace& space, const SubConfig& cfg);

/// Uniform independent draw of every elastic field. Deterministic per seed.
SubConfig sample_uniform(const DesignSpace& space, std::uint64_t seed);
/// Same, advancing a caller-owned generator.
SubConfig sample_uniform(const DesignSpace& space, std::mt19937_64& rng);

/// Exact number of configurations in the space:
///   |E_enc|*|E_dec|*(|F|*|H|)^enc_layers * sum_L (|F|*|H|*|A|)^L
BigInt cardinality(const DesignSpace& space);

/// Visits every configuration of the space in a fixed deterministic order.
/// The visitor returns false to stop early. Intended for small spaces; pair
/// with cardinality() before calling.
void for_each_config(const DesignSpace& space, const std::function<bool(const SubConfig&)>& visit);

/// Shrinks the space to the choice values actually used by `top_configs`.
/// Decoder depth is reduced to the contiguous range [1, max used] so the
/// runtime can still scale down smoothly. Throws std::invalid_argument on an
/// empty config list or configs invalid in `space`.
DesignSpace reduce_space(const DesignSpace& space, const std::vector<SubConfig>& top_configs);

inline constexpr int kFeatureCount = 8;
/// Source length the measurement protocol fixes; folded into the attention
/// feature so cross-attention work scales with attended positions.
inline constexpr int kSourcePositionsFactor = 30;

/// Fixed-length numeric encoding of a config, the latency predictor input:
/// [enc_embed, dec_embed, n_decoder_layers, enc_ffn_total, dec_ffn_total,
///  enc_heads_total, dec_heads_total, attended_positions].
std::vector<double> encode_features(const SubConfig& cfg);
const std::vector<std::string>& feature_names();

// JSON (field names are the schema; files wrap these with format_version).
void to_json(nlohmann::json& j, const DesignSpace& s);
void from_json(const nlohmann::json& j, DesignSpace& s);
void to_json(nlohmann::json& j, const SubConfig& c);
void from_json(const nlohmann::json& j, SubConfig& c);

/// Canonical serialized form (stable key order); also the tie-break key for
/// search and the input to config_hash.
std::string canonical_config_json(const SubConfig& cfg);
std::uint64_t config_hash(const SubConfig& cfg);

void save_space_file(const DesignSpace& space, const std::string& path);
DesignSpace load_space_file(const std::string& path);
void save_config_file(const SubConfig& cfg, const std::string& path);
SubConfig load_config_file(const std::string& path);

}  // namespace dynhat
