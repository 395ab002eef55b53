#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "dynhat/corpus.hpp"
#include "dynhat/design_space.hpp"
#include "dynhat/search.hpp"

namespace testutil {

// Smallest space the full model runs in; fast enough for gradient checks.
inline dynhat::DesignSpace tiny_space() {
    dynhat::DesignSpace s;
    s.encoder_embed_choices = {8, 16};
    s.decoder_embed_choices = {8, 16};
    s.ffn_dim_choices = {16, 32};
    s.head_choices = {2, 4};
    s.decoder_layer_choices = {1, 2};
    s.enc_dec_attn_choices = {-1, 1};
    s.encoder_layers = 2;
    return s;
}

// 160 configurations; small enough for the exhaustive oracle.
inline dynhat::DesignSpace oracle_space() {
    dynhat::DesignSpace s;
    s.encoder_embed_choices = {8};
    s.decoder_embed_choices = {8, 16};
    s.ffn_dim_choices = {16, 32};
    s.head_choices = {2};
    s.decoder_layer_choices = {1, 2};
    s.enc_dec_attn_choices = {-1, 1};
    s.encoder_layers = 2;
    return s;
}

// Desk-scale training space: vocab 64, widths to 64/128, decoder depth 1..6.
inline dynhat::DesignSpace train_space() {
    dynhat::DesignSpace s;
    s.encoder_embed_choices = {32, 64};
    s.decoder_embed_choices = {32, 64};
    s.ffn_dim_choices = {64, 128};
    s.head_choices = {2, 4};
    s.decoder_layer_choices = {1, 2, 3, 4, 5, 6};
    s.enc_dec_attn_choices = {-1, 1};
    s.encoder_layers = 2;
    return s;
}

inline dynhat::SubConfig tiny_config() {
    dynhat::SubConfig c;
    c.encoder_embed_dim = 8;
    c.decoder_embed_dim = 8;
    c.encoder_ffn_dims = {16, 16};
    c.encoder_heads = {2, 2};
    c.n_decoder_layers = 2;
    c.decoder_ffn_dims = {16, 32};
    c.decoder_heads = {2, 2};
    c.enc_dec_attn = {-1, 1};
    return c;
}

inline dynhat::Corpus tiny_corpus(int n_pairs, std::uint64_t seed = 7, int vocab = 16) {
    return dynhat::generate_bijective_reversal(vocab, n_pairs, 3, 5, seed, seed, "train");
}

// The core surrogate fitness, under the name the tests grew up with.
inline double surrogate_loss(const dynhat::SubConfig& c) {
    return dynhat::analytic_surrogate_loss(c);
}

// Unique scratch directory under the build tree; removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path() / ("dynhat_test_" + tag);
        std::filesystem::remove_all(base);
        std::filesystem::create_directories(base);
        path_ = base;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

}  // namespace testutil
