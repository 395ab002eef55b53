#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynhat/autograd.hpp"
#include "dynhat/design_space.hpp"
#include "dynhat/token_ids.hpp"

namespace dynhat {

using Mat = Eigen::MatrixXd;

/// Parameter slots per encoder layer, in checkpoint declaration order.
enum class EncSlot {
    wq, wk, wv, wo, ln_attn_gain, ln_attn_bias,
    w1, w2, ln_ffn_gain, ln_ffn_bias,
};
/// Parameter slots per decoder layer, in checkpoint declaration order.
enum class DecSlot {
    wq, wk, wv, wo, ln_self_gain, ln_self_bias,
    cq, ck, cv, co, ln_cross_gain, ln_cross_bias,
    w1, w2, ln_ffn_gain, ln_ffn_bias,
};
inline constexpr int kEncSlots = 10;
inline constexpr int kDecSlots = 16;

/// The shared weight bank. Every matrix is allocated at the capacity the
/// bank was built for; architectures are realized by slicing leading
/// sub-blocks, never by copying. The token embedding table is tied: it
/// serves encoder input, decoder input, and output projection.
struct SuperWeights {
    int vocab_size = 0;
    int enc_stream_cap = 0;    // encoder residual-stream width capacity
    int dec_stream_cap = 0;    // decoder residual-stream width capacity
    int cross_kv_rows_cap = 0; // row capacity of cross-attention K/V projections
    int encoder_layers = 0;
    int max_decoder_layers = 0;
    std::vector<int> enc_ffn_cap;  // per encoder layer
    std::vector<int> dec_ffn_cap;  // per decoder layer
    /// Set when the bank was sized from a DesignSpace; required to write a
    /// checkpoint (shapes are reconstructed from it on load).
    std::optional<DesignSpace> space;
    std::vector<Mat> params;

    int embed_cols() const { return std::max(enc_stream_cap, dec_stream_cap); }
    int n_params() const { return 1 + kEncSlots * encoder_layers + kDecSlots * max_decoder_layers; }
    int embedding_index() const { return 0; }
    int enc_index(int layer, EncSlot s) const {
        return 1 + layer * kEncSlots + static_cast<int>(s);
    }
    int dec_index(int layer, DecSlot s) const {
        return 1 + encoder_layers * kEncSlots + layer * kDecSlots + static_cast<int>(s);
    }
    std::string param_name(int index) const;
};

/// Freshly seeded bank sized to the maxima of `space`. Weights are drawn
/// from N(0, 1/fan_in); normalization gains start at 1, biases at 0.
/// Throws std::invalid_argument for vocab_size < 4 (reserved ids) or an
/// invalid space.
SuperWeights init_super(const DesignSpace& space, int vocab_size, std::uint64_t seed);

/// Bank whose capacities equal `cfg` exactly (for training a single
/// architecture from scratch). Not checkpointable: it has no DesignSpace.
SuperWeights init_exact(const SubConfig& cfg, int vocab_size, std::uint64_t seed);

/// A zero-copy slice of a bank realizing one SubConfig: leading e x e
/// (resp. e x f) sub-blocks, first L decoder layers. Head count only
/// repartitions the sliced width into groups. The bank must outlive the
/// view.
class SubModelView {
  public:
    SubModelView(const SuperWeights* bank, SubConfig cfg)
        : bank_(bank), cfg_(std::move(cfg)) {}
    const SubConfig& config() const { return cfg_; }
    const SuperWeights& bank() const { return *bank_; }
    int vocab_size() const { return bank_->vocab_size; }

  private:
    const SuperWeights* bank_;
    SubConfig cfg_;
};

/// Validates `cfg` against the bank's capacities and returns a view.
/// Performs no weight copy; cost is independent of bank and corpus size.
SubModelView inherit(const SuperWeights& bank, const SubConfig& cfg);

/// Exact-size bank whose weights are copied from the sub-blocks `cfg`
/// selects in `bank`. The independent reference for view-forward
/// equivalence checks.
SuperWeights copy_standalone(const SuperWeights& bank, const SubConfig& cfg);

/// FNV-1a over every parameter byte in declaration order.
std::uint64_t bank_checksum(const SuperWeights& bank);

/// Captures attention weight matrices (softmax outputs) in forward order.
struct AttentionProbe {
    std::vector<Mat> weights;
};

// ---------------------------------------------------------------------------
// Graph-level building blocks. Training and inference share these; inference
// wrappers below run them on a non-recording graph.

/// One autograd leaf per touched parameter slice of the bank.
struct BoundParam {
    int param_index;
    Eigen::Index rows, cols;
    ad::Var var;
};

struct BoundModel {
    SubConfig cfg;
    int vocab_size = 0;
    struct EncLayer {
        ad::Var wq, wk, wv, wo, ln_attn_gain, ln_attn_bias, w1, w2, ln_ffn_gain, ln_ffn_bias;
    };
    struct DecLayer {
        ad::Var wq, wk, wv, wo, ln_self_gain, ln_self_bias;
        ad::Var cq, ck, cv, co, ln_cross_gain, ln_cross_bias;
        ad::Var w1, w2, ln_ffn_gain, ln_ffn_bias;
    };
    ad::Var embedding;  // [vocab x max(e_enc, e_dec)]
    std::vector<EncLayer> enc;
    std::vector<DecLayer> dec;
    std::vector<BoundParam> bound;  // registry for optimizers / grad checks
};

/// Binds autograd leaves onto the sub-blocks `cfg` selects in `bank`.
BoundModel bind_model(ad::Graph& g, const SuperWeights& bank, const SubConfig& cfg,
                      bool with_grads);

/// Full encoder stack; returns every per-layer output ([src_len x e_enc]
/// each) so cross-attention can address the last one, two, or three.
std::vector<ad::Var> encoder_forward(ad::Graph& g, const BoundModel& bm,
                                     std::span<const int> src_tokens,
                                     AttentionProbe* probe = nullptr);

/// Decoder stack over a teacher-forced or incremental input prefix; returns
/// [len x vocab] logits. Cross-attention keys/values come from the
/// concatenation, along the source-position axis, of the encoder layer
/// outputs each decoder layer's span selects.
ad::Var decoder_logits(ad::Graph& g, const BoundModel& bm,
                       const std::vector<ad::Var>& encoder_outputs,
                       const std::vector<bool>& src_pad_mask,
                       std::span<const int> decoder_input,
                       AttentionProbe* probe = nullptr);

std::vector<bool> pad_mask_of(std::span<const int> tokens);
Mat sinusoidal_positions(int len, int dim);

// ---------------------------------------------------------------------------
// Inference entry points.

/// Runs the encoder; returns all per-layer outputs as plain matrices.
/// Throws on empty input or out-of-vocabulary ids.
std::vector<Mat> encode_source(const SubModelView& view, std::span<const int> src_tokens,
                               AttentionProbe* probe = nullptr);

/// Greedy autoregressive decoding from bos, stopping at eos or max_len.
/// Returns generated content tokens (no bos/eos).
std::vector<int> greedy_translate(const SubModelView& view, std::span<const int> src_tokens,
                                  int max_len);

/// Greedy decoding forced to exactly `out_len` tokens: eos is suppressed
/// until the target length is reached. The latency protocol's runner.
std::vector<int> greedy_translate_forced_length(const SubModelView& view,
                                                std::span<const int> src_tokens, int out_len);

/// Number of distinct scalar parameters the inherited view touches; the tied
/// embedding slice is counted once.
std::int64_t param_count(const SubConfig& cfg, int vocab_size);

// ---------------------------------------------------------------------------
// Checkpoint format: magic, format version, space descriptor (JSON), vocab
// size, then matrices in declaration order, row-major, little-endian float32.

void save_checkpoint(const SuperWeights& bank, const std::string& path);
SuperWeights load_checkpoint(const std::string& path);

}  // namespace dynhat
