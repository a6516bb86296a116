#ifndef CRSN_MODEL_HPP
#define CRSN_MODEL_HPP

#include <memory>
#include <string>
#include <vector>

#include "crsn/layers.hpp"
#include "crsn/optim.hpp"
#include "crsn/prediction.hpp"
#include "crsn/sil.hpp"
#include "crsn/tensor.hpp"

namespace crsn {

// 42 physico-chemical descriptors plus the metered aeration load.
inline constexpr std::size_t kFeatureCount = 43;
inline constexpr std::size_t kDecoderHidden = 128;

enum class ModelKind { Crsn, Mlp, MiniAttn };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& s);

struct CrsnConfig {
    std::size_t d_model = 256;
    std::size_t layers = 6;
    std::size_t agents = 32;
    std::size_t groups = 4;
    std::size_t window = 24;
    double dropout = 0.25;
    double hurst = 0.7;
    double sigma_noise = 0.05;
    std::string profile = "paper";

    void validate() const;
    static CrsnConfig paper_profile();
    static CrsnConfig desk_profile();
};

// Closed-form parameter counts for the configured shapes.
std::size_t crsn_param_count(const CrsnConfig& cfg);
std::size_t decoder_param_count(std::size_t d_in);

// A window of consecutive normalized records: rows [start, start+length) of
// a [N x kFeatureCount] feature matrix.
struct WindowInput {
    const Tensor* features = nullptr;
    std::size_t start = 0;
    std::size_t length = 0;
};

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

// Affine projection of the 43 inputs to d plus a learned positional offset
// per window index.
class EmbedLayer {
public:
    EmbedLayer() = default;
    EmbedLayer(ParamSet& ps, const std::string& prefix, std::size_t d, std::size_t window,
               const Rng& init);
    Tensor forward(const WindowInput& w);
    void backward(const Tensor& d_tokens);

private:
    Param* we_ = nullptr;
    Param* be_ = nullptr;
    Param* pos_ = nullptr;
    Tensor feats_cache_;
};

// Tokens split into m contiguous windows (cyclic when n < m); agent position
// = projection of the window mean plus a learned per-agent embedding.
// Velocities start at zero.
class AgentInit {
public:
    AgentInit() = default;
    AgentInit(ParamSet& ps, const std::string& prefix, std::size_t d, std::size_t m,
              const Rng& init);
    AgentPopulation forward(const Tensor& tokens);
    Tensor backward(const Tensor& d_positions); // returns d_tokens

private:
    std::size_t m_ = 0;
    Param* wa_ = nullptr;
    Param* emb_ = nullptr;
    Tensor means_cache_;
    std::vector<std::pair<std::size_t, std::size_t>> spans_; // [begin, end) per agent
    std::vector<std::size_t> cyclic_;                        // token index per agent when n < m
    std::size_t n_cache_ = 0;
};

// Two-level attention pooling: learned query within each of G groups, then a
// second learned query across the G summaries.
class HierAttention {
public:
    HierAttention() = default;
    HierAttention(ParamSet& ps, const std::string& prefix, std::size_t d, const Rng& init);
    Tensor forward(const Tensor& positions, std::size_t groups);
    Tensor backward(const Tensor& dz);

private:
    Param* q1_ = nullptr;
    Param* q2_ = nullptr;
    Tensor x_cache_;
    Tensor summaries_;
    Tensor alpha_; // [m] within-group weights
    Tensor beta_;  // [G]
    std::size_t groups_ = 0;
};

// Stage 1: hidden 128 + GELU (+dropout) -> 8 sigmoid removals.
// Stage 2: [z ; removals] -> hidden 128 + GELU -> softplus EC, softplus CE,
// softmax shares.
class TwoStageDecoder {
public:
    TwoStageDecoder() = default;
    TwoStageDecoder(ParamSet& ps, const std::string& prefix, std::size_t d_in, double dropout_rate,
                    const Rng& init);
    Prediction forward(const Tensor& z, Rng& rng, bool training);
    Tensor backward(const PredictionGrad& dp); // returns dz

private:
    std::size_t d_in_ = 0;
    double dropout_rate_ = 0.0;
    Dense h1_, removal_head_, h2_, ec_head_, ce_head_, share_head_;
    Tensor pre1_, act1_;
    DropoutMask drop_;
    Tensor stage2_in_, pre2_, act2_;
    Tensor pre_removals_, removals_, shares_;
    double pre_ec_ = 0.0, pre_ce_ = 0.0;
    bool training_ = false;
};

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

class SeqModel {
public:
    virtual ~SeqModel() = default;
    virtual ModelKind kind() const = 0;
    virtual const CrsnConfig& config() const = 0;
    virtual ParamSet& params() = 0;
    virtual const ParamSet& params() const = 0;
    virtual Prediction forward(const WindowInput& w, Rng rng, bool training) = 0;
    // Final agent positions of the last forward pass; null for baselines.
    virtual const Tensor* final_positions() const { return nullptr; }
    virtual void backward(const PredictionGrad& dpred, const Tensor* d_positions) = 0;
    // Mean per-iteration agent displacement of the last forward; 0 for
    // baselines.
    virtual double last_displacement() const { return 0.0; }
    virtual std::unique_ptr<SeqModel> clone() const = 0;
};

class CrsnModel : public SeqModel {
public:
    CrsnModel(const CrsnConfig& cfg, std::uint64_t init_seed);

    ModelKind kind() const override { return ModelKind::Crsn; }
    const CrsnConfig& config() const override { return cfg_; }
    ParamSet& params() override { return ps_; }
    const ParamSet& params() const override { return ps_; }
    Prediction forward(const WindowInput& w, Rng rng, bool training) override;
    const Tensor* final_positions() const override { return &final_positions_; }
    void backward(const PredictionGrad& dpred, const Tensor* d_positions) override;
    double last_displacement() const override { return last_displacement_; }
    std::unique_ptr<SeqModel> clone() const override;

    // Freeze every layer's inertia gate at a fixed value (sweep support).
    void freeze_gates(double gate_value);
    std::vector<SilLayer>& layers() { return sils_; }

private:
    CrsnConfig cfg_;
    std::uint64_t init_seed_;
    ParamSet ps_;
    EmbedLayer embed_;
    AgentInit agent_init_;
    std::vector<SilLayer> sils_;
    HierAttention hier_;
    TwoStageDecoder decoder_;
    FgnSampler fgn_;

    std::vector<SilCache> sil_caches_;
    Tensor tokens0_;
    Tensor final_positions_;
    double last_displacement_ = 0.0;
};

class MlpModel : public SeqModel {
public:
    static constexpr std::array<std::size_t, 4> kWidths = {512, 256, 128, 64};
    static constexpr double kDropout = 0.3;

    MlpModel(const CrsnConfig& cfg, std::uint64_t init_seed);

    ModelKind kind() const override { return ModelKind::Mlp; }
    const CrsnConfig& config() const override { return cfg_; }
    ParamSet& params() override { return ps_; }
    const ParamSet& params() const override { return ps_; }
    Prediction forward(const WindowInput& w, Rng rng, bool training) override;
    void backward(const PredictionGrad& dpred, const Tensor* d_positions) override;
    std::unique_ptr<SeqModel> clone() const override;

private:
    CrsnConfig cfg_;
    std::uint64_t init_seed_;
    ParamSet ps_;
    std::array<Dense, 4> hidden_;
    TwoStageDecoder decoder_;
    std::array<Tensor, 4> pre_;
    std::array<DropoutMask, 4> drop_;
    std::size_t window_cache_ = 0;
};

// Single-head scaled-dot-product self-attention with an explicit n x n
// weight matrix, a feed-forward block, mean pooling and the shared decoder
// heads. Exists to exhibit the quadratic token-pair cost.
class MiniAttnModel : public SeqModel {
public:
    MiniAttnModel(const CrsnConfig& cfg, std::uint64_t init_seed);

    ModelKind kind() const override { return ModelKind::MiniAttn; }
    const CrsnConfig& config() const override { return cfg_; }
    ParamSet& params() override { return ps_; }
    const ParamSet& params() const override { return ps_; }
    Prediction forward(const WindowInput& w, Rng rng, bool training) override;
    void backward(const PredictionGrad& dpred, const Tensor* d_positions) override;
    std::unique_ptr<SeqModel> clone() const override;

    // Timed interaction stage for the scaling benchmark: projections, the
    // n x n attention itself and the output mix, without embed/decode.
    Tensor attention_stage(const Tensor& tokens);

private:
    CrsnConfig cfg_;
    std::uint64_t init_seed_;
    ParamSet ps_;
    EmbedLayer embed_;
    Dense wq_, wk_, wv_, wo_;
    Param* ln1_gain_ = nullptr;
    Param* ln1_bias_ = nullptr;
    Dense ff1_, ff2_;
    Param* ln2_gain_ = nullptr;
    Param* ln2_bias_ = nullptr;
    TwoStageDecoder decoder_;

    Tensor q_, k_, attn_, vmat_, mixed_, h_, ff_pre_, f_;
    LayerNormCache ln1_cache_, ln2_cache_;
    std::size_t n_cache_ = 0;
};

std::unique_ptr<SeqModel> make_model(ModelKind kind, const CrsnConfig& cfg,
                                     std::uint64_t init_seed);

} // namespace crsn

#endif
