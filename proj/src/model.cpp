#include "crsn/model.hpp"

#include <cmath>

#include "crsn/error.hpp"

namespace crsn {

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Crsn: return "crsn";
        case ModelKind::Mlp: return "mlp";
        case ModelKind::MiniAttn: return "mini_attn";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& s) {
    if (s == "crsn") return ModelKind::Crsn;
    if (s == "mlp") return ModelKind::Mlp;
    if (s == "mini_attn") return ModelKind::MiniAttn;
    throw ConfigError("unknown model kind '" + s + "' (expected crsn|mlp|mini_attn)");
}

void CrsnConfig::validate() const {
    if (d_model < 2) throw ConfigError("model.d_model: must be >= 2");
    if (layers < 1) throw ConfigError("model.layers: must be >= 1");
    if (agents < 1) throw ConfigError("model.m: must be >= 1");
    if (groups < 1 || agents % groups != 0)
        throw ConfigError("model.groups: must be >= 1 and divide model.m");
    if (window < 1) throw ConfigError("data.window: must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout: must lie in [0,1)");
    if (!(hurst > 0.0 && hurst < 1.0)) throw ConfigError("model.hurst: must lie in (0,1)");
}

CrsnConfig CrsnConfig::paper_profile() { return CrsnConfig{}; }

CrsnConfig CrsnConfig::desk_profile() {
    CrsnConfig c;
    c.d_model = 64;
    c.layers = 3;
    c.agents = 8;
    c.groups = 4;
    c.profile = "desk";
    return c;
}

std::size_t decoder_param_count(std::size_t d_in) {
    const std::size_t h = kDecoderHidden;
    const std::size_t p = kPollutantCount;
    std::size_t n = 0;
    n += d_in * h + h;       // stage-1 hidden
    n += h * p + p;          // removal head
    n += (d_in + p) * h + h; // stage-2 hidden
    n += h + 1;              // EC head
    n += h + 1;              // CE head
    n += h * p + p;          // share head
    return n;
}

std::size_t crsn_param_count(const CrsnConfig& cfg) {
    const std::size_t d = cfg.d_model;
    std::size_t n = 0;
    n += kFeatureCount * d + d + cfg.window * d;       // embedding + positional
    n += d * d + cfg.agents * d;                       // agent init
    n += cfg.layers * (4 * d * d + d + 2 * d + 2);     // per SIL
    n += 2 * d;                                        // hierarchical queries
    n += decoder_param_count(d);
    return n;
}

// ---------------------------------------------------------------------------
// EmbedLayer
// ---------------------------------------------------------------------------

EmbedLayer::EmbedLayer(ParamSet& ps, const std::string& prefix, std::size_t d, std::size_t window,
                       const Rng& init) {
    we_ = &ps.add(prefix + ".We", gaussian_init({kFeatureCount, d}, kFeatureCount, init, prefix + ".We"));
    be_ = &ps.add(prefix + ".be", Tensor({d}));
    pos_ = &ps.add(prefix + ".pos", gaussian_init({window, d}, d, init, prefix + ".pos"));
}

Tensor EmbedLayer::forward(const WindowInput& w) {
    const std::size_t n = w.length;
    if (n != pos_->value.rows())
        throw ShapeError("embed: window length disagrees with positional table");
    if (w.features->cols() != kFeatureCount)
        throw SchemaError("embed: records must carry " + std::to_string(kFeatureCount) +
                          " features");
    feats_cache_ = Tensor({n, kFeatureCount});
    for (std::size_t t = 0; t < n; ++t) {
        const double* src = w.features->row(w.start + t);
        double* dst = feats_cache_.row(t);
        for (std::size_t j = 0; j < kFeatureCount; ++j) dst[j] = src[j];
    }
    Tensor tokens = matmul(feats_cache_, we_->value);
    const std::size_t d = tokens.cols();
    for (std::size_t t = 0; t < n; ++t) {
        double* row = tokens.row(t);
        const double* pr = pos_->value.row(t);
        for (std::size_t j = 0; j < d; ++j) row[j] += be_->value[j] + pr[j];
    }
    return tokens;
}

void EmbedLayer::backward(const Tensor& d_tokens) {
    add_inplace(we_->grad, matmul_tn(feats_cache_, d_tokens));
    const std::size_t d = d_tokens.cols();
    for (std::size_t t = 0; t < d_tokens.rows(); ++t) {
        const double* row = d_tokens.row(t);
        double* pr = pos_->grad.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            be_->grad[j] += row[j];
            pr[j] += row[j];
        }
    }
}

// ---------------------------------------------------------------------------
// AgentInit
// ---------------------------------------------------------------------------

AgentInit::AgentInit(ParamSet& ps, const std::string& prefix, std::size_t d, std::size_t m,
                     const Rng& init)
    : m_(m) {
    wa_ = &ps.add(prefix + ".Wa", gaussian_init({d, d}, d, init, prefix + ".Wa"));
    emb_ = &ps.add(prefix + ".emb", gaussian_init({m, d}, d, init, prefix + ".emb"));
}

AgentPopulation AgentInit::forward(const Tensor& tokens) {
    const std::size_t n = tokens.rows(), d = tokens.cols();
    n_cache_ = n;
    spans_.clear();
    cyclic_.clear();
    means_cache_ = Tensor({m_, d});
    if (n >= m_) {
        for (std::size_t i = 0; i < m_; ++i) {
            const std::size_t b = i * n / m_;
            const std::size_t e = (i + 1) * n / m_;
            spans_.emplace_back(b, e);
            double* mi = means_cache_.row(i);
            for (std::size_t t = b; t < e; ++t) {
                const double* row = tokens.row(t);
                for (std::size_t j = 0; j < d; ++j) mi[j] += row[j];
            }
            const double inv = 1.0 / static_cast<double>(e - b);
            for (std::size_t j = 0; j < d; ++j) mi[j] *= inv;
        }
    } else {
        for (std::size_t i = 0; i < m_; ++i) {
            const std::size_t t = i % n;
            cyclic_.push_back(t);
            const double* row = tokens.row(t);
            double* mi = means_cache_.row(i);
            for (std::size_t j = 0; j < d; ++j) mi[j] = row[j];
        }
    }
    AgentPopulation pop(m_, d);
    pop.positions = add(matmul(means_cache_, wa_->value), emb_->value);
    return pop;
}

Tensor AgentInit::backward(const Tensor& d_positions) {
    const std::size_t d = d_positions.cols();
    add_inplace(emb_->grad, d_positions);
    add_inplace(wa_->grad, matmul_tn(means_cache_, d_positions));
    Tensor d_means = matmul_nt(d_positions, wa_->value);
    Tensor d_tokens({n_cache_, d});
    if (!spans_.empty()) {
        for (std::size_t i = 0; i < m_; ++i) {
            const auto [b, e] = spans_[i];
            const double inv = 1.0 / static_cast<double>(e - b);
            const double* dm = d_means.row(i);
            for (std::size_t t = b; t < e; ++t) {
                double* row = d_tokens.row(t);
                for (std::size_t j = 0; j < d; ++j) row[j] += inv * dm[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m_; ++i) {
            double* row = d_tokens.row(cyclic_[i]);
            const double* dm = d_means.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] += dm[j];
        }
    }
    return d_tokens;
}

// ---------------------------------------------------------------------------
// HierAttention
// ---------------------------------------------------------------------------

HierAttention::HierAttention(ParamSet& ps, const std::string& prefix, std::size_t d,
                             const Rng& init) {
    q1_ = &ps.add(prefix + ".q1", gaussian_init({d}, d, init, prefix + ".q1"));
    q2_ = &ps.add(prefix + ".q2", gaussian_init({d}, d, init, prefix + ".q2"));
}

Tensor HierAttention::forward(const Tensor& positions, std::size_t groups) {
    const std::size_t m = positions.rows(), d = positions.cols();
    if (groups < 1 || m % groups != 0)
        throw ConfigError("model.groups: group count must divide the agent count");
    groups_ = groups;
    x_cache_ = positions;
    const std::size_t gs = m / groups;
    alpha_ = Tensor({m});
    summaries_ = Tensor({groups, d});
    for (std::size_t g = 0; g < groups; ++g) {
        double* a = alpha_.data() + g * gs;
        for (std::size_t k = 0; k < gs; ++k) {
            const double* xi = positions.row(g * gs + k);
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += xi[j] * q1_->value[j];
            a[k] = acc;
        }
        softmax_inplace(a, gs);
        double* sg = summaries_.row(g);
        for (std::size_t k = 0; k < gs; ++k) {
            const double* xi = positions.row(g * gs + k);
            for (std::size_t j = 0; j < d; ++j) sg[j] += a[k] * xi[j];
        }
    }
    beta_ = Tensor({groups});
    for (std::size_t g = 0; g < groups; ++g) {
        const double* sg = summaries_.row(g);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += sg[j] * q2_->value[j];
        beta_[g] = acc;
    }
    softmax_inplace(beta_.data(), groups);
    Tensor z({d});
    for (std::size_t g = 0; g < groups; ++g) {
        const double* sg = summaries_.row(g);
        for (std::size_t j = 0; j < d; ++j) z[j] += beta_[g] * sg[j];
    }
    return z;
}

Tensor HierAttention::backward(const Tensor& dz) {
    const std::size_t m = x_cache_.rows(), d = x_cache_.cols();
    const std::size_t gs = m / groups_;
    Tensor d_summ({groups_, d});
    Tensor d_beta({groups_});
    for (std::size_t g = 0; g < groups_; ++g) {
        const double* sg = summaries_.row(g);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            d_summ(g, j) = beta_[g] * dz[j];
            acc += sg[j] * dz[j];
        }
        d_beta[g] = acc;
    }
    Tensor d_t({groups_});
    softmax_backward_row(beta_.data(), d_beta.data(), d_t.data(), groups_);
    for (std::size_t g = 0; g < groups_; ++g) {
        const double* sg = summaries_.row(g);
        for (std::size_t j = 0; j < d; ++j) {
            d_summ(g, j) += d_t[g] * q2_->value[j];
            q2_->grad[j] += d_t[g] * sg[j];
        }
    }
    Tensor dx({m, d});
    for (std::size_t g = 0; g < groups_; ++g) {
        const double* a = alpha_.data() + g * gs;
        const double* dsg = d_summ.row(g);
        std::vector<double> d_alpha(gs), d_score(gs);
        for (std::size_t k = 0; k < gs; ++k) {
            const double* xi = x_cache_.row(g * gs + k);
            double acc = 0.0;
            double* dxi = dx.row(g * gs + k);
            for (std::size_t j = 0; j < d; ++j) {
                dxi[j] += a[k] * dsg[j];
                acc += xi[j] * dsg[j];
            }
            d_alpha[k] = acc;
        }
        softmax_backward_row(a, d_alpha.data(), d_score.data(), gs);
        for (std::size_t k = 0; k < gs; ++k) {
            const double* xi = x_cache_.row(g * gs + k);
            double* dxi = dx.row(g * gs + k);
            for (std::size_t j = 0; j < d; ++j) {
                dxi[j] += d_score[k] * q1_->value[j];
                q1_->grad[j] += d_score[k] * xi[j];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// TwoStageDecoder
// ---------------------------------------------------------------------------

TwoStageDecoder::TwoStageDecoder(ParamSet& ps, const std::string& prefix, std::size_t d_in,
                                 double dropout_rate, const Rng& init)
    : d_in_(d_in), dropout_rate_(dropout_rate) {
    h1_ = Dense(ps, prefix + ".h1", d_in, kDecoderHidden, init);
    removal_head_ = Dense(ps, prefix + ".removal", kDecoderHidden, kPollutantCount, init);
    h2_ = Dense(ps, prefix + ".h2", d_in + kPollutantCount, kDecoderHidden, init);
    ec_head_ = Dense(ps, prefix + ".ec", kDecoderHidden, 1, init);
    ce_head_ = Dense(ps, prefix + ".ce", kDecoderHidden, 1, init);
    share_head_ = Dense(ps, prefix + ".share", kDecoderHidden, kPollutantCount, init);
}

Prediction TwoStageDecoder::forward(const Tensor& z, Rng& rng, bool training) {
    if (z.size() != d_in_) throw ShapeError("decoder: input width disagrees");
    training_ = training;
    pre1_ = h1_.forward(z);
    act1_ = activation(Activation::Gelu, pre1_);
    Tensor a1 = training ? dropout(act1_, dropout_rate_, rng, &drop_) : act1_;
    pre_removals_ = removal_head_.forward(a1);
    removals_ = activation(Activation::Sigmoid, pre_removals_);

    stage2_in_ = Tensor({d_in_ + kPollutantCount});
    for (std::size_t j = 0; j < d_in_; ++j) stage2_in_[j] = z[j];
    for (std::size_t j = 0; j < kPollutantCount; ++j) stage2_in_[d_in_ + j] = removals_[j];
    pre2_ = h2_.forward(stage2_in_);
    act2_ = activation(Activation::Gelu, pre2_);
    pre_ec_ = ec_head_.forward(act2_)[0];
    pre_ce_ = ce_head_.forward(act2_)[0];
    shares_ = share_head_.forward(act2_);
    softmax_inplace(shares_.data(), kPollutantCount);

    Prediction p;
    for (std::size_t j = 0; j < kPollutantCount; ++j) {
        p.removals[j] = removals_[j];
        p.shares[j] = shares_[j];
    }
    p.ec = softplus(pre_ec_);
    p.ce = softplus(pre_ce_);
    return p;
}

Tensor TwoStageDecoder::backward(const PredictionGrad& dp) {
    Tensor d_spre({kPollutantCount});
    softmax_backward_row(shares_.data(), dp.shares.data(), d_spre.data(), kPollutantCount);
    Tensor d_act2 = share_head_.backward(d_spre);
    Tensor d_ec({1});
    d_ec[0] = dp.ec * sigmoid(pre_ec_); // softplus' = sigmoid
    add_inplace(d_act2, ec_head_.backward(d_ec));
    Tensor d_ce({1});
    d_ce[0] = dp.ce * sigmoid(pre_ce_);
    add_inplace(d_act2, ce_head_.backward(d_ce));

    Tensor d_pre2 = d_act2;
    for (std::size_t j = 0; j < d_pre2.size(); ++j) d_pre2[j] *= gelu_grad(pre2_[j]);
    Tensor d_stage2 = h2_.backward(d_pre2);

    Tensor dz({d_in_});
    for (std::size_t j = 0; j < d_in_; ++j) dz[j] = d_stage2[j];
    Tensor d_removals({kPollutantCount});
    for (std::size_t j = 0; j < kPollutantCount; ++j)
        d_removals[j] = dp.removals[j] + d_stage2[d_in_ + j];
    Tensor d_pre_rem({kPollutantCount});
    for (std::size_t j = 0; j < kPollutantCount; ++j) {
        const double s = removals_[j];
        d_pre_rem[j] = d_removals[j] * s * (1.0 - s);
    }
    Tensor d_a1 = removal_head_.backward(d_pre_rem);
    if (training_) d_a1 = hadamard(d_a1, drop_.mask);
    for (std::size_t j = 0; j < d_a1.size(); ++j) d_a1[j] *= gelu_grad(pre1_[j]);
    add_inplace(dz, h1_.backward(d_a1));
    return dz;
}

// ---------------------------------------------------------------------------
// CrsnModel
// ---------------------------------------------------------------------------

CrsnModel::CrsnModel(const CrsnConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), init_seed_(init_seed), fgn_(cfg.hurst, cfg.layers) {
    cfg_.validate();
    Rng init(init_seed, 0);
    embed_ = EmbedLayer(ps_, "embed", cfg_.d_model, cfg_.window, init);
    agent_init_ = AgentInit(ps_, "agents", cfg_.d_model, cfg_.agents, init);
    sils_.reserve(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l)
        sils_.emplace_back(ps_, "sil" + std::to_string(l), cfg_.d_model, init, cfg_.dropout, 1.6,
                           1.6, cfg_.sigma_noise);
    hier_ = HierAttention(ps_, "hier", cfg_.d_model, init);
    decoder_ = TwoStageDecoder(ps_, "decoder", cfg_.d_model, cfg_.dropout, init);
    sil_caches_.resize(cfg_.layers);
}

Prediction CrsnModel::forward(const WindowInput& w, Rng rng, bool training) {
    const std::size_t m = cfg_.agents, d = cfg_.d_model, L = cfg_.layers;
    tokens0_ = embed_.forward(w);
    AgentPopulation pop = agent_init_.forward(tokens0_);

    // Per-coordinate fGn sequences across the layer stack.
    std::vector<Tensor> noise_blocks;
    if (training) {
        noise_blocks.assign(L, Tensor({m, d}));
        Rng fgn_rng = rng.split(6);
        std::vector<double> z(L);
        const Tensor& fac = fgn_.factor();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                for (std::size_t l = 0; l < L; ++l) z[l] = fgn_rng.normal();
                for (std::size_t l = 0; l < L; ++l) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k <= l; ++k) acc += fac(l, k) * z[k];
                    noise_blocks[l](i, j) = acc;
                }
            }
    }

    Tensor tokens = tokens0_;
    double disp = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        Rng layer_rng = rng.split(10 + l);
        SilNoise rnd = SilLayer::sample_noise(m, d, cfg_.dropout, layer_rng, training,
                                              training ? &noise_blocks[l] : nullptr);
        Tensor tokens_out;
        AgentPopulation pop_out;
        sils_[l].forward(tokens, pop, std::move(rnd), tokens_out, pop_out, sil_caches_[l]);
        double layer_disp = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double* vi = pop_out.velocities.row(i);
            double norm2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) norm2 += vi[j] * vi[j];
            layer_disp += std::sqrt(norm2);
        }
        disp += layer_disp / static_cast<double>(m);
        tokens = std::move(tokens_out);
        pop = std::move(pop_out);
    }
    last_displacement_ = disp / static_cast<double>(L);
    final_positions_ = pop.positions;

    Tensor z = hier_.forward(final_positions_, cfg_.groups);
    Rng dec_rng = rng.split(20);
    return decoder_.forward(z, dec_rng, training);
}

void CrsnModel::backward(const PredictionGrad& dpred, const Tensor* d_positions) {
    const std::size_t m = cfg_.agents, d = cfg_.d_model, L = cfg_.layers;
    Tensor dz = decoder_.backward(dpred);
    Tensor d_x = hier_.backward(dz);
    if (d_positions) add_inplace(d_x, *d_positions);
    Tensor d_tokens({sil_caches_[L - 1].tokens.rows(), d});
    Tensor d_v({m, d});
    for (std::size_t l = L; l-- > 0;) {
        SilGrads g = sils_[l].backward(sil_caches_[l], d_tokens, d_x, d_v);
        d_tokens = std::move(g.tokens);
        d_x = std::move(g.x);
        d_v = std::move(g.v);
    }
    add_inplace(d_tokens, agent_init_.backward(d_x));
    embed_.backward(d_tokens);
}

std::unique_ptr<SeqModel> CrsnModel::clone() const {
    auto copy = std::make_unique<CrsnModel>(cfg_, init_seed_);
    for (std::size_t i = 0; i < ps_.count(); ++i) {
        copy->ps_.at(i).value = ps_.at(i).value;
        copy->ps_.at(i).trainable = ps_.at(i).trainable;
    }
    return copy;
}

void CrsnModel::freeze_gates(double gate_value) {
    for (auto& sil : sils_) sil.freeze_gate(gate_value);
}

// ---------------------------------------------------------------------------
// MlpModel
// ---------------------------------------------------------------------------

MlpModel::MlpModel(const CrsnConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), init_seed_(init_seed) {
    Rng init(init_seed, 0);
    std::size_t in = kFeatureCount;
    for (std::size_t i = 0; i < kWidths.size(); ++i) {
        hidden_[i] = Dense(ps_, "mlp.h" + std::to_string(i), in, kWidths[i], init);
        in = kWidths[i];
    }
    decoder_ = TwoStageDecoder(ps_, "decoder", kWidths.back(), kDropout, init);
}

Prediction MlpModel::forward(const WindowInput& w, Rng rng, bool training) {
    window_cache_ = w.length;
    Tensor x({kFeatureCount});
    const double inv = 1.0 / static_cast<double>(w.length);
    for (std::size_t t = 0; t < w.length; ++t) {
        const double* row = w.features->row(w.start + t);
        for (std::size_t j = 0; j < kFeatureCount; ++j) x[j] += row[j];
    }
    for (std::size_t j = 0; j < kFeatureCount; ++j) x[j] *= inv;

    for (std::size_t i = 0; i < kWidths.size(); ++i) {
        pre_[i] = hidden_[i].forward(x);
        x = activation(Activation::Gelu, pre_[i]);
        if (training) {
            Rng layer_rng = rng.split(30 + i);
            x = dropout(x, kDropout, layer_rng, &drop_[i]);
        } else {
            drop_[i].mask = Tensor();
        }
    }
    Rng dec_rng = rng.split(20);
    return decoder_.forward(x, dec_rng, training);
}

void MlpModel::backward(const PredictionGrad& dpred, const Tensor* d_positions) {
    (void)d_positions;
    Tensor dx = decoder_.backward(dpred);
    for (std::size_t i = kWidths.size(); i-- > 0;) {
        if (drop_[i].mask.size() == dx.size()) dx = hadamard(dx, drop_[i].mask);
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] *= gelu_grad(pre_[i][j]);
        dx = hidden_[i].backward(dx);
    }
}

std::unique_ptr<SeqModel> MlpModel::clone() const {
    auto copy = std::make_unique<MlpModel>(cfg_, init_seed_);
    for (std::size_t i = 0; i < ps_.count(); ++i) {
        copy->ps_.at(i).value = ps_.at(i).value;
        copy->ps_.at(i).trainable = ps_.at(i).trainable;
    }
    return copy;
}

// ---------------------------------------------------------------------------
// MiniAttnModel
// ---------------------------------------------------------------------------

MiniAttnModel::MiniAttnModel(const CrsnConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), init_seed_(init_seed) {
    cfg_.validate();
    const std::size_t d = cfg_.d_model;
    Rng init(init_seed, 0);
    embed_ = EmbedLayer(ps_, "embed", d, cfg_.window, init);
    wq_ = Dense(ps_, "attn.q", d, d, init);
    wk_ = Dense(ps_, "attn.k", d, d, init);
    wv_ = Dense(ps_, "attn.v", d, d, init);
    wo_ = Dense(ps_, "attn.o", d, d, init);
    ln1_gain_ = &ps_.add("attn.ln1_gain", Tensor::full({d}, 1.0));
    ln1_bias_ = &ps_.add("attn.ln1_bias", Tensor({d}));
    ff1_ = Dense(ps_, "ff.1", d, 2 * d, init);
    ff2_ = Dense(ps_, "ff.2", 2 * d, d, init);
    ln2_gain_ = &ps_.add("attn.ln2_gain", Tensor::full({d}, 1.0));
    ln2_bias_ = &ps_.add("attn.ln2_bias", Tensor({d}));
    decoder_ = TwoStageDecoder(ps_, "decoder", d, cfg_.dropout, init);
}

Tensor MiniAttnModel::attention_stage(const Tensor& tokens) {
    const std::size_t n = tokens.rows(), d = tokens.cols();
    n_cache_ = n;
    q_ = wq_.forward(tokens);
    k_ = wk_.forward(tokens);
    vmat_ = wv_.forward(tokens);
    attn_ = matmul_nt(q_, k_);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < attn_.size(); ++i) attn_[i] *= inv_sqrt_d;
    for (std::size_t i = 0; i < n; ++i) softmax_inplace(attn_.row(i), n);
    mixed_ = matmul(attn_, vmat_);
    return wo_.forward(mixed_);
}

Prediction MiniAttnModel::forward(const WindowInput& w, Rng rng, bool training) {
    const std::size_t d = cfg_.d_model;
    Tensor tokens = embed_.forward(w);
    Tensor mixed = attention_stage(tokens);
    Tensor h_pre = add(tokens, mixed);
    h_ = layer_norm(h_pre, ln1_gain_->value, ln1_bias_->value, 1e-5, &ln1_cache_);
    ff_pre_ = ff1_.forward(h_);
    Tensor ff_act = activation(Activation::Gelu, ff_pre_);
    Tensor f_pre = add(h_, ff2_.forward(ff_act));
    f_ = layer_norm(f_pre, ln2_gain_->value, ln2_bias_->value, 1e-5, &ln2_cache_);

    Tensor z({d});
    const double inv_n = 1.0 / static_cast<double>(f_.rows());
    for (std::size_t t = 0; t < f_.rows(); ++t) {
        const double* row = f_.row(t);
        for (std::size_t j = 0; j < d; ++j) z[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) z[j] *= inv_n;
    Rng dec_rng = rng.split(20);
    return decoder_.forward(z, dec_rng, training);
}

void MiniAttnModel::backward(const PredictionGrad& dpred, const Tensor* d_positions) {
    (void)d_positions;
    const std::size_t n = n_cache_, d = cfg_.d_model;
    Tensor dz = decoder_.backward(dpred);
    Tensor d_f({n, d});
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
        double* row = d_f.row(t);
        for (std::size_t j = 0; j < d; ++j) row[j] = inv_n * dz[j];
    }
    Tensor d_f_pre = layer_norm_backward(d_f, ln2_gain_->value, ln2_cache_, ln2_gain_->grad,
                                         ln2_bias_->grad);
    Tensor d_h = d_f_pre;
    Tensor d_ff_act = ff2_.backward(d_f_pre);
    for (std::size_t i = 0; i < d_ff_act.size(); ++i) d_ff_act[i] *= gelu_grad(ff_pre_[i]);
    add_inplace(d_h, ff1_.backward(d_ff_act));
    Tensor d_h_pre = layer_norm_backward(d_h, ln1_gain_->value, ln1_cache_, ln1_gain_->grad,
                                         ln1_bias_->grad);
    Tensor d_tokens = d_h_pre;
    Tensor d_mixed = wo_.backward(d_h_pre);
    Tensor d_attn = matmul_nt(d_mixed, vmat_);
    Tensor d_v = matmul_tn(attn_, d_mixed);
    Tensor d_scores({n, n});
    for (std::size_t i = 0; i < n; ++i)
        softmax_backward_row(attn_.row(i), d_attn.row(i), d_scores.row(i), n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d_scores.size(); ++i) d_scores[i] *= inv_sqrt_d;
    // S = Q K^T: dQ = dS K, dK = dS^T Q.
    Tensor d_q = matmul(d_scores, k_);
    Tensor d_k = matmul_tn(d_scores, q_);
    add_inplace(d_tokens, wq_.backward(d_q));
    add_inplace(d_tokens, wk_.backward(d_k));
    add_inplace(d_tokens, wv_.backward(d_v));
    embed_.backward(d_tokens);
}

std::unique_ptr<SeqModel> MiniAttnModel::clone() const {
    auto copy = std::make_unique<MiniAttnModel>(cfg_, init_seed_);
    for (std::size_t i = 0; i < ps_.count(); ++i) {
        copy->ps_.at(i).value = ps_.at(i).value;
        copy->ps_.at(i).trainable = ps_.at(i).trainable;
    }
    return copy;
}

std::unique_ptr<SeqModel> make_model(ModelKind kind, const CrsnConfig& cfg,
                                     std::uint64_t init_seed) {
    switch (kind) {
        case ModelKind::Crsn: return std::make_unique<CrsnModel>(cfg, init_seed);
        case ModelKind::Mlp: return std::make_unique<MlpModel>(cfg, init_seed);
        case ModelKind::MiniAttn: return std::make_unique<MiniAttnModel>(cfg, init_seed);
    }
    throw ConfigError("make_model: unknown kind");
}

} // namespace crsn
