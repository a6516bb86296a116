#include "crsn/sil.hpp"

#include <cmath>

#include "crsn/error.hpp"

namespace crsn {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kSigClamp = 1e-12;
} // namespace

double inertia_gate(double raw) {
    double s = sigmoid(raw);
    if (s < kSigClamp) s = kSigClamp;
    if (s > 1.0 - kSigClamp) s = 1.0 - kSigClamp;
    return 0.3 + 0.6 * s;
}

double inertia_gate_grad(double raw) {
    const double s = sigmoid(raw);
    return 0.6 * s * (1.0 - s);
}

double inertia_gate_inverse(double gate) {
    if (!(gate > 0.3 && gate < 0.9))
        throw RangeError("inertia gate value must lie in (0.3, 0.9)");
    const double p = (gate - 0.3) / 0.6;
    return std::log(p / (1.0 - p));
}

AgentPopulation velocity_update(const AgentPopulation& pop, const Tensor& local_attractor,
                                const Tensor& global_attractor, double w, double c1, double c2,
                                const Tensor& r1, const Tensor& r2, const Tensor& drive,
                                const Tensor& noise, double sigma) {
    const Tensor& x = pop.positions;
    const Tensor& v = pop.velocities;
    const std::size_t m = x.rows(), d = x.cols();
    if (!v.same_shape(x) || !local_attractor.same_shape(x) || !r1.same_shape(x) ||
        !r2.same_shape(x) || !drive.same_shape(x) || !noise.same_shape(x))
        throw ShapeError("velocity_update: population-shaped inputs disagree");
    if (global_attractor.size() != d)
        throw ShapeError("velocity_update: global attractor width disagrees");

    AgentPopulation out(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        const double* vi = v.row(i);
        const double* pi = local_attractor.row(i);
        const double* r1i = r1.row(i);
        const double* r2i = r2.row(i);
        const double* di = drive.row(i);
        const double* ni = noise.row(i);
        double* vo = out.velocities.row(i);
        double* xo = out.positions.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double vp = w * vi[j] + c1 * r1i[j] * (pi[j] - xi[j]) +
                              c2 * r2i[j] * (global_attractor[j] - xi[j]) + di[j] +
                              sigma * ni[j];
            vo[j] = vp;
            xo[j] = xi[j] + vp;
        }
    }
    return out;
}

SilLayer::SilLayer(ParamSet& ps, const std::string& prefix, std::size_t d, const Rng& init,
                   double dropout_rate, double c1, double c2, double sigma_init)
    : d_(d), dropout_rate_(dropout_rate), c1_(c1), c2_(c2) {
    if (c1 <= 0.0 || c2 <= 0.0) throw RangeError("sil: acceleration coefficients must be positive");
    wk_ = &ps.add(prefix + ".Wk", gaussian_init({d, d}, d, init, prefix + ".Wk"));
    wo_ = &ps.add(prefix + ".Wo", gaussian_init({d, d}, d, init, prefix + ".Wo"));
    wp_ = &ps.add(prefix + ".Wp", gaussian_init({d, d}, d, init, prefix + ".Wp"));
    wg_ = &ps.add(prefix + ".Wg", gaussian_init({d, d}, d, init, prefix + ".Wg"));
    u_ = &ps.add(prefix + ".u", gaussian_init({d}, d, init, prefix + ".u"));
    ln_gain_ = &ps.add(prefix + ".ln_gain", Tensor::full({d}, 1.0));
    ln_bias_ = &ps.add(prefix + ".ln_bias", Tensor({d}));
    w_raw_ = &ps.add(prefix + ".w_raw", Tensor({1})); // gate(0) = 0.6
    sigma_raw_ = &ps.add(prefix + ".sigma", Tensor::full({1}, sigma_init));
}

void SilLayer::freeze_gate(double gate_value) {
    w_raw_->value[0] = inertia_gate_inverse(gate_value);
    w_raw_->trainable = false;
}

SilNoise SilLayer::sample_noise(std::size_t m, std::size_t d, double dropout_rate, Rng& rng,
                                bool training, const Tensor* fgn_block) {
    SilNoise rnd;
    rnd.training = training;
    if (training) {
        rnd.r1 = Tensor({m, d});
        rnd.r2 = Tensor({m, d});
        for (std::size_t i = 0; i < m * d; ++i) rnd.r1[i] = rng.uniform();
        for (std::size_t i = 0; i < m * d; ++i) rnd.r2[i] = rng.uniform();
        if (fgn_block) {
            rnd.noise = *fgn_block;
        } else {
            rnd.noise = Tensor({m, d});
            for (std::size_t i = 0; i < m * d; ++i) rnd.noise[i] = rng.normal();
        }
        Tensor ones = Tensor::full({m, d}, 1.0);
        dropout(ones, dropout_rate, rng, &rnd.drop);
    } else {
        rnd.r1 = Tensor::full({m, d}, 0.5);
        rnd.r2 = Tensor::full({m, d}, 0.5);
        rnd.noise = Tensor({m, d});
        rnd.drop.mask = Tensor::full({m, d}, 1.0);
    }
    return rnd;
}

void SilLayer::forward(const Tensor& tokens, const AgentPopulation& pop, Rng& rng, bool training,
                       Tensor& tokens_out, AgentPopulation& pop_out, SilCache& cache) const {
    SilNoise rnd = sample_noise(pop.agents(), d_, dropout_rate_, rng, training, nullptr);
    forward(tokens, pop, std::move(rnd), tokens_out, pop_out, cache);
}

void SilLayer::forward(const Tensor& tokens, const AgentPopulation& pop, SilNoise rnd,
                       Tensor& tokens_out, AgentPopulation& pop_out, SilCache& cache) const {
    const std::size_t n = tokens.rows();
    const std::size_t m = pop.agents();
    if (n < 1 || m < 1) throw ShapeError("sil: need at least one token and one agent");
    if (tokens.cols() != d_ || pop.dim() != d_)
        throw ShapeError("sil: embedding width disagrees with layer");

    cache.tokens = tokens;
    cache.x = pop.positions;
    cache.v = pop.velocities;
    cache.rnd = std::move(rnd);

    // (1) per-agent observation: attention of each agent over the tokens.
    cache.keys = matmul(cache.x, wk_->value);
    Tensor scores = matmul_nt(cache.keys, tokens);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_));
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] *= inv_sqrt_d;
    for (std::size_t i = 0; i < m; ++i) softmax_inplace(scores.row(i), n);
    cache.attn = std::move(scores);
    cache.obs = matmul(cache.attn, tokens);
    if (!cache.obs.all_finite()) throw NumericError("sil stage 1 (observation): non-finite value");

    // (2) local attractors.
    cache.local = add(cache.x, matmul(cache.obs, wp_->value));
    if (!cache.local.all_finite())
        throw NumericError("sil stage 2 (local attractor): non-finite value");

    // (3) soft global best.
    cache.score = Tensor({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* xi = cache.x.row(i);
        for (std::size_t j = 0; j < d_; ++j) acc += xi[j] * u_->value[j];
        cache.score[i] = acc;
    }
    cache.beta = cache.score;
    softmax_inplace(cache.beta.data(), m);
    cache.global_best = Tensor({d_});
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = cache.x.row(i);
        for (std::size_t j = 0; j < d_; ++j) cache.global_best[j] += cache.beta[i] * xi[j];
    }
    if (!cache.global_best.all_finite())
        throw NumericError("sil stage 3 (global best): non-finite value");

    // (4) inertia-gated velocity update.
    cache.drive_raw = matmul(cache.obs, wo_->value);
    Tensor drive = hadamard(cache.drive_raw, cache.rnd.drop.mask);
    cache.w = inertia_gate(w_raw_->value[0]);
    cache.sigma = std::max(sigma_raw_->value[0], 0.0);
    AgentPopulation in_pop;
    in_pop.positions = cache.x;
    in_pop.velocities = cache.v;
    AgentPopulation updated = velocity_update(in_pop, cache.local, cache.global_best, cache.w, c1_,
                                              c2_, cache.rnd.r1, cache.rnd.r2, drive,
                                              cache.rnd.noise, cache.sigma);
    cache.v_next = updated.velocities;
    cache.x_next = updated.positions;
    if (!cache.x_next.all_finite() || !cache.v_next.all_finite())
        throw NumericError("sil stage 4 (velocity update): non-finite value");

    // (5) token feedback through the mean updated position.
    cache.gbar = Tensor({d_});
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = cache.x_next.row(i);
        for (std::size_t j = 0; j < d_; ++j) cache.gbar[j] += xi[j];
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < d_; ++j) cache.gbar[j] *= inv_m;
    cache.feedback = vecmat(cache.gbar, wg_->value);
    Tensor pre_ln = tokens;
    for (std::size_t t = 0; t < n; ++t) {
        double* row = pre_ln.row(t);
        for (std::size_t j = 0; j < d_; ++j) row[j] += cache.feedback[j];
    }
    tokens_out = layer_norm(pre_ln, ln_gain_->value, ln_bias_->value, kLnEps, &cache.ln);
    if (!tokens_out.all_finite())
        throw NumericError("sil stage 5 (token feedback): non-finite value");

    pop_out.positions = cache.x_next;
    pop_out.velocities = cache.v_next;
}

SilGrads SilLayer::backward(const SilCache& cache, const Tensor& d_tokens_out,
                            const Tensor& d_x_out, const Tensor& d_v_out) const {
    const std::size_t n = cache.tokens.rows();
    const std::size_t m = cache.x.rows();
    if (d_tokens_out.rows() != n || d_x_out.rows() != m || d_v_out.rows() != m)
        throw ContractError("sil backward: gradient shapes do not match the cached pass");

    // (5) token feedback.
    Tensor d_pre_ln =
        layer_norm_backward(d_tokens_out, ln_gain_->value, cache.ln, ln_gain_->grad, ln_bias_->grad);
    Tensor d_tokens = d_pre_ln; // residual path into E
    Tensor d_feedback({d_});
    for (std::size_t t = 0; t < n; ++t) {
        const double* row = d_pre_ln.row(t);
        for (std::size_t j = 0; j < d_; ++j) d_feedback[j] += row[j];
    }
    // feedback = gbar Wg
    for (std::size_t i = 0; i < d_; ++i) {
        double* wgr = wg_->grad.row(i);
        const double gi = cache.gbar[i];
        for (std::size_t j = 0; j < d_; ++j) wgr[j] += gi * d_feedback[j];
    }
    Tensor d_gbar({d_});
    for (std::size_t i = 0; i < d_; ++i) {
        const double* wgr = wg_->value.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d_; ++j) acc += wgr[j] * d_feedback[j];
        d_gbar[i] = acc;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    Tensor d_x_next = d_x_out;
    for (std::size_t i = 0; i < m; ++i) {
        double* row = d_x_next.row(i);
        for (std::size_t j = 0; j < d_; ++j) row[j] += inv_m * d_gbar[j];
    }

    // x' = x + v'
    Tensor d_x = d_x_next;
    Tensor d_v_next = add(d_x_next, d_v_out);

    // (4) velocity update.
    Tensor d_v = scale(d_v_next, cache.w);
    double d_w = 0.0;
    for (std::size_t i = 0; i < m * d_; ++i) d_w += cache.v[i] * d_v_next[i];
    if (w_raw_->trainable) w_raw_->grad[0] += d_w * inertia_gate_grad(w_raw_->value[0]);
    if (sigma_raw_->value[0] > 0.0) {
        double d_sigma = 0.0;
        for (std::size_t i = 0; i < m * d_; ++i) d_sigma += cache.rnd.noise[i] * d_v_next[i];
        sigma_raw_->grad[0] += d_sigma;
    }
    Tensor d_local({m, d_});
    Tensor d_g({d_});
    Tensor d_drive({m, d_});
    for (std::size_t i = 0; i < m; ++i) {
        const double* dvn = d_v_next.row(i);
        const double* r1i = cache.rnd.r1.row(i);
        const double* r2i = cache.rnd.r2.row(i);
        double* dli = d_local.row(i);
        double* dxi = d_x.row(i);
        double* ddi = d_drive.row(i);
        for (std::size_t j = 0; j < d_; ++j) {
            const double dv = dvn[j];
            dli[j] = c1_ * r1i[j] * dv;
            d_g[j] += c2_ * r2i[j] * dv;
            dxi[j] -= (c1_ * r1i[j] + c2_ * r2i[j]) * dv;
            ddi[j] = dv;
        }
    }
    Tensor d_drive_raw = hadamard(d_drive, cache.rnd.drop.mask);
    Tensor d_obs = matmul_nt(d_drive_raw, wo_->value);
    add_inplace(wo_->grad, matmul_tn(cache.obs, d_drive_raw));

    // (2) local attractors: P = X + O Wp.
    add_inplace(d_x, d_local);
    add_inplace(d_obs, matmul_nt(d_local, wp_->value));
    add_inplace(wp_->grad, matmul_tn(cache.obs, d_local));

    // (3) soft global best: g = sum_i beta_i x_i, beta = softmax(X u).
    Tensor d_beta({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = cache.x.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d_; ++j) acc += xi[j] * d_g[j];
        d_beta[i] = acc;
        double* dxi = d_x.row(i);
        for (std::size_t j = 0; j < d_; ++j) dxi[j] += cache.beta[i] * d_g[j];
    }
    Tensor d_score({m});
    softmax_backward_row(cache.beta.data(), d_beta.data(), d_score.data(), m);
    for (std::size_t i = 0; i < m; ++i) {
        double* dxi = d_x.row(i);
        const double dq = d_score[i];
        const double* xi = cache.x.row(i);
        for (std::size_t j = 0; j < d_; ++j) {
            dxi[j] += dq * u_->value[j];
            u_->grad[j] += dq * xi[j];
        }
    }

    // (1) observation attention: O = A E, A = rowsoftmax(K E^T / sqrt(d)).
    Tensor d_attn = matmul_nt(d_obs, cache.tokens);
    add_inplace(d_tokens, matmul_tn(cache.attn, d_obs));
    Tensor d_scores({m, n});
    for (std::size_t i = 0; i < m; ++i)
        softmax_backward_row(cache.attn.row(i), d_attn.row(i), d_scores.row(i), n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_));
    for (std::size_t i = 0; i < m * n; ++i) d_scores[i] *= inv_sqrt_d;
    Tensor d_keys = matmul(d_scores, cache.tokens);
    add_inplace(d_tokens, matmul_tn(d_scores, cache.keys));
    add_inplace(d_x, matmul_nt(d_keys, wk_->value));
    add_inplace(wk_->grad, matmul_tn(cache.x, d_keys));

    SilGrads grads;
    grads.tokens = std::move(d_tokens);
    grads.x = std::move(d_x);
    grads.v = std::move(d_v);
    return grads;
}

} // namespace crsn
