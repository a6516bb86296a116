#ifndef CRSN_SIL_HPP
#define CRSN_SIL_HPP

#include <string>

#include "crsn/fgn.hpp"
#include "crsn/layers.hpp"
#include "crsn/optim.hpp"
#include "crsn/rng.hpp"
#include "crsn/tensor.hpp"

namespace crsn {

struct AgentPopulation {
    Tensor positions;  // [m x d]
    Tensor velocities; // [m x d]

    AgentPopulation() = default;
    AgentPopulation(std::size_t m, std::size_t d)
        : positions({m, d}), velocities({m, d}) {}

    std::size_t agents() const { return positions.rank() == 2 ? positions.rows() : 0; }
    std::size_t dim() const { return positions.rank() == 2 ? positions.cols() : 0; }
};

// Learnable inertia gate, constrained to the open interval (0.3, 0.9). The
// sigmoid is clamped one ulp-ish inside [0,1] so saturated raw values cannot
// round onto the interval endpoints.
double inertia_gate(double raw);
double inertia_gate_grad(double raw);
double inertia_gate_inverse(double gate); // raw value whose gate is `gate`

// PSO-style update:
//   v' = w*v + c1*r1.*(p - x) + c2*r2.*(g - x) + drive + sigma*noise
//   x' = x + v'
// g is a single row broadcast across agents.
AgentPopulation velocity_update(const AgentPopulation& pop, const Tensor& local_attractor,
                                const Tensor& global_attractor, double w, double c1, double c2,
                                const Tensor& r1, const Tensor& r2, const Tensor& drive,
                                const Tensor& noise, double sigma);

// Randomness consumed by one forward pass, treated as constants of the pass
// by the backward step. Eval mode uses r1 = r2 = 0.5 and zero noise.
struct SilNoise {
    Tensor r1, r2;       // [m x d]
    Tensor noise;        // [m x d]
    DropoutMask drop;    // mask on the observation drive
    bool training = false;
};

struct SilCache {
    Tensor tokens;       // E  [n x d]
    Tensor x, v;         // inputs [m x d]
    Tensor keys;         // X Wk
    Tensor attn;         // [m x n], rows sum to 1
    Tensor obs;          // [m x d]
    Tensor score;        // agent scores before softmax [m]
    Tensor beta;         // softmax over agents [m]
    Tensor global_best;  // [d]
    Tensor drive_raw;    // O Wo before dropout
    Tensor local;        // attractors P [m x d]
    Tensor x_next, v_next;
    Tensor gbar;         // mean of x_next rows [d]
    Tensor feedback;     // gbar Wg [d]
    LayerNormCache ln;
    SilNoise rnd;
    double w = 0.0;
    double sigma = 0.0;
};

struct SilGrads {
    Tensor tokens;   // [n x d]
    Tensor x, v;     // [m x d]
};

// One Swarm Interaction Layer: token-conditioned observation attention per
// agent, differentiable local/global attractors, an inertia-gated velocity
// update with fractional-Gaussian exploration noise, and a normalized token
// feedback. Cost per call is Th(n*m*d) for the token coupling plus Th(m*d^2)
// for the agent-side projections.
class SilLayer {
public:
    SilLayer() = default;
    SilLayer(ParamSet& ps, const std::string& prefix, std::size_t d, const Rng& init,
             double dropout_rate, double c1 = 1.6, double c2 = 1.6,
             double sigma_init = 0.05);

    std::size_t dim() const { return d_; }
    double gate() const { return inertia_gate(w_raw_->value[0]); }
    double c1() const { return c1_; }
    double c2() const { return c2_; }

    // Freeze the gate at a fixed value (excluded from optimizer updates).
    void freeze_gate(double gate_value);

    // Sample the pass randomness. `fgn_step` selects which row of the
    // per-coordinate fGn sequences feeds this layer; the sequences argument
    // holds one length-L sequence per coordinate, laid out [L x m x d].
    static SilNoise sample_noise(std::size_t m, std::size_t d, double dropout_rate, Rng& rng,
                                 bool training, const Tensor* fgn_block);

    // Forward pass; fills cache. Throws NumericError naming the stage on a
    // non-finite intermediate.
    void forward(const Tensor& tokens, const AgentPopulation& pop, SilNoise rnd,
                 Tensor& tokens_out, AgentPopulation& pop_out, SilCache& cache) const;

    // Convenience wrapper that samples its own randomness (white noise stands
    // in for the fGn step when no per-layer block is supplied).
    void forward(const Tensor& tokens, const AgentPopulation& pop, Rng& rng, bool training,
                 Tensor& tokens_out, AgentPopulation& pop_out, SilCache& cache) const;

    // Exact gradients of the forward map for the sampled randomness.
    SilGrads backward(const SilCache& cache, const Tensor& d_tokens_out, const Tensor& d_x_out,
                      const Tensor& d_v_out) const;

private:
    std::size_t d_ = 0;
    double dropout_rate_ = 0.0;
    double c1_ = 1.6, c2_ = 1.6;
    Param* wk_ = nullptr;
    Param* wo_ = nullptr;
    Param* wp_ = nullptr;
    Param* wg_ = nullptr;
    Param* u_ = nullptr;
    Param* ln_gain_ = nullptr;
    Param* ln_bias_ = nullptr;
    Param* w_raw_ = nullptr;
    Param* sigma_raw_ = nullptr;
};

} // namespace crsn

#endif
