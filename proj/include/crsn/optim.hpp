#ifndef CRSN_OPTIM_HPP
#define CRSN_OPTIM_HPP

#include <memory>
#include <string>
#include <vector>

#include "crsn/rng.hpp"
#include "crsn/tensor.hpp"

namespace crsn {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Param(std::string n, Tensor v, bool t)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(t) {}
};

// Owns every learnable tensor of a model; registration order is the
// deterministic iteration order for the optimizer and checkpoints.
class ParamSet {
public:
    Param& add(std::string name, Tensor init, bool trainable = true) {
        params_.push_back(std::make_unique<Param>(std::move(name), std::move(init), trainable));
        return *params_.back();
    }

    std::size_t count() const { return params_.size(); }
    Param& at(std::size_t i) { return *params_[i]; }
    const Param& at(std::size_t i) const { return *params_[i]; }

    Param* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p->grad.fill(0.0);
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<std::unique_ptr<Param>> params_;
};

// Gaussian init scaled by 1/sqrt(fan_in); stream derived from the tensor name
// so init is independent of registration order.
Tensor gaussian_init(const std::vector<std::size_t>& shape, std::size_t fan_in,
                     const Rng& base, const std::string& name);

// Linear warmup 0 -> base over [0, warmup], then cosine decay base -> 0 over
// (warmup, total].
struct LrSchedule {
    double base_rate = 3e-4;
    long warmup_steps = 1000;
    long total_steps = 0;
};

double lr_at(const LrSchedule& s, long t);

// Decoupled-weight-decay Adam over a ParamSet. Moments are allocated lazily on
// the first step and always match their parameter shapes.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double weight_decay = 1e-4,
          double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

    long step_count() const { return t_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double weight_decay() const { return weight_decay_; }

    // One update from the gradients currently stored in ps; skips params with
    // trainable == false. Throws NumericError naming the parameter on a
    // non-finite gradient.
    void step(ParamSet& ps, double lr);

private:
    double beta1_, beta2_, weight_decay_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace crsn

#endif
