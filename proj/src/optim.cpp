#include "crsn/optim.hpp"

#include <cmath>

#include "crsn/error.hpp"

namespace crsn {

Tensor gaussian_init(const std::vector<std::size_t>& shape, std::size_t fan_in,
                     const Rng& base, const std::string& name) {
    Rng rng = base.split(1, Rng::hash_name(name.c_str()));
    Tensor t(shape);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = s * rng.normal();
    return t;
}

double lr_at(const LrSchedule& s, long t) {
    if (t < 0 || t > s.total_steps)
        throw RangeError("lr_at: step " + std::to_string(t) + " outside [0, " +
                         std::to_string(s.total_steps) + "]");
    const long warmup = std::min(s.warmup_steps, s.total_steps);
    if (t <= warmup) {
        if (warmup == 0) return s.base_rate;
        return s.base_rate * static_cast<double>(t) / static_cast<double>(warmup);
    }
    const double frac = static_cast<double>(t - warmup) / static_cast<double>(s.total_steps - warmup);
    return s.base_rate * 0.5 * (1.0 + std::cos(3.141592653589793238462643383279 * frac));
}

void AdamW::step(ParamSet& ps, double lr) {
    if (m_.empty()) {
        for (auto& p : ps) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (m_.size() != ps.count())
        throw ContractError("adamw: parameter set changed size after first step");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps.count(); ++i) {
        Param& p = ps.at(i);
        if (!p.trainable) continue;
        if (!p.grad.all_finite())
            throw NumericError("adamw: non-finite gradient for parameter '" + p.name + "'");
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad[k];
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.value[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.value[k]);
        }
    }
}

} // namespace crsn
