#include "s5cl/optimizer.hpp"

#include <cmath>

#include "s5cl/error.hpp"

namespace s5cl {

OptimizerKind optimizer_kind_from_string(const std::string& name)
{
    if (name == "adam") return OptimizerKind::adam;
    if (name == "adamax") return OptimizerKind::adamax;
    fail_invalid("unknown optimizer '" + name + "' (expected adam or adamax)");
}

const char* to_string(OptimizerKind kind)
{
    return kind == OptimizerKind::adam ? "adam" : "adamax";
}

OptimizerState zero_like_state(const std::vector<NamedTensor>& params)
{
    OptimizerState state;
    state.first_moment.reserve(params.size());
    state.second_moment.reserve(params.size());
    for (const NamedTensor& p : params) {
        state.first_moment.push_back(Tensor::zeros(p.tensor.shape()));
        state.second_moment.push_back(Tensor::zeros(p.tensor.shape()));
    }
    return state;
}

void optimizer_step(const OptimizerConfig& config, OptimizerState& state,
                    std::vector<NamedTensor>& params, const GradientStore& grads)
{
    if (state.first_moment.size() != params.size()) {
        fail_invalid("optimizer_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);

    for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor* grad = grads.find(params[k].tensor.id());
        if (grad == nullptr) continue;
        const std::vector<double>& g = grad->data();
        std::vector<double>& p = params[k].tensor.mutable_data();
        std::vector<double>& m = state.first_moment[k].mutable_data();
        std::vector<double>& v = state.second_moment[k].mutable_data();
        if (g.size() != p.size()) {
            fail_invalid("optimizer_step: gradient shape mismatch for parameter '" + params[k].name + "'");
        }
        for (double gv : g) {
            if (!std::isfinite(gv)) {
                fail(ErrorCode::runtime, "optimizer_step: non-finite gradient for parameter '" +
                                             params[k].name + "'");
            }
        }
        const double lr = config.learning_rate;
        if (config.kind == OptimizerKind::adam) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bias1;
                const double v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
                p[i] -= lr * config.weight_decay * p[i];
            }
        } else {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = std::max(config.beta2 * v[i], std::fabs(g[i]));
                p[i] -= (lr / bias1) * m[i] / (v[i] + config.epsilon);
                p[i] -= lr * config.weight_decay * p[i];
            }
        }
    }
}

} // namespace s5cl
