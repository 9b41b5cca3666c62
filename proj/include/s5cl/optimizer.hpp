#pragma once

#include <string>
#include <vector>

#include "s5cl/model.hpp"
#include "s5cl/tensor.hpp"

namespace s5cl {

enum class OptimizerKind { adam, adamax };

OptimizerKind optimizer_kind_from_string(const std::string& name);
const char* to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0; // decoupled, applied directly to parameters
};

struct OptimizerState {
    std::vector<Tensor> first_moment;  // m
    std::vector<Tensor> second_moment; // v for Adam, infinity norm u for Adamax
    long step_count = 0;
};

// Fresh state with zero moments, shaped after the parameter list.
OptimizerState zero_like_state(const std::vector<NamedTensor>& params);

// One update in place. Parameters without a gradient entry are left untouched.
// Adam:   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2; bias-corrected;
//         p <- p - lr m^ / (sqrt(v^) + eps) - lr wd p.
// Adamax: m as above;  u <- max(b2 u, |g|);
//         p <- p - (lr / (1 - b1^t)) m / (u + eps) - lr wd p.
void optimizer_step(const OptimizerConfig& config, OptimizerState& state,
                    std::vector<NamedTensor>& params, const GradientStore& grads);

} // namespace s5cl
