#pragma once

#include <string>
#include <vector>

#include "s5cl/rng.hpp"
#include "s5cl/tensor.hpp"

namespace s5cl {

struct ModelConfig {
    std::size_t input_dim = 768; // H * W * 3
    std::vector<std::size_t> encoder_hidden = {128};
    std::size_t encoder_out_dim = 128;
    std::size_t embedding_dim = 32;
    std::size_t num_classes = 9;
    double batchnorm_momentum = 0.1;
};

void validate(const ModelConfig& config);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Encoder (MLP with relu) -> embedder (linear bottleneck + batch
// normalization with learnable affine) -> linear classifier.
class S5CLModel {
public:
    // Weights uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)), biases
    // zero, batch-norm affine at identity, running stats at (0, 1).
    static S5CLModel init(const ModelConfig& config, Rng& rng);

    // B x input_dim -> B x embedding_dim, raw (not L2-normalized).
    Tensor embed(const Tensor& images);

    // B x embedding_dim -> B x num_classes logits.
    Tensor classify(const Tensor& embeddings) const;

    void set_train_mode(bool train) { train_mode_ = train; }
    bool train_mode() const { return train_mode_; }
    const ModelConfig& config() const { return config_; }

    // Trainable parameters in a stable order; running stats are buffers.
    std::vector<NamedTensor> parameters();
    std::vector<NamedTensor> buffers();
    std::vector<NamedTensor> state() ; // parameters + buffers, for checkpoints

    // Deep copy with fresh tensor identities (snapshot for eval/early stop).
    S5CLModel clone() const;

    // Replaces values of identically named tensors; errors on unknown names or
    // shape mismatches.
    void load_state(const std::vector<NamedTensor>& state);

private:
    struct DenseLayer {
        Tensor weight; // in x out
        Tensor bias;   // out
    };

    ModelConfig config_;
    std::vector<DenseLayer> encoder_;
    DenseLayer embed_linear_;
    Tensor bn_gamma_;
    Tensor bn_beta_;
    Tensor bn_running_mean_;
    Tensor bn_running_var_;
    DenseLayer classifier_;
    bool train_mode_ = true;
};

} // namespace s5cl
