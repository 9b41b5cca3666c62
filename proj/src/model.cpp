#include "s5cl/model.hpp"

#include <cmath>
#include <unordered_map>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> data(fan_in * fan_out);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor({fan_in, fan_out}, std::move(data), true);
}

} // namespace

void validate(const ModelConfig& config)
{
    if (config.input_dim == 0 || config.encoder_out_dim == 0 || config.embedding_dim == 0 ||
        config.num_classes == 0) {
        fail_invalid("model config: all widths must be positive");
    }
    for (std::size_t w : config.encoder_hidden) {
        if (w == 0) fail_invalid("model config: all widths must be positive");
    }
    if (config.embedding_dim > config.encoder_out_dim) {
        fail_invalid("model config: embedding_dim exceeds encoder_out_dim");
    }
    if (config.batchnorm_momentum <= 0.0 || config.batchnorm_momentum >= 1.0) {
        fail_invalid("model config: batchnorm momentum must lie in (0, 1)");
    }
}

S5CLModel S5CLModel::init(const ModelConfig& config, Rng& rng)
{
    validate(config);
    S5CLModel model;
    model.config_ = config;

    std::vector<std::size_t> widths;
    widths.push_back(config.input_dim);
    for (std::size_t w : config.encoder_hidden) widths.push_back(w);
    widths.push_back(config.encoder_out_dim);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        model.encoder_.push_back(DenseLayer{glorot_uniform(widths[i], widths[i + 1], rng),
                                            Tensor::zeros({widths[i + 1]}, true)});
    }
    model.embed_linear_ = DenseLayer{glorot_uniform(config.encoder_out_dim, config.embedding_dim, rng),
                                     Tensor::zeros({config.embedding_dim}, true)};
    model.bn_gamma_ = Tensor::full({config.embedding_dim}, 1.0, true);
    model.bn_beta_ = Tensor::zeros({config.embedding_dim}, true);
    model.bn_running_mean_ = Tensor::zeros({config.embedding_dim});
    model.bn_running_var_ = Tensor::full({config.embedding_dim}, 1.0);
    model.classifier_ = DenseLayer{glorot_uniform(config.embedding_dim, config.num_classes, rng),
                                   Tensor::zeros({config.num_classes}, true)};
    return model;
}

Tensor S5CLModel::embed(const Tensor& images)
{
    if (images.rank() != 2 || images.cols() != config_.input_dim) {
        fail_invalid("embed: input width " + images.shape_string() + " does not match input_dim " +
                     std::to_string(config_.input_dim));
    }
    Tensor h = images;
    for (const DenseLayer& layer : encoder_) {
        h = relu(add(matmul(h, layer.weight), layer.bias));
    }
    Tensor e = add(matmul(h, embed_linear_.weight), embed_linear_.bias);
    Tensor standardized = batch_stats_normalize(e, bn_running_mean_, bn_running_var_,
                                                config_.batchnorm_momentum, train_mode_);
    return add(elementwise_mul(standardized, bn_gamma_), bn_beta_);
}

Tensor S5CLModel::classify(const Tensor& embeddings) const
{
    if (embeddings.rank() != 2 || embeddings.cols() != config_.embedding_dim) {
        fail_invalid("classify: embedding width " + embeddings.shape_string() +
                     " does not match embedding_dim " + std::to_string(config_.embedding_dim));
    }
    return add(matmul(embeddings, classifier_.weight), classifier_.bias);
}

std::vector<NamedTensor> S5CLModel::parameters()
{
    std::vector<NamedTensor> params;
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        const std::string prefix = "encoder." + std::to_string(i) + ".";
        params.push_back({prefix + "weight", encoder_[i].weight});
        params.push_back({prefix + "bias", encoder_[i].bias});
    }
    params.push_back({"embedder.linear.weight", embed_linear_.weight});
    params.push_back({"embedder.linear.bias", embed_linear_.bias});
    params.push_back({"embedder.norm.gamma", bn_gamma_});
    params.push_back({"embedder.norm.beta", bn_beta_});
    params.push_back({"classifier.weight", classifier_.weight});
    params.push_back({"classifier.bias", classifier_.bias});
    return params;
}

std::vector<NamedTensor> S5CLModel::buffers()
{
    return {{"embedder.norm.running_mean", bn_running_mean_},
            {"embedder.norm.running_var", bn_running_var_}};
}

std::vector<NamedTensor> S5CLModel::state()
{
    std::vector<NamedTensor> all = parameters();
    for (auto& buffer : buffers()) all.push_back(buffer);
    return all;
}

S5CLModel S5CLModel::clone() const
{
    S5CLModel copy;
    copy.config_ = config_;
    copy.train_mode_ = train_mode_;
    for (const DenseLayer& layer : encoder_) {
        copy.encoder_.push_back(DenseLayer{layer.weight.clone(), layer.bias.clone()});
    }
    copy.embed_linear_ = DenseLayer{embed_linear_.weight.clone(), embed_linear_.bias.clone()};
    copy.bn_gamma_ = bn_gamma_.clone();
    copy.bn_beta_ = bn_beta_.clone();
    copy.bn_running_mean_ = bn_running_mean_.clone();
    copy.bn_running_var_ = bn_running_var_.clone();
    copy.classifier_ = DenseLayer{classifier_.weight.clone(), classifier_.bias.clone()};
    return copy;
}

void S5CLModel::load_state(const std::vector<NamedTensor>& state)
{
    std::unordered_map<std::string, Tensor> targets;
    for (auto& entry : this->state()) targets.emplace(entry.name, entry.tensor);
    for (const NamedTensor& incoming : state) {
        auto it = targets.find(incoming.name);
        if (it == targets.end()) {
            fail_invalid("load_state: unknown tensor name '" + incoming.name + "'");
        }
        Tensor target = it->second;
        if (target.shape() != incoming.tensor.shape()) {
            fail_invalid("load_state: shape mismatch for '" + incoming.name + "': expected " +
                         target.shape_string() + ", got " + incoming.tensor.shape_string());
        }
        target.mutable_data() = incoming.tensor.data();
    }
}

} // namespace s5cl
