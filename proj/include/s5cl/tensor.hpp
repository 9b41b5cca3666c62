#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace s5cl {

// Dense real tensor, double precision, row-major. Values are immutable once a
// tensor has entered a forward computation; only parameter/buffer owners write
// through mutable_data() between optimizer steps.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t rows() const; // first extent (rank >= 1)
    std::size_t cols() const; // second extent (rank 2) or 1

    const std::vector<double>& data() const;
    std::vector<double>& mutable_data();

    double value() const; // scalar tensors only
    double at(std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    std::uint64_t id() const;

    // Same values, fresh id, no gradient flow.
    Tensor detach() const;
    // Deep copy preserving requires_grad, fresh id.
    Tensor clone() const;

    std::string shape_string() const;

private:
    struct Storage {
        std::vector<std::size_t> shape;
        std::vector<double> data;
        bool requires_grad = false;
        std::uint64_t id = 0;
    };
    std::shared_ptr<Storage> s_;
};

// Accumulated gradients keyed by tensor id; shapes always match the tensor the
// gradient belongs to and contributions add.
class GradientStore {
public:
    bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
    // Gradient for t; zeros of t's shape when nothing was accumulated.
    Tensor grad(const Tensor& t) const;
    const Tensor* find(std::uint64_t id) const;
    void accumulate(const Tensor& target, const Tensor& contribution);
    void accumulate(std::uint64_t id, const std::vector<std::size_t>& shape, const std::vector<double>& values);
    std::size_t entries() const { return grads_.size(); }

private:
    std::unordered_map<std::uint64_t, Tensor> grads_;
};

// Dynamic (define-by-run) tape. Operations append in execution order, so the
// node list is already topologically sorted; backward replays it once in
// reverse. One tape per training step; a tape is consumed by backward().
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor& grad_out, GradientStore&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current();

    void record(const Tensor& output, BackwardFn fn);
    bool consumed() const { return consumed_; }
    std::size_t node_count() const { return nodes_.size(); }
    void reset();

    // Gradients of a scalar root w.r.t. every requires_grad leaf reachable
    // from it. Errors: non-scalar root, root not recorded here, tape already
    // consumed.
    GradientStore backward(const Tensor& root);

    // RAII activation: ops record on the innermost active tape.
    class Scope {
    public:
        explicit Scope(Tape* tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    // Temporarily disables recording (pseudo-label generation, evaluation).
    class Pause {
    public:
        Pause();
        ~Pause();
        Pause(const Pause&) = delete;
        Pause& operator=(const Pause&) = delete;

    private:
        Tape* previous_;
    };

private:
    struct Node {
        std::uint64_t output_id;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, std::size_t> recorded_;
    bool consumed_ = false;
};

// Forward operations. Each checks shapes and input finiteness, and records a
// backward rule on the active tape when any input requires grad.
enum class OpKind {
    matmul,
    transpose,
    add,
    sub,
    elementwise_mul,
    scalar_mul,
    relu,
    exp,
    log,
    sum,
    mean,
    concat_rows,
    slice_rows,
    l2_normalize_rows,
    log_softmax_rows,
    batch_stats_normalize,
};

const char* op_name(OpKind kind);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// add/sub/mul accept identical shapes, or a rank-2 left operand with a rank-1
// right operand broadcast across rows (bias/affine pattern).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a); // argument floored at kLogEps
Tensor sum(const Tensor& a);  // -> scalar
Tensor mean(const Tensor& a); // -> scalar
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor l2_normalize_rows(const Tensor& a); // denominator floored at kLogEps
Tensor log_softmax_rows(const Tensor& a);

// Per-feature standardization. Train mode normalizes with batch statistics and
// updates the running buffers in place (momentum convention:
// running = (1 - momentum) * running + momentum * batch, unbiased variance for
// the running update, biased for normalization). Eval mode normalizes with the
// running buffers.
Tensor batch_stats_normalize(const Tensor& x, Tensor& running_mean, Tensor& running_var,
                             double momentum, bool train_mode);

inline constexpr double kLogEps = 1e-12;
inline constexpr double kBatchNormEps = 1e-5;

} // namespace s5cl
