#include "s5cl/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

std::atomic<std::uint64_t> g_next_tensor_id{1};

thread_local Tape* g_current_tape = nullptr;

std::size_t shape_product(const std::vector<std::size_t>& shape)
{
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape)
{
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_finite(const char* op, const Tensor& t)
{
    for (double v : t.data()) {
        if (!std::isfinite(v)) {
            fail(ErrorCode::runtime, std::string(op) + ": non-finite input value");
        }
    }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b)
{
    fail_invalid(std::string(op) + ": shape mismatch between " + a.shape_string() + " and " + b.shape_string());
}

void maybe_record(const Tensor& output, Tape::BackwardFn fn)
{
    Tape* tape = Tape::current();
    if (tape != nullptr && output.requires_grad()) {
        tape->record(output, std::move(fn));
    }
}

Tensor make_output(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad)
{
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

// c[m x n] += a[m x k] * b[k x n]
void matmul_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x k] += a[m x n] * b[k x n]^T
void matmul_nt_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

std::vector<double> column_sums(const Tensor& g)
{
    const std::size_t r = g.rows();
    const std::size_t c = g.cols();
    std::vector<double> out(c, 0.0);
    const double* gd = g.data().data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j] += gd[i * c + j];
    }
    return out;
}

bool broadcast_compatible(const Tensor& a, const Tensor& b)
{
    return a.rank() == 2 && b.rank() == 1 && a.cols() == b.size();
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad)
{
    if (shape.empty()) fail_invalid("tensor: empty shape");
    for (std::size_t e : shape) {
        if (e == 0) fail_invalid("tensor: zero extent in shape " + shape_to_string(shape));
    }
    if (shape_product(shape) != data.size()) {
        fail_invalid("tensor: shape " + shape_to_string(shape) + " does not match data length " +
                     std::to_string(data.size()));
    }
    s_ = std::make_shared<Storage>();
    s_->shape = std::move(shape);
    s_->data = std::move(data);
    s_->requires_grad = requires_grad;
    s_->id = g_next_tensor_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad)
{
    std::vector<double> data(shape_product(shape), 0.0);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad)
{
    std::vector<double> data(shape_product(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad)
{
    return Tensor({1}, {value}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return s_->shape; }
std::size_t Tensor::size() const { return s_->data.size(); }
std::size_t Tensor::rows() const { return s_->shape[0]; }
std::size_t Tensor::cols() const { return s_->shape.size() >= 2 ? s_->shape[1] : 1; }
const std::vector<double>& Tensor::data() const { return s_->data; }
std::vector<double>& Tensor::mutable_data() { return s_->data; }
bool Tensor::requires_grad() const { return s_->requires_grad; }
std::uint64_t Tensor::id() const { return s_->id; }

double Tensor::value() const
{
    if (size() != 1) fail_invalid("tensor: value() requires a scalar, got shape " + shape_string());
    return s_->data[0];
}

Tensor Tensor::detach() const { return Tensor(s_->shape, s_->data, false); }

Tensor Tensor::clone() const { return Tensor(s_->shape, s_->data, s_->requires_grad); }

std::string Tensor::shape_string() const { return shape_to_string(s_->shape); }

// ---------------------------------------------------------------------------
// GradientStore

Tensor GradientStore::grad(const Tensor& t) const
{
    auto it = grads_.find(t.id());
    if (it == grads_.end()) return Tensor::zeros(t.shape());
    return it->second;
}

const Tensor* GradientStore::find(std::uint64_t id) const
{
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
}

void GradientStore::accumulate(const Tensor& target, const Tensor& contribution)
{
    accumulate(target.id(), target.shape(), contribution.data());
}

void GradientStore::accumulate(std::uint64_t id, const std::vector<std::size_t>& shape,
                               const std::vector<double>& values)
{
    auto it = grads_.find(id);
    if (it == grads_.end()) {
        grads_.emplace(id, Tensor(shape, values));
        return;
    }
    Tensor& g = it->second;
    if (g.size() != values.size()) {
        fail(ErrorCode::runtime, "gradient store: conflicting gradient shapes for one tensor");
    }
    auto& dst = g.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] += values[i];
}

// ---------------------------------------------------------------------------
// Tape

Tape* Tape::current() { return g_current_tape; }

void Tape::record(const Tensor& output, BackwardFn fn)
{
    recorded_.emplace(output.id(), nodes_.size());
    nodes_.push_back(Node{output.id(), std::move(fn)});
}

void Tape::reset()
{
    nodes_.clear();
    recorded_.clear();
    consumed_ = false;
}

GradientStore Tape::backward(const Tensor& root)
{
    if (consumed_) {
        fail(ErrorCode::runtime, "tape: backward called twice without re-recording");
    }
    if (root.size() != 1) {
        fail_invalid("tape: backward root must be a scalar, got shape " + root.shape_string());
    }
    if (recorded_.find(root.id()) == recorded_.end()) {
        fail_invalid("tape: backward root was not recorded on this tape");
    }
    GradientStore store;
    store.accumulate(root.id(), root.shape(), {1.0});
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        const Tensor* grad_out = store.find(it->output_id);
        if (grad_out == nullptr) continue; // not on the path from root
        it->backward(*grad_out, store);
    }
    consumed_ = true;
    return store;
}

Tape::Scope::Scope(Tape* tape) : previous_(g_current_tape) { g_current_tape = tape; }
Tape::Scope::~Scope() { g_current_tape = previous_; }

Tape::Pause::Pause() : previous_(g_current_tape) { g_current_tape = nullptr; }
Tape::Pause::~Pause() { g_current_tape = previous_; }

// ---------------------------------------------------------------------------
// Ops

const char* op_name(OpKind kind)
{
    switch (kind) {
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::elementwise_mul: return "elementwise_mul";
        case OpKind::scalar_mul: return "scalar_mul";
        case OpKind::relu: return "relu";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::concat_rows: return "concat_rows";
        case OpKind::slice_rows: return "slice_rows";
        case OpKind::l2_normalize_rows: return "l2_normalize_rows";
        case OpKind::log_softmax_rows: return "log_softmax_rows";
        case OpKind::batch_stats_normalize: return "batch_stats_normalize";
    }
    return "unknown";
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
    check_finite("matmul", a);
    check_finite("matmul", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    matmul_kernel(a.data().data(), b.data().data(), out.data(), m, k, n);
    Tensor y = make_output({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(y, [a, b, m, k, n](const Tensor& g, GradientStore& store) {
        if (a.requires_grad()) {
            std::vector<double> da(m * k, 0.0);
            matmul_nt_kernel(g.data().data(), b.data().data(), da.data(), m, n, k);
            store.accumulate(a.id(), a.shape(), da);
        }
        if (b.requires_grad()) {
            std::vector<double> db(k * n, 0.0);
            matmul_tn_kernel(a.data().data(), g.data().data(), db.data(), m, k, n);
            store.accumulate(b.id(), b.shape(), db);
        }
    });
    return y;
}

Tensor transpose(const Tensor& a)
{
    if (a.rank() != 2) fail_invalid("transpose: requires rank 2, got " + a.shape_string());
    check_finite("transpose", a);
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    const double* ad = a.data().data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
    }
    Tensor y = make_output({c, r}, std::move(out), a.requires_grad());
    maybe_record(y, [a, r, c](const Tensor& g, GradientStore& store) {
        std::vector<double> da(r * c);
        const double* gd = g.data().data();
        for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t i = 0; i < r; ++i) da[i * c + j] = gd[j * r + i];
        }
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

namespace {

enum class EwKind { add, sub, mul };

Tensor elementwise(const char* name, EwKind kind, const Tensor& a, const Tensor& b)
{
    const bool broadcast = broadcast_compatible(a, b);
    if (!broadcast && a.shape() != b.shape()) shape_error(name, a, b);
    check_finite(name, a);
    check_finite(name, b);
    const std::size_t n = a.size();
    const std::size_t c = broadcast ? a.cols() : n;
    std::vector<double> out(n);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double bv = broadcast ? bd[i % c] : bd[i];
        switch (kind) {
            case EwKind::add: out[i] = ad[i] + bv; break;
            case EwKind::sub: out[i] = ad[i] - bv; break;
            case EwKind::mul: out[i] = ad[i] * bv; break;
        }
    }
    Tensor y = make_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(y, [a, b, kind, broadcast](const Tensor& g, GradientStore& store) {
        const std::size_t n = a.size();
        const std::size_t c = broadcast ? a.cols() : n;
        const double* gd = g.data().data();
        if (a.requires_grad()) {
            if (kind == EwKind::mul) {
                std::vector<double> da(n);
                const double* bd = b.data().data();
                for (std::size_t i = 0; i < n; ++i) da[i] = gd[i] * (broadcast ? bd[i % c] : bd[i]);
                store.accumulate(a.id(), a.shape(), da);
            } else {
                store.accumulate(a.id(), a.shape(), g.data());
            }
        }
        if (b.requires_grad()) {
            std::vector<double> db(b.size(), 0.0);
            const double* ad = a.data().data();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t bi = broadcast ? i % c : i;
                double contrib = gd[i];
                if (kind == EwKind::mul) contrib *= ad[i];
                if (kind == EwKind::sub) contrib = -contrib;
                db[bi] += contrib;
            }
            store.accumulate(b.id(), b.shape(), db);
        }
    });
    return y;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise("add", EwKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise("sub", EwKind::sub, a, b); }
Tensor elementwise_mul(const Tensor& a, const Tensor& b) { return elementwise("elementwise_mul", EwKind::mul, a, b); }

Tensor scalar_mul(const Tensor& a, double factor)
{
    check_finite("scalar_mul", a);
    if (!std::isfinite(factor)) fail(ErrorCode::runtime, "scalar_mul: non-finite factor");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * factor;
    Tensor y = make_output(a.shape(), std::move(out), a.requires_grad());
    maybe_record(y, [a, factor](const Tensor& g, GradientStore& store) {
        std::vector<double> da(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) da[i] = g.data()[i] * factor;
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor relu(const Tensor& a)
{
    check_finite("relu", a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    Tensor y = make_output(a.shape(), std::move(out), a.requires_grad());
    maybe_record(y, [a](const Tensor& g, GradientStore& store) {
        std::vector<double> da(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) da[i] = a.data()[i] > 0.0 ? g.data()[i] : 0.0;
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor exp(const Tensor& a)
{
    check_finite("exp", a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a.data()[i]);
    Tensor y = make_output(a.shape(), std::move(out), a.requires_grad());
    maybe_record(y, [a, y](const Tensor& g, GradientStore& store) {
        std::vector<double> da(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) da[i] = g.data()[i] * y.data()[i];
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor log(const Tensor& a)
{
    check_finite("log", a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::log(std::max(a.data()[i], kLogEps));
    Tensor y = make_output(a.shape(), std::move(out), a.requires_grad());
    maybe_record(y, [a](const Tensor& g, GradientStore& store) {
        std::vector<double> da(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) da[i] = g.data()[i] / std::max(a.data()[i], kLogEps);
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor sum(const Tensor& a)
{
    check_finite("sum", a);
    double total = 0.0;
    for (double v : a.data()) total += v;
    Tensor y = make_output({1}, {total}, a.requires_grad());
    maybe_record(y, [a](const Tensor& g, GradientStore& store) {
        store.accumulate(a.id(), a.shape(), std::vector<double>(a.size(), g.value()));
    });
    return y;
}

Tensor mean(const Tensor& a)
{
    check_finite("mean", a);
    double total = 0.0;
    for (double v : a.data()) total += v;
    const double m = total / static_cast<double>(a.size());
    Tensor y = make_output({1}, {m}, a.requires_grad());
    maybe_record(y, [a](const Tensor& g, GradientStore& store) {
        store.accumulate(a.id(), a.shape(),
                         std::vector<double>(a.size(), g.value() / static_cast<double>(a.size())));
    });
    return y;
}

Tensor concat_rows(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) shape_error("concat_rows", a, b);
    check_finite("concat_rows", a);
    check_finite("concat_rows", b);
    const std::size_t c = a.cols();
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    Tensor y = make_output({a.rows() + b.rows(), c}, std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(y, [a, b](const Tensor& g, GradientStore& store) {
        const double* gd = g.data().data();
        if (a.requires_grad()) {
            store.accumulate(a.id(), a.shape(), std::vector<double>(gd, gd + a.size()));
        }
        if (b.requires_grad()) {
            store.accumulate(b.id(), b.shape(), std::vector<double>(gd + a.size(), gd + a.size() + b.size()));
        }
    });
    return y;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count)
{
    if (a.rank() != 2) fail_invalid("slice_rows: requires rank 2, got " + a.shape_string());
    if (count == 0 || start + count > a.rows()) {
        fail_invalid("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of bounds for " + a.shape_string());
    }
    check_finite("slice_rows", a);
    const std::size_t c = a.cols();
    const double* ad = a.data().data();
    std::vector<double> out(ad + start * c, ad + (start + count) * c);
    Tensor y = make_output({count, c}, std::move(out), a.requires_grad());
    maybe_record(y, [a, start, count, c](const Tensor& g, GradientStore& store) {
        std::vector<double> da(a.size(), 0.0);
        const double* gd = g.data().data();
        std::memcpy(da.data() + start * c, gd, count * c * sizeof(double));
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor l2_normalize_rows(const Tensor& a)
{
    if (a.rank() != 2) fail_invalid("l2_normalize_rows: requires rank 2, got " + a.shape_string());
    check_finite("l2_normalize_rows", a);
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    std::vector<double> denom(r);
    const double* ad = a.data().data();
    for (std::size_t i = 0; i < r; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) sq += ad[i * c + j] * ad[i * c + j];
        denom[i] = std::max(std::sqrt(sq), kLogEps);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = ad[i * c + j] / denom[i];
    }
    Tensor y = make_output({r, c}, std::move(out), a.requires_grad());
    maybe_record(y, [a, y, denom, r, c](const Tensor& g, GradientStore& store) {
        std::vector<double> da(r * c);
        const double* gd = g.data().data();
        const double* yd = y.data().data();
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += gd[i * c + j] * yd[i * c + j];
            for (std::size_t j = 0; j < c; ++j) {
                da[i * c + j] = (gd[i * c + j] - yd[i * c + j] * dot) / denom[i];
            }
        }
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor log_softmax_rows(const Tensor& a)
{
    if (a.rank() != 2) fail_invalid("log_softmax_rows: requires rank 2, got " + a.shape_string());
    check_finite("log_softmax_rows", a);
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    const double* ad = a.data().data();
    for (std::size_t i = 0; i < r; ++i) {
        double mx = ad[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, ad[i * c + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(ad[i * c + j] - mx);
        const double log_s = std::log(std::max(s, kLogEps));
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = ad[i * c + j] - mx - log_s;
    }
    Tensor y = make_output({r, c}, std::move(out), a.requires_grad());
    maybe_record(y, [a, y, r, c](const Tensor& g, GradientStore& store) {
        std::vector<double> da(r * c);
        const double* gd = g.data().data();
        const double* yd = y.data().data();
        for (std::size_t i = 0; i < r; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < c; ++j) gsum += gd[i * c + j];
            for (std::size_t j = 0; j < c; ++j) {
                da[i * c + j] = gd[i * c + j] - std::exp(yd[i * c + j]) * gsum;
            }
        }
        store.accumulate(a.id(), a.shape(), da);
    });
    return y;
}

Tensor batch_stats_normalize(const Tensor& x, Tensor& running_mean, Tensor& running_var,
                             double momentum, bool train_mode)
{
    if (x.rank() != 2) fail_invalid("batch_stats_normalize: requires rank 2, got " + x.shape_string());
    const std::size_t b = x.rows(), c = x.cols();
    if (running_mean.size() != c || running_var.size() != c) {
        fail_invalid("batch_stats_normalize: running stats of size " + std::to_string(running_mean.size()) +
                     " do not match feature width " + std::to_string(c));
    }
    check_finite("batch_stats_normalize", x);
    const double* xd = x.data().data();
    std::vector<double> out(b * c);

    if (!train_mode) {
        std::vector<double> inv(c);
        for (std::size_t j = 0; j < c; ++j) {
            inv[j] = 1.0 / std::sqrt(running_var.data()[j] + kBatchNormEps);
        }
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                out[i * c + j] = (xd[i * c + j] - running_mean.data()[j]) * inv[j];
            }
        }
        Tensor y = make_output({b, c}, std::move(out), x.requires_grad());
        maybe_record(y, [x, inv, b, c](const Tensor& g, GradientStore& store) {
            std::vector<double> dx(b * c);
            const double* gd = g.data().data();
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < c; ++j) dx[i * c + j] = gd[i * c + j] * inv[j];
            }
            store.accumulate(x.id(), x.shape(), dx);
        });
        return y;
    }

    std::vector<double> mu(c, 0.0), var(c, 0.0), inv(c);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) mu[j] += xd[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) mu[j] /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double d = xd[i * c + j] - mu[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < c; ++j) {
        var[j] /= static_cast<double>(b);
        inv[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
    }
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (xd[i * c + j] - mu[j]) * inv[j];
    }

    // Running buffers track batch statistics; unbiased variance for the
    // running update, biased for the normalization itself.
    auto& rm = running_mean.mutable_data();
    auto& rv = running_var.mutable_data();
    const double unbias = b > 1 ? static_cast<double>(b) / static_cast<double>(b - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
        rm[j] = (1.0 - momentum) * rm[j] + momentum * mu[j];
        rv[j] = (1.0 - momentum) * rv[j] + momentum * var[j] * unbias;
    }

    Tensor y = make_output({b, c}, std::move(out), x.requires_grad());
    maybe_record(y, [x, y, inv, b, c](const Tensor& g, GradientStore& store) {
        std::vector<double> dx(b * c);
        const double* gd = g.data().data();
        const double* yd = y.data().data();
        const double bn = static_cast<double>(b);
        for (std::size_t j = 0; j < c; ++j) {
            double gsum = 0.0, gysum = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                gsum += gd[i * c + j];
                gysum += gd[i * c + j] * yd[i * c + j];
            }
            for (std::size_t i = 0; i < b; ++i) {
                dx[i * c + j] = inv[j] * (gd[i * c + j] - gsum / bn - yd[i * c + j] * gysum / bn);
            }
        }
        store.accumulate(x.id(), x.shape(), dx);
    });
    return y;
}

} // namespace s5cl
