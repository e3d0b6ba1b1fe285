#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <vector>

namespace afnet {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void cat_one(std::string& out, const char* v) { out += v; }
inline void cat_one(std::string& out, const std::string& v) { out += v; }
inline void cat_one(std::string& out, char v) { out += v; }
template <class T>
void cat_one(std::string& out, T v)
    requires std::is_arithmetic_v<T>
{
    out += std::to_string(v);
}
}  // namespace detail

template <class... Args>
std::string cat(Args&&... args) {
    std::string out;
    (detail::cat_one(out, std::forward<Args>(args)), ...);
    return out;
}

#define AFNET_CHECK(cond, ...)                        \
    do {                                              \
        if (!(cond)) throw ::afnet::Error(::afnet::cat(__VA_ARGS__)); \
    } while (0)

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class S>
struct ScalarName;
template <>
struct ScalarName<float> {
    static constexpr const char* value = "f32";
};
template <>
struct ScalarName<double> {
    static constexpr const char* value = "f64";
};

// Thread-local switch deciding whether ops record backward closures.
struct GradMode {
    static bool& flag() {
        thread_local bool enabled = true;
        return enabled;
    }
    static bool enabled() { return flag(); }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::flag()) { GradMode::flag() = false; }
    ~NoGradGuard() { GradMode::flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
};

inline uint64_t next_tape_seq() {
    static std::atomic<uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

// One recorded computation: op identifier, parent references and a closure
// holding whatever intermediates the backward rule saved. Sequence numbers
// are assigned at creation, so sorting by seq reproduces forward execution
// order exactly and backward visits nodes in exact reverse order.
template <class S>
struct TensorImpl {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty until first accumulation
    bool requires_grad = false;
    uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

template <class S>
class Tensor {
  public:
    using Scalar = S;

    Tensor() : impl_(nullptr) {}

    explicit Tensor(Shape shape) : impl_(std::make_shared<TensorImpl<S>>()) {
        for (size_t i = 0; i < shape.size(); ++i)
            AFNET_CHECK(shape[i] >= 0, "tensor: negative extent at axis ", i);
        impl_->shape = std::move(shape);
        impl_->value.assign(static_cast<size_t>(shape_numel(impl_->shape)), S(0));
        impl_->seq = next_tape_seq();
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data()) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

    static Tensor from(std::vector<S> values, Shape shape) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = std::move(shape);
        AFNET_CHECK(static_cast<int64_t>(values.size()) == shape_numel(t.impl_->shape),
                    "tensor: ", values.size(), " values for shape ", shape_str(t.impl_->shape));
        t.impl_->value = std::move(values);
        t.impl_->seq = next_tape_seq();
        return t;
    }

    static Tensor scalar(S v) { return from({v}, {1}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return impl_->numel(); }

    // The handle is shared-ownership; const protects the handle, not the
    // buffer, mirroring shared_ptr semantics.  Backward closures capture
    // tensors by value and still write grads through them.
    std::vector<S>& data() const { return impl_->value; }
    S* ptr() const { return impl_->value.data(); }

    S item() const {
        AFNET_CHECK(numel() == 1, "item: tensor has ", numel(), " elements");
        return impl_->value[0];
    }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool v = true) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::vector<S>& grad() const {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() {
        if (impl_) impl_->grad.clear();
    }

    const char* op_name() const { return impl_->op; }

    // Records this tensor as the output of `op`. Output requires grad and the
    // closure is kept only when grad mode is on and some parent requires grad.
    void attach(const char* op, std::vector<Tensor> parents,
                std::function<void(TensorImpl<S>&)> backward_fn) {
        if (!GradMode::enabled()) return;
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (!any) return;
        impl_->op = op;
        impl_->requires_grad = true;
        impl_->parents.reserve(parents.size());
        for (auto& p : parents) impl_->parents.push_back(p.impl_);
        impl_->backward_fn = std::move(backward_fn);
    }

    // Value copy with no history.
    Tensor detach() const {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = impl_->shape;
        t.impl_->value = impl_->value;
        t.impl_->seq = next_tape_seq();
        return t;
    }

    // Reverse pass from a scalar loss. Grads accumulate; calling twice
    // without zero_grad doubles every leaf gradient.
    void backward() const {
        AFNET_CHECK(numel() == 1, "backward: loss must be scalar, got shape ",
                    shape_str(shape()));
        AFNET_CHECK(impl_->requires_grad, "backward: loss does not require grad");
        impl_->ensure_grad();
        impl_->grad[0] += S(1);

        std::vector<TensorImpl<S>*> order;
        std::unordered_set<TensorImpl<S>*> seen;
        std::vector<TensorImpl<S>*> stack{impl_.get()};
        seen.insert(impl_.get());
        while (!stack.empty()) {
            TensorImpl<S>* node = stack.back();
            stack.pop_back();
            order.push_back(node);
            for (auto& p : node->parents) {
                if (p->requires_grad && seen.insert(p.get()).second)
                    stack.push_back(p.get());
            }
        }
        std::sort(order.begin(), order.end(),
                  [](const TensorImpl<S>* a, const TensorImpl<S>* b) { return a->seq > b->seq; });
        for (TensorImpl<S>* node : order) {
            if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
        }
    }

    std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

  private:
    std::shared_ptr<TensorImpl<S>> impl_;
};

// Accumulates `delta * scale` into the grad buffer of `t` if it wants one.
template <class S>
void accumulate_grad(const Tensor<S>& t, const std::vector<S>& delta, S scale = S(1)) {
    if (!t.requires_grad()) return;
    auto& g = t.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += scale * delta[i];
}

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    AFNET_CHECK(a.shape().size() == b.shape().size(), op, ": rank mismatch ",
                shape_str(a.shape()), " vs ", shape_str(b.shape()));
    for (size_t i = 0; i < a.shape().size(); ++i)
        AFNET_CHECK(a.shape()[i] == b.shape()[i], op, ": shape mismatch at axis ", i, ": ",
                    shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

}  // namespace afnet
