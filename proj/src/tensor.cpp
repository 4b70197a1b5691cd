#include "letnet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace letnet {

Index shape_numel(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) {
        if (d < 0) throw ConfigError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
thread_local bool grad_mode = true;
}

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

template <typename T>
void TensorImpl<T>::accumulate_grad(std::span<const T> g) {
    auto dst = ensure_grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <typename T>
std::span<T> TensorImpl<T>::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
}

template <typename T>
BasicTensor<T>::BasicTensor() : impl_(std::make_shared<TensorImpl<T>>()) {
    impl_->data.assign(1, T{0});
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
    const Index n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : impl_(std::make_shared<TensorImpl<T>>()) {
    const Index n = shape_numel(shape);
    if (static_cast<Index>(data.size()) != n) {
        throw ConfigError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
    return impl_->ensure_grad();
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

template <typename T>
T BasicTensor<T>::item() const {
    if (impl_->data.size() != 1) {
        throw UsageError("item() on tensor of shape " + shape_str(impl_->shape));
    }
    return impl_->data[0];
}

template <typename T>
Index BasicTensor<T>::flat_index(std::initializer_list<Index> idx) const {
    const Shape& s = impl_->shape;
    if (idx.size() != s.size()) {
        throw UsageError("index rank " + std::to_string(idx.size()) + " for tensor " + shape_str(s));
    }
    Index flat = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
        if (i < 0 || i >= s[axis]) throw UsageError("index out of range for " + shape_str(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return flat;
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<Index> idx) const {
    return impl_->data[static_cast<std::size_t>(flat_index(idx))];
}

template <typename T>
T& BasicTensor<T>::at(std::initializer_list<Index> idx) {
    return impl_->data[static_cast<std::size_t>(flat_index(idx))];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
    BasicTensor out(impl_->shape, impl_->data);
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return BasicTensor(impl_->shape, impl_->data);
}

template <typename T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
    for (const auto* t : inputs) {
        if (t != nullptr && t->requires_grad()) return true;
    }
    return false;
}

template <typename T>
bool attach_node(BasicTensor<T>& out, const char* op, std::vector<BasicTensor<T>> inputs,
                 std::function<void(const TensorImpl<T>&)> backward_fn) {
    if (!grad_mode) return false;
    const bool needed =
        std::any_of(inputs.begin(), inputs.end(), [](const auto& t) { return t.requires_grad(); });
    if (!needed) return false;
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
    out.impl().node = std::move(node);
    out.impl().requires_grad = true;
    return true;
}

template <typename T>
void backward(BasicTensor<T>& loss) {
    TensorImpl<T>& root = loss.impl();
    if (root.consumed) {
        throw UsageError("backward() called twice on the same graph; re-run the forward pass");
    }
    if (root.data.size() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
    }
    if (!root.requires_grad) {
        throw UsageError("backward() on a tensor that does not require grad");
    }

    // Iterative post-order DFS gives a topological order of the graph.
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<const TensorImpl<T>*> seen;
    std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
    stack.emplace_back(&root, 0);
    seen.insert(&root);
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        if (impl->node && next < impl->node->inputs.size()) {
            TensorImpl<T>* child = &impl->node->inputs[next++].impl();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(impl);
        stack.pop_back();
    }

    root.ensure_grad()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* impl = *it;
        if (impl->node && !impl->grad.empty()) impl->node->backward(*impl);
    }
    for (TensorImpl<T>* impl : order) impl->node.reset();
    root.consumed = true;
}

#define LETNET_INSTANTIATE(T)                                                                    \
    template struct TensorImpl<T>;                                                               \
    template class BasicTensor<T>;                                                               \
    template void backward<T>(BasicTensor<T>&);                                                  \
    template bool attach_node<T>(BasicTensor<T>&, const char*, std::vector<BasicTensor<T>>,      \
                                 std::function<void(const TensorImpl<T>&)>);                     \
    template bool any_requires_grad<T>(std::initializer_list<const BasicTensor<T>*>);

LETNET_INSTANTIATE(float)
LETNET_INSTANTIATE(double)

}  // namespace letnet
