#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "letnet/error.hpp"

namespace letnet {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class BasicTensor;

template <typename T>
struct TensorImpl;

// One recorded primitive application. `inputs` keeps the operands alive and
// defines the graph edges; `backward` reads the output gradient and
// accumulates into the operands.
template <typename T>
struct Node {
    const char* op = "";
    std::vector<BasicTensor<T>> inputs;
    std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    bool consumed = false;  // set on a loss after backward() ran through it
    std::shared_ptr<Node<T>> node;

    void accumulate_grad(std::span<const T> g);
    std::span<T> ensure_grad();
};

// Shared handle to a dense row-major tensor. Copies alias the same storage;
// use clone() for a deep copy.
template <typename T>
class BasicTensor {
   public:
    using value_type = T;

    BasicTensor();
    explicit BasicTensor(Shape shape, T fill = T{0});
    BasicTensor(Shape shape, std::vector<T> data);

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
    static BasicTensor full(Shape shape, T value) { return BasicTensor(std::move(shape), value); }
    static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

    const Shape& shape() const { return impl_->shape; }
    Index dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rank() const { return impl_->shape.size(); }
    Index numel() const { return static_cast<Index>(impl_->data.size()); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    std::vector<T>& storage() { return impl_->data; }
    const std::vector<T>& storage() const { return impl_->data; }

    bool has_grad() const { return !impl_->grad.empty(); }
    // Gradient buffer; zeros when nothing has accumulated yet.
    std::span<const T> grad() const;
    // The handle is shared; gradient storage is writable through const copies.
    std::span<T> mutable_grad() const { return impl_->ensure_grad(); }
    void zero_grad() const { impl_->grad.clear(); }

    bool requires_grad() const { return impl_->requires_grad; }
    BasicTensor& set_requires_grad(bool on = true);

    bool is_leaf() const { return impl_->node == nullptr; }
    const char* grad_fn() const { return impl_->node ? impl_->node->op : ""; }

    T item() const;

    // Element access by multi-index (checked).
    T at(std::initializer_list<Index> idx) const;
    T& at(std::initializer_list<Index> idx);

    BasicTensor clone() const;    // deep copy, no graph, same requires_grad
    BasicTensor detach() const;   // deep copy, no graph, requires_grad off

    TensorImpl<T>& impl() { return *impl_; }
    const TensorImpl<T>& impl() const { return *impl_; }
    const std::shared_ptr<TensorImpl<T>>& handle() const { return impl_; }

    bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

   private:
    Index flat_index(std::initializer_list<Index> idx) const;

    std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Graph recording is on by default; a NoGradGuard disables it for the calling
// thread (eval-mode inference keeps no tape).
bool grad_enabled();

class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

// Reverse-mode sweep from a scalar loss. Every requires_grad leaf reachable
// from the loss receives d(loss)/d(leaf) added to its grad buffer. The graph
// is released afterwards; a second call on the same loss is a UsageError.
template <typename T>
void backward(BasicTensor<T>& loss);

// Wires `out` into the graph if recording is on and any input requires grad.
// Returns true when the node was attached.
template <typename T>
bool attach_node(BasicTensor<T>& out, const char* op, std::vector<BasicTensor<T>> inputs,
                 std::function<void(const TensorImpl<T>&)> backward_fn);

template <typename T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> inputs);

}  // namespace letnet
