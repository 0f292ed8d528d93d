#pragma once

#include <array>
#include <functional>
#include <vector>

#include "bc/tensor.hpp"

namespace bc {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    bool tracked() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. One tape per training thread; never shared.
// Repeated backward() calls without reset() accumulate gradients.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;                // allocated lazily in backward
        std::array<int, 2> parents{-1, -1};
        // Accumulates into parents' grads given this node's grad.
        std::function<void(Tape&, Node&)> backprop;
        bool requires_grad = false; // leaf flag; interior nodes inherit
    };

    // Tracked leaf (parameter): participates in gradients.
    Var param(const Tensor& t);
    // Untracked leaf (input, noise): a constant from the graph's view.
    Var constant(const Tensor& t);

    const Tensor& value(int id) const { return nodes_[id].value; }
    const Tensor& grad(int id) const;
    bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

    // Backpropagate from a scalar output. Throws ShapeError otherwise.
    void backward(Var output);

    void reset() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    // Used by op implementations.
    Var emit(Node n);
    Node& node(int id) { return nodes_[id]; }
    Tensor& grad_buffer(int id);

private:
    std::vector<Node> nodes_;
};

enum class Padding { Valid, Same };

// --- differentiable ops -----------------------------------------------------
// Binary ops broadcast over: equal shapes, scalar-with-tensor, a trailing-axis
// vector against [..., F], and size-1 axes as in [K,1,1,F] vs [K,H,W,F].
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);

Var vexp(Var a);
Var vlog(Var a);      // DomainError on non-positive input
Var vsqrt(Var a);     // DomainError on negative input
Var square(Var a);
Var sigmoid(Var a);
Var softplus(Var a);  // overflow-safe for large x
Var relu(Var a);

Var matmul(Var a, Var b);                      // [r,c] x [c,k] -> [r,k]
Var conv2d(Var input, Var kernels, Padding p); // BHWC x hwC_inC_out, stride 1
Var mean_pool2(Var a);                         // 2x2 stride-2 mean pool, BHWC
Var reshape(Var a, Shape s);
Var sum(Var a);                                // -> scalar
// Mean negative log-likelihood of labels under softmax(logits); -> scalar.
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

// --- non-autograd counterparts (deterministic inference paths) --------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding p);
Tensor mean_pool2(const Tensor& a);
Tensor relu(const Tensor& a);

} // namespace bc
