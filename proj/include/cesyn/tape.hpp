#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <vector>

#include "cesyn/error.hpp"
#include "cesyn/tensor.hpp"

namespace cesyn {

// Reverse-mode tape. Ops append nodes in execution order, which is already a
// topological order, so backward() is a single reverse sweep. Gradients
// accumulate additively into per-node buffers; a second backward() without
// reset() is rejected.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const std::vector<T>&)>;

    Tape() : serial_(next_serial()) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    uint64_t serial() const { return serial_; }

    // Marks t as a differentiable leaf on this tape.
    void watch(Tensor<T>& t) {
        nodes_.push_back(Node{t.size(), nullptr});
        t.node = static_cast<int>(nodes_.size()) - 1;
        t.tape_serial = serial_;
    }

    // Records an op output; fn accumulates upstream gradient into the
    // grad buffers of the op's parents.
    int emit(int64_t count, BackwardFn fn) {
        nodes_.push_back(Node{count, std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<T>& grad_buffer(int node) {
        auto& g = grads_[node];
        if (g.empty()) g.assign(nodes_[node].count, T(0));
        return g;
    }

    bool has_grad(const Tensor<T>& t) const {
        return t.node >= 0 && t.tape_serial == serial_ && !grads_[t.node].empty();
    }

    const std::vector<T>& grad(const Tensor<T>& t) const {
        require(t.node >= 0 && t.tape_serial == serial_, "tensor is not tracked by this tape");
        require(!grads_.empty() && !grads_[t.node].empty(), "no gradient recorded; run backward() first");
        return grads_[t.node];
    }

    void backward(const Tensor<T>& root) {
        require(root.node >= 0 && root.tape_serial == serial_, "backward root is not tracked by this tape");
        require_shape(root.size() == 1, "backward root must be scalar, got " + shape_str(root.shape));
        if (backward_done_) throw NumericError("tape backward() called twice without reset()");
        backward_done_ = true;
        grads_.assign(nodes_.size(), {});
        grads_[root.node] = {T(1)};
        for (int i = root.node; i >= 0; --i) {
            if (grads_[i].empty() || !nodes_[i].backward) continue;
            nodes_[i].backward(*this, grads_[i]);
        }
    }

    void reset() {
        nodes_.clear();
        grads_.clear();
        backward_done_ = false;
        serial_ = next_serial();
    }

    size_t num_nodes() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        int64_t count;
        BackwardFn backward;
    };

    static uint64_t next_serial() {
        static std::atomic<uint64_t> counter{1};
        return counter.fetch_add(1);
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
    bool backward_done_ = false;
    uint64_t serial_;
};

// True when the tensor participates in differentiation on this tape.
template <typename T>
inline bool tracked(const Tape<T>* tape, const Tensor<T>& t) {
    return tape != nullptr && t.node >= 0 && t.tape_serial == tape->serial();
}

}  // namespace cesyn
