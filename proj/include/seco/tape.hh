#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "seco/matrix.hh"
#include "seco/param_store.hh"

namespace seco {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    std::int32_t idx = -1;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
};

// Reverse-mode tape over dense matrices. One tape per forward pass; nodes are
// created by the free functions below (modules add their own fused ops via
// make_node). backward() sweeps nodes in reverse creation order and finally
// flushes gradients of parameter leaves into their ParamStore entries.
class Tape {
public:
    Var constant(Matrix value);
    Var param(ParamStore& store, const std::string& name);
    // Read-only copy of a parameter value; used by evaluation paths so a
    // const store is never written back to.
    Var frozen(const ParamStore& store, const std::string& name);

    // Generic node builder. `backward` receives the tape and the node's own
    // index and must push gradient into the parents via add_grad.
    Var make_node(Matrix value, std::vector<Var> parents,
                  std::function<void(Tape&, std::int32_t)> backward);

    const Matrix& value_of(Var v) const;
    // Accumulated upstream gradient of a node (zero matrix if untouched).
    const Matrix& grad_of(Var v);
    void add_grad(Var v, const Matrix& g);
    bool needs_grad(Var v) const;

    // Seeds `loss` (1x1) with gradient one, runs the reverse sweep, then adds
    // every parameter leaf's gradient into its ParamStore entry.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool grad_live = false;
        bool needs_grad = false;
        std::function<void(Tape&, std::int32_t)> back;
        ParamEntry* param = nullptr;
    };
    std::vector<Node> nodes_;

    std::int32_t push(Node node);
    friend struct Var;
};

// -- core ops --------------------------------------------------------------

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);       // matrix product
Var matmul(Var a, Var b);
Var matmul_bt(Var a, Var b);       // a * b^T
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var affine(Var a, double mul, double add);   // elementwise mul*x + add
Var add_row_broadcast(Var x, Var row);       // row is 1 x cols
Var sigmoid(Var a);
Var tanh_op(Var a);
Var rrelu(Var a, double lower, double upper, Mode mode, Rng* rng);
Var softmax_rows(Var logits);
// Sum over rows of -ln p[target] (probability floor as in cross_entropy).
Var cross_entropy_sum(Var probabilities, std::vector<int> targets);
Var gather_rows(Var x, std::vector<int> ids);
// Mean of the rows of `messages` that share a group id; groups with no
// incoming rows get a zero row.
Var group_mean_rows(Var messages, std::vector<int> groups, Index n_groups);
Var concat_cols(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);
Var block_rows(Var x, Index start, Index count);
Var sum_all(Var x);                // 1x1 sum of all entries

}  // namespace seco
