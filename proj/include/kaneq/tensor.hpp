#ifndef KANEQ_TENSOR_HPP
#define KANEQ_TENSOR_HPP

#include <memory>
#include <vector>

#include "kaneq/common.hpp"
#include "kaneq/spline.hpp"

namespace kaneq::ad {

// Dense 64-bit float array with an accumulated gradient buffer.
// Rank 0 (empty shape) is a scalar; rank 1 a vector; rank 2 a row-major matrix.
struct TensorData {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    int node_id = -1; // index into the graph that produced it; -1 for leaves
};

class Tensor {
public:
    Tensor() = default;

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor from(std::vector<int> shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(d_); }
    const std::vector<int>& shape() const { return d_->shape; }
    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    std::vector<double>& grad() { return d_->grad; }
    const std::vector<double>& grad() const { return d_->grad; }

    std::size_t numel() const { return d_->values.size(); }
    bool is_scalar() const { return d_->shape.empty(); }
    int rows() const;
    int cols() const;
    double item() const;

    Tensor& set_requires_grad(bool on = true);
    bool requires_grad() const { return d_->requires_grad; }
    void zero_grad();

    TensorData* data() { return d_.get(); }
    const TensorData* data() const { return d_.get(); }

private:
    std::shared_ptr<TensorData> d_;
};

enum class Op {
    Add,
    Sub,
    Mul,
    MatMul,
    Sum,
    Mean,
    Log,
    Exp,
    Silu,
    Mish,
    AddBias,
    Scale,
    SplineBasis,
    TileRows,
};

// Append-only tape. Nodes are recorded in forward order; backward visits
// them exactly once in reverse. One graph is confined to one worker at a
// time; rebuild (clear) per forward pass.
class Graph {
public:
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor log(const Tensor& a);
    Tensor exp(const Tensor& a);
    Tensor silu(const Tensor& a);
    Tensor mish(const Tensor& a);
    // A: (batch, n), bias: (n); bias broadcast over the batch dimension.
    Tensor add_bias(const Tensor& a, const Tensor& bias);
    Tensor scale(const Tensor& a, double c);
    // X: (batch, p) -> (batch, p*nb): per-scalar B-spline basis expansion.
    Tensor spline_basis(const Tensor& x, const spline::SplineGrid& grid);
    // S: (p, q) -> (p*nb, q), each row repeated nb times contiguously.
    Tensor tile_rows(const Tensor& s, int nb);

    // Accumulates d(loss)/dp into p.grad for every requires_grad leaf
    // reachable from loss. Repeated calls keep accumulating.
    void backward(const Tensor& loss);

    std::size_t num_nodes() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Op op;
        std::vector<Tensor> inputs;
        Tensor output;
        double scalar = 0.0;
        const spline::SplineGrid* grid = nullptr;
        std::vector<double> saved;
    };

    Tensor record(Op op, std::vector<Tensor> inputs, Tensor output);
    std::vector<Node> nodes_;
};

double stable_sigmoid(double x);
double stable_softplus(double x);

void zero_grad(std::vector<Tensor>& params);

} // namespace kaneq::ad

#endif
