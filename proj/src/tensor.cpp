#include "kaneq/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>

namespace kaneq::ad {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int s : shape) {
        if (s < 0) throw contract_error("negative dimension in shape " + shape_to_string(shape));
        n *= static_cast<std::size_t>(s);
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw dimension_error(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                              " vs " + shape_to_string(b.shape()));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2)
        throw dimension_error(std::string(op) + ": expected rank-2 tensor, got shape " +
                              shape_to_string(t.shape()));
}

} // namespace

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x) without overflow at large |x|.
double stable_softplus(double x) {
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->values.assign(1, v);
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    const std::size_t n = shape_numel(shape);
    t.d_->shape = std::move(shape);
    t.d_->values.assign(n, 0.0);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    const std::size_t n = shape_numel(shape);
    if (n != values.size())
        throw dimension_error("tensor init: " + std::to_string(values.size()) +
                              " values for shape " + shape_to_string(shape));
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    return t;
}

int Tensor::rows() const {
    if (d_->shape.size() != 2) throw contract_error("rows(): tensor is not rank 2");
    return d_->shape[0];
}

int Tensor::cols() const {
    if (d_->shape.size() != 2) throw contract_error("cols(): tensor is not rank 2");
    return d_->shape[1];
}

double Tensor::item() const {
    if (numel() != 1) throw contract_error("item(): tensor is not scalar");
    return d_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    d_->requires_grad = on;
    if (on && d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), 0.0);
    return *this;
}

void Tensor::zero_grad() { d_->grad.assign(d_->values.size(), 0.0); }

void zero_grad(std::vector<Tensor>& params) {
    for (auto& p : params) p.zero_grad();
}

Tensor Graph::record(Op op, std::vector<Tensor> inputs, Tensor output) {
    output.data()->node_id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{op, std::move(inputs), output, 0.0, nullptr, {}});
    return output;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    return record(Op::Add, {a, b}, out);
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    return record(Op::Sub, {a, b}, out);
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
    return record(Op::Mul, {a, b}, out);
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw dimension_error("matmul: inner dimensions differ, " + shape_to_string(a.shape()) +
                              " vs " + shape_to_string(b.shape()));
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    MapC A(a.values().data(), a.rows(), a.cols());
    MapC B(b.values().data(), b.rows(), b.cols());
    MapM C(out.values().data(), a.rows(), b.cols());
    C.noalias() = A * B;
    return record(Op::MatMul, {a, b}, out);
}

Tensor Graph::sum(const Tensor& a) {
    Tensor out = Tensor::scalar(std::accumulate(a.values().begin(), a.values().end(), 0.0));
    return record(Op::Sum, {a}, out);
}

Tensor Graph::mean(const Tensor& a) {
    if (a.numel() == 0) throw contract_error("mean of empty tensor");
    const double m =
        std::accumulate(a.values().begin(), a.values().end(), 0.0) / static_cast<double>(a.numel());
    return record(Op::Mean, {a}, Tensor::scalar(m));
}

Tensor Graph::log(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (!(a.values()[i] > 0.0))
            throw domain_error("log of non-positive value " + std::to_string(a.values()[i]));
        out.values()[i] = std::log(a.values()[i]);
    }
    return record(Op::Log, {a}, out);
}

Tensor Graph::exp(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = std::exp(a.values()[i]);
    return record(Op::Exp, {a}, out);
}

Tensor Graph::silu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double x = a.values()[i];
        out.values()[i] = x * stable_sigmoid(x);
    }
    return record(Op::Silu, {a}, out);
}

Tensor Graph::mish(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double x = a.values()[i];
        out.values()[i] = x * std::tanh(stable_softplus(x));
    }
    return record(Op::Mish, {a}, out);
}

Tensor Graph::add_bias(const Tensor& a, const Tensor& bias) {
    require_rank2(a, "add_bias");
    if (bias.shape().size() != 1 || bias.shape()[0] != a.cols())
        throw dimension_error("add_bias: bias shape " + shape_to_string(bias.shape()) +
                              " does not broadcast over " + shape_to_string(a.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const int n = a.cols();
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < n; ++c)
            out.values()[static_cast<std::size_t>(r) * n + c] =
                a.values()[static_cast<std::size_t>(r) * n + c] + bias.values()[static_cast<std::size_t>(c)];
    return record(Op::AddBias, {a, bias}, out);
}

Tensor Graph::scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = c * a.values()[i];
    Tensor rec = record(Op::Scale, {a}, out);
    nodes_.back().scalar = c;
    return rec;
}

Tensor Graph::spline_basis(const Tensor& x, const spline::SplineGrid& grid) {
    require_rank2(x, "spline_basis");
    const int batch = x.rows();
    const int p = x.cols();
    const int nb = grid.num_basis();
    const int d = grid.degree();
    Tensor out = Tensor::zeros({batch, p * nb});

    std::vector<double> saved(static_cast<std::size_t>(batch) * p * (d + 2));
    double bval[65], bder[65];
    for (int r = 0; r < batch; ++r) {
        for (int c = 0; c < p; ++c) {
            const std::size_t s = static_cast<std::size_t>(r) * p + c;
            int first = 0;
            grid.basis_and_derivative_local(x.values()[s], first, bval, bder);
            double* dst = out.values().data() + (static_cast<std::size_t>(r) * p + c) * nb;
            double* sv = saved.data() + s * (d + 2);
            sv[0] = static_cast<double>(first);
            for (int i = 0; i <= d; ++i) {
                dst[first + i] = bval[i];
                sv[1 + i] = bder[i];
            }
        }
    }
    Tensor rec = record(Op::SplineBasis, {x}, out);
    nodes_.back().grid = &grid;
    nodes_.back().saved = std::move(saved);
    return rec;
}

Tensor Graph::tile_rows(const Tensor& s, int nb) {
    require_rank2(s, "tile_rows");
    if (nb < 1) throw contract_error("tile_rows: nb must be >= 1");
    const int p = s.rows(), q = s.cols();
    Tensor out = Tensor::zeros({p * nb, q});
    for (int i = 0; i < p; ++i)
        for (int r = 0; r < nb; ++r)
            for (int j = 0; j < q; ++j)
                out.values()[(static_cast<std::size_t>(i) * nb + r) * q + j] =
                    s.values()[static_cast<std::size_t>(i) * q + j];
    Tensor rec = record(Op::TileRows, {s}, out);
    nodes_.back().scalar = nb;
    return rec;
}

void Graph::clear() {
    for (auto& n : nodes_) n.output.data()->node_id = -1;
    nodes_.clear();
}

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw contract_error("backward: loss must be a scalar tensor");
    const int lid = loss.data()->node_id;
    if (lid < 0 || lid >= static_cast<int>(nodes_.size()) ||
        nodes_[static_cast<std::size_t>(lid)].output.data() != loss.data())
        throw contract_error("backward: loss is not a node of this graph");

    auto on_graph = [&](const Tensor& t) {
        const int id = t.data()->node_id;
        return id >= 0 && id < static_cast<int>(nodes_.size()) &&
               nodes_[static_cast<std::size_t>(id)].output.data() == t.data();
    };

    // Intermediates get a fresh gradient per call; leaf parameters accumulate.
    for (auto& n : nodes_) n.output.data()->grad.assign(n.output.numel(), 0.0);
    for (auto& n : nodes_)
        for (auto& in : n.inputs)
            if (in.requires_grad() && in.grad().size() != in.numel())
                in.data()->grad.assign(in.numel(), 0.0);

    nodes_[static_cast<std::size_t>(lid)].output.data()->grad[0] = 1.0;

    for (int ni = lid; ni >= 0; --ni) {
        Node& n = nodes_[static_cast<std::size_t>(ni)];
        const std::vector<double>& gy = n.output.grad();
        auto wants = [&](const Tensor& t) { return t.requires_grad() || on_graph(t); };

        switch (n.op) {
        case Op::Add: {
            for (int k = 0; k < 2; ++k)
                if (wants(n.inputs[static_cast<std::size_t>(k)])) {
                    auto& g = n.inputs[static_cast<std::size_t>(k)].grad();
                    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                }
            break;
        }
        case Op::Sub: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            if (wants(n.inputs[1])) {
                auto& g = n.inputs[1].grad();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] -= gy[i];
            }
            break;
        }
        case Op::Mul: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const auto& bv = n.inputs[1].values();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bv[i];
            }
            if (wants(n.inputs[1])) {
                auto& g = n.inputs[1].grad();
                const auto& av = n.inputs[0].values();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * av[i];
            }
            break;
        }
        case Op::MatMul: {
            Tensor& a = n.inputs[0];
            Tensor& b = n.inputs[1];
            MapC A(a.values().data(), a.rows(), a.cols());
            MapC B(b.values().data(), b.rows(), b.cols());
            MapC dC(gy.data(), a.rows(), b.cols());
            if (wants(a)) {
                MapM dA(a.data()->grad.data(), a.rows(), a.cols());
                dA.noalias() += dC * B.transpose();
            }
            if (wants(b)) {
                MapM dB(b.data()->grad.data(), b.rows(), b.cols());
                dB.noalias() += A.transpose() * dC;
            }
            break;
        }
        case Op::Sum: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                for (auto& v : g) v += gy[0];
            }
            break;
        }
        case Op::Mean: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const double s = gy[0] / static_cast<double>(g.size());
                for (auto& v : g) v += s;
            }
            break;
        }
        case Op::Log: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const auto& xv = n.inputs[0].values();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] / xv[i];
            }
            break;
        }
        case Op::Exp: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const auto& yv = n.output.values();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * yv[i];
            }
            break;
        }
        case Op::Silu: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const auto& xv = n.inputs[0].values();
                for (std::size_t i = 0; i < gy.size(); ++i) {
                    const double s = stable_sigmoid(xv[i]);
                    g[i] += gy[i] * (s * (1.0 + xv[i] * (1.0 - s)));
                }
            }
            break;
        }
        case Op::Mish: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const auto& xv = n.inputs[0].values();
                for (std::size_t i = 0; i < gy.size(); ++i) {
                    const double x = xv[i];
                    const double t = std::tanh(stable_softplus(x));
                    g[i] += gy[i] * (t + x * (1.0 - t * t) * stable_sigmoid(x));
                }
            }
            break;
        }
        case Op::AddBias: {
            const int rows = n.inputs[0].rows(), cols = n.inputs[0].cols();
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            if (wants(n.inputs[1])) {
                auto& g = n.inputs[1].grad();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        g[static_cast<std::size_t>(c)] += gy[static_cast<std::size_t>(r) * cols + c];
            }
            break;
        }
        case Op::Scale: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += n.scalar * gy[i];
            }
            break;
        }
        case Op::SplineBasis: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const int d = n.grid->degree();
                const int nb = n.grid->num_basis();
                const std::size_t scalars = n.inputs[0].numel();
                for (std::size_t s = 0; s < scalars; ++s) {
                    const double* sv = n.saved.data() + s * (d + 2);
                    const int first = static_cast<int>(sv[0]);
                    const double* gyrow = gy.data() + s * static_cast<std::size_t>(nb);
                    double acc = 0.0;
                    for (int i = 0; i <= d; ++i) acc += gyrow[first + i] * sv[1 + i];
                    g[s] += acc;
                }
            }
            break;
        }
        case Op::TileRows: {
            if (wants(n.inputs[0])) {
                auto& g = n.inputs[0].grad();
                const int nb = static_cast<int>(n.scalar);
                const int p = n.inputs[0].rows(), q = n.inputs[0].cols();
                for (int i = 0; i < p; ++i)
                    for (int r = 0; r < nb; ++r)
                        for (int j = 0; j < q; ++j)
                            g[static_cast<std::size_t>(i) * q + j] +=
                                gy[(static_cast<std::size_t>(i) * nb + r) * q + j];
            }
            break;
        }
        }
    }
}

} // namespace kaneq::ad
