#ifndef KANEQ_NN_HPP
#define KANEQ_NN_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "kaneq/tensor.hpp"
#include "kaneq/transform.hpp"

namespace kaneq::nn {

enum class Activation { Mish, Silu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpConfig {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<int> hidden;
    Activation activation = Activation::Mish;
};

struct KanConfig {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<int> hidden;
    int degree = 3;    // spline degree d
    int grid_size = 5; // number of grid intervals g
    bool standalone_spline_scale = false;
    double domain_lo = -0.1;
    double domain_hi = 1.1;
};

// Trainable scalars.
// MLP: sum over layers of in*out + out.
// KAN: edges * (g + d + 1), plus one more per edge with the standalone
// spline scale; g + d spline coefficients and one base weight per edge.
long param_count(const MlpConfig& cfg);
long param_count(const KanConfig& cfg);

// Fully-connected net with fixed activations on hidden nodes, linear output.
class Mlp {
public:
    Mlp(MlpConfig cfg, std::uint64_t seed);

    // y = W_{n+1} act( ... act(W_1 x + b_1) ... ) + b_{n+1}, composed from
    // autodiff primitives in layer order: matmul, add_bias, activation.
    ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;

    const MlpConfig& config() const { return cfg_; }
    std::vector<ad::Tensor> params() const;
    const std::vector<ad::Tensor>& weights() const { return weights_; }
    const std::vector<ad::Tensor>& biases() const { return biases_; }
    std::vector<ad::Tensor>& weights() { return weights_; }
    std::vector<ad::Tensor>& biases() { return biases_; }

private:
    MlpConfig cfg_;
    std::vector<ad::Tensor> weights_; // (in, out), row-major
    std::vector<ad::Tensor> biases_;  // (out)
};

// One KAN layer: phi(x) = w_f * silu(x) + w_s * sum_j c_j B_{j,d}(x) per
// edge, summed over input neurons. Vectorized as two matmuls against the
// silu features and the expanded spline basis.
struct KanLayer {
    std::shared_ptr<const spline::SplineGrid> grid;
    ad::Tensor base_weight;  // (p_in, p_out)
    ad::Tensor spline_coeff; // (p_in * num_basis, p_out)
    ad::Tensor spline_scale; // (p_in, p_out), only with standalone scale
};

class Kan {
public:
    Kan(KanConfig cfg, std::uint64_t seed);

    ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;

    const KanConfig& config() const { return cfg_; }
    std::vector<ad::Tensor> params() const;
    const std::vector<KanLayer>& layers() const { return layers_; }
    std::vector<KanLayer>& layers() { return layers_; }

private:
    KanConfig cfg_;
    std::vector<KanLayer> layers_;
};

// Value-semantics wrapper over either architecture. Copies share parameter
// storage; clone() takes a deep snapshot (used for best-epoch checkpoints).
class Network {
public:
    Network() = default;
    explicit Network(Mlp mlp) : net_(std::move(mlp)) {}
    explicit Network(Kan kan) : net_(std::move(kan)) {}

    static Network make_mlp(MlpConfig cfg, std::uint64_t seed) { return Network(Mlp(std::move(cfg), seed)); }
    static Network make_kan(KanConfig cfg, std::uint64_t seed) { return Network(Kan(std::move(cfg), seed)); }

    bool defined() const { return net_.index() != 0; }
    bool is_kan() const { return std::holds_alternative<Kan>(net_); }
    const Mlp& mlp() const { return std::get<Mlp>(net_); }
    const Kan& kan() const { return std::get<Kan>(net_); }

    int input_dim() const;
    int output_dim() const;
    long param_count() const;

    // Tape-recorded forward; output checked finite.
    ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;
    std::vector<ad::Tensor> params() const;

    // Tape-free inference for evaluation and benchmarking: row-major
    // (batch x input_dim) in, (batch x output_dim) out.
    std::vector<double> infer(const std::vector<double>& x, int batch) const;

    Network clone() const;

private:
    std::variant<std::monostate, Mlp, Kan> net_;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    std::string dataset_hash;
};

struct Checkpoint {
    Network net;
    data::Preprocess preprocess;
    CheckpointMeta meta;
};

// Versioned JSON document; parameter sections are named float arrays and
// load validates every shape against the config before building the net.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace kaneq::nn

#endif
