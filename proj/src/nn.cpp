#include "kaneq/nn.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>

namespace kaneq::nn {

using json = nlohmann::json;

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

// Contracts the d+1 live basis values of every row in a tile against the
// matching coefficient rows. D is a template parameter so the reduction
// unrolls and the q loop vectorizes.
template <int D>
void contract_tile(const double* __restrict__ nlev, const int* __restrict__ firsts,
                   const double* __restrict__ cw_col, double* __restrict__ out, int tile,
                   int p_out, int stride_out) {
    for (int i = 0; i < tile; ++i) {
        double bloc[D + 1];
        for (int r = 0; r <= D; ++r) bloc[r] = nlev[static_cast<std::size_t>(r) * tile + i];
        const double* __restrict__ cc =
            cw_col + static_cast<std::size_t>(firsts[i]) * p_out;
        double* __restrict__ orow = out + static_cast<std::size_t>(i) * stride_out;
        for (int q = 0; q < p_out; ++q) {
            double acc = 0.0;
            for (int r = 0; r <= D; ++r) acc += bloc[r] * cc[static_cast<std::size_t>(r) * p_out + q];
            orow[q] += acc;
        }
    }
}

using ContractFn = void (*)(const double*, const int*, const double*, double*, int, int, int);

ContractFn contract_for_degree(int d) {
    switch (d) {
    case 1: return contract_tile<1>;
    case 2: return contract_tile<2>;
    case 3: return contract_tile<3>;
    case 4: return contract_tile<4>;
    case 5: return contract_tile<5>;
    case 6: return contract_tile<6>;
    case 7: return contract_tile<7>;
    case 8: return contract_tile<8>;
    case 9: return contract_tile<9>;
    case 10: return contract_tile<10>;
    default: return nullptr;
    }
}

// Evaluates one input column's spline contributions for every row via the
// per-span Horner form sum_k A_k t^k; A blocks are laid out
// ((span)*(D+1) + k)*p_out + q for the column at hand.
// One input column's spline contributions over a row tile, per-span Horner
// form sum_k A_k t^k with blocks laid out (span*(D+1) + k)*p_out + q.
// Row tiles keep the output slab in L2 while the column block stays in L1;
// two rows per pass keep the FMA chains overlapped.
template <int D>
void horner_column(const double* __restrict__ xs, int stride_x, int rows, double lo, double hi,
                   double inv_step, int last_span, const double* __restrict__ a_col, int p_out,
                   double* __restrict__ out) {
    auto locate = [&](int i, double& t) {
        double x = xs[static_cast<std::size_t>(i) * stride_x];
        x = std::min(std::max(x, lo), hi);
        const double pos = (x - lo) * inv_step;
        int span = static_cast<int>(pos);
        span = std::min(std::max(span, 0), last_span);
        t = pos - span;
        return a_col + static_cast<std::size_t>(span) * (D + 1) * p_out;
    };
    int i = 0;
    // four independent Horner chains per pass keep the FMA pipes busy
    for (; i + 3 < rows; i += 4) {
        double t0, t1, t2, t3;
        const double* __restrict__ b0 = locate(i, t0);
        const double* __restrict__ b1 = locate(i + 1, t1);
        const double* __restrict__ b2 = locate(i + 2, t2);
        const double* __restrict__ b3 = locate(i + 3, t3);
        double* __restrict__ o0 = out + static_cast<std::size_t>(i) * p_out;
        double* __restrict__ o1 = o0 + p_out;
        double* __restrict__ o2 = o1 + p_out;
        double* __restrict__ o3 = o2 + p_out;
        for (int q = 0; q < p_out; ++q) {
            double a0 = b0[static_cast<std::size_t>(D) * p_out + q];
            double a1 = b1[static_cast<std::size_t>(D) * p_out + q];
            double a2 = b2[static_cast<std::size_t>(D) * p_out + q];
            double a3 = b3[static_cast<std::size_t>(D) * p_out + q];
            for (int k = D - 1; k >= 0; --k) {
                a0 = a0 * t0 + b0[static_cast<std::size_t>(k) * p_out + q];
                a1 = a1 * t1 + b1[static_cast<std::size_t>(k) * p_out + q];
                a2 = a2 * t2 + b2[static_cast<std::size_t>(k) * p_out + q];
                a3 = a3 * t3 + b3[static_cast<std::size_t>(k) * p_out + q];
            }
            o0[q] += a0;
            o1[q] += a1;
            o2[q] += a2;
            o3[q] += a3;
        }
    }
    for (; i < rows; ++i) {
        double t = 0.0;
        const double* __restrict__ blk = locate(i, t);
        double* __restrict__ orow = out + static_cast<std::size_t>(i) * p_out;
        for (int q = 0; q < p_out; ++q) {
            double acc = blk[static_cast<std::size_t>(D) * p_out + q];
            for (int k = D - 1; k >= 0; --k)
                acc = acc * t + blk[static_cast<std::size_t>(k) * p_out + q];
            orow[q] += acc;
        }
    }
}

using HornerFn = void (*)(const double*, int, int, double, double, double, int, const double*, int,
                          double*);

HornerFn horner_for_degree(int d) {
    switch (d) {
    case 1: return horner_column<1>;
    case 2: return horner_column<2>;
    case 3: return horner_column<3>;
    case 4: return horner_column<4>;
    case 5: return horner_column<5>;
    case 6: return horner_column<6>;
    case 7: return horner_column<7>;
    case 8: return horner_column<8>;
    case 9: return horner_column<9>;
    case 10: return horner_column<10>;
    default: return nullptr;
    }
}

// Generic fallback for degrees outside the dispatch table.
void contract_generic(const double* nlev, const int* firsts, const double* cw_col, double* out,
                      int tile, int p_out, int stride_out, int d) {
    for (int i = 0; i < tile; ++i) {
        const double* cc = cw_col + static_cast<std::size_t>(firsts[i]) * p_out;
        double* orow = out + static_cast<std::size_t>(i) * stride_out;
        for (int r = 0; r <= d; ++r) {
            const double b = nlev[static_cast<std::size_t>(r) * tile + i];
            for (int q = 0; q < p_out; ++q) orow[q] += b * cc[static_cast<std::size_t>(r) * p_out + q];
        }
    }
}

std::vector<int> layer_dims(int input_dim, const std::vector<int>& hidden, int output_dim) {
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(output_dim);
    return dims;
}

void validate_widths(int input_dim, const std::vector<int>& hidden, int output_dim) {
    if (input_dim < 1 || output_dim < 1)
        throw contract_error("network dims must be >= 1");
    for (int h : hidden)
        if (h < 1) throw contract_error("hidden widths must be >= 1");
}

ad::Tensor uniform_tensor(std::vector<int> shape, double bound, std::mt19937_64& rng) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

} // namespace

std::string activation_name(Activation a) { return a == Activation::Mish ? "mish" : "silu"; }

Activation activation_from_name(const std::string& name) {
    if (name == "mish") return Activation::Mish;
    if (name == "silu") return Activation::Silu;
    throw contract_error("unknown activation: " + name);
}

long param_count(const MlpConfig& cfg) {
    const auto dims = layer_dims(cfg.input_dim, cfg.hidden, cfg.output_dim);
    long n = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        n += static_cast<long>(dims[i]) * dims[i + 1] + dims[i + 1];
    return n;
}

long param_count(const KanConfig& cfg) {
    const auto dims = layer_dims(cfg.input_dim, cfg.hidden, cfg.output_dim);
    long edges = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        edges += static_cast<long>(dims[i]) * dims[i + 1];
    const long per_edge = cfg.grid_size + cfg.degree + 1 + (cfg.standalone_spline_scale ? 1 : 0);
    return edges * per_edge;
}

Mlp::Mlp(MlpConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    validate_widths(cfg_.input_dim, cfg_.hidden, cfg_.output_dim);
    const auto dims = layer_dims(cfg_.input_dim, cfg_.hidden, cfg_.output_dim);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        weights_.push_back(uniform_tensor({dims[i], dims[i + 1]}, bound, rng));
        biases_.push_back(uniform_tensor({dims[i + 1]}, bound, rng));
    }
}

ad::Tensor Mlp::forward(ad::Graph& g, const ad::Tensor& x) const {
    if (x.shape().size() != 2 || x.cols() != cfg_.input_dim)
        throw dimension_error("mlp forward: input shape " + shape_to_string(x.shape()) +
                              " does not match input_dim " + std::to_string(cfg_.input_dim));
    ad::Tensor h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = g.add_bias(g.matmul(h, weights_[i]), biases_[i]);
        if (i + 1 < weights_.size())
            h = (cfg_.activation == Activation::Mish) ? g.mish(h) : g.silu(h);
    }
    return h;
}

std::vector<ad::Tensor> Mlp::params() const {
    std::vector<ad::Tensor> out;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        out.push_back(weights_[i]);
        out.push_back(biases_[i]);
    }
    return out;
}

Kan::Kan(KanConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    validate_widths(cfg_.input_dim, cfg_.hidden, cfg_.output_dim);
    if (cfg_.degree < 1) throw contract_error("kan degree must be >= 1");
    if (cfg_.grid_size < 2) throw contract_error("kan grid size must be >= 2");
    const auto dims = layer_dims(cfg_.input_dim, cfg_.hidden, cfg_.output_dim);
    std::mt19937_64 rng(seed);
    const int nb = cfg_.grid_size + cfg_.degree;
    // Small spline init keeps the early net close to its SiLU baseline.
    std::normal_distribution<double> coeff_dist(0.0, 0.1 / std::sqrt(static_cast<double>(nb)));
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        KanLayer layer;
        layer.grid = std::make_shared<spline::SplineGrid>(cfg_.degree, cfg_.grid_size,
                                                          cfg_.domain_lo, cfg_.domain_hi);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        layer.base_weight = uniform_tensor({dims[i], dims[i + 1]}, bound, rng);
        layer.spline_coeff = ad::Tensor::zeros({dims[i] * nb, dims[i + 1]});
        for (auto& v : layer.spline_coeff.values()) v = coeff_dist(rng);
        layer.spline_coeff.set_requires_grad(true);
        if (cfg_.standalone_spline_scale) {
            layer.spline_scale = ad::Tensor::zeros({dims[i], dims[i + 1]});
            for (auto& v : layer.spline_scale.values()) v = 1.0;
            layer.spline_scale.set_requires_grad(true);
        }
        layers_.push_back(std::move(layer));
    }
}

ad::Tensor Kan::forward(ad::Graph& g, const ad::Tensor& x) const {
    if (x.shape().size() != 2 || x.cols() != cfg_.input_dim)
        throw dimension_error("kan forward: input shape " + shape_to_string(x.shape()) +
                              " does not match input_dim " + std::to_string(cfg_.input_dim));
    const int nb = cfg_.grid_size + cfg_.degree;
    ad::Tensor h = x;
    for (const auto& layer : layers_) {
        ad::Tensor base = g.matmul(g.silu(h), layer.base_weight);
        ad::Tensor bases = g.spline_basis(h, *layer.grid);
        ad::Tensor coeff = layer.spline_coeff;
        if (layer.spline_scale.defined())
            coeff = g.mul(g.tile_rows(layer.spline_scale, nb), coeff);
        h = g.add(base, g.matmul(bases, coeff));
    }
    return h;
}

std::vector<ad::Tensor> Kan::params() const {
    std::vector<ad::Tensor> out;
    for (const auto& layer : layers_) {
        out.push_back(layer.base_weight);
        out.push_back(layer.spline_coeff);
        if (layer.spline_scale.defined()) out.push_back(layer.spline_scale);
    }
    return out;
}

int Network::input_dim() const {
    return is_kan() ? kan().config().input_dim : mlp().config().input_dim;
}

int Network::output_dim() const {
    return is_kan() ? kan().config().output_dim : mlp().config().output_dim;
}

long Network::param_count() const {
    return is_kan() ? nn::param_count(kan().config()) : nn::param_count(mlp().config());
}

ad::Tensor Network::forward(ad::Graph& g, const ad::Tensor& x) const {
    ad::Tensor out = is_kan() ? kan().forward(g, x) : mlp().forward(g, x);
    if (!all_finite(out.values()))
        throw numeric_error("network forward produced non-finite activations");
    return out;
}

std::vector<ad::Tensor> Network::params() const {
    return is_kan() ? kan().params() : mlp().params();
}

std::vector<double> Network::infer(const std::vector<double>& x, int batch) const {
    const int p = input_dim();
    if (batch < 0 || x.size() != static_cast<std::size_t>(batch) * p)
        throw dimension_error("infer: buffer size " + std::to_string(x.size()) +
                              " does not match batch " + std::to_string(batch) + " x " +
                              std::to_string(p));

    std::vector<double> cur = x;
    int width = p;

    auto apply_linear = [&](const ad::Tensor& w, const ad::Tensor* bias,
                            const std::vector<double>& in, std::vector<double>& out) {
        const int win = w.rows(), wout = w.cols();
        out.assign(static_cast<std::size_t>(batch) * wout, 0.0);
        MapC A(in.data(), batch, win);
        MapC W(w.values().data(), win, wout);
        MapM C(out.data(), batch, wout);
        C.noalias() = A * W;
        if (bias)
            for (int r = 0; r < batch; ++r)
                for (int c = 0; c < wout; ++c)
                    out[static_cast<std::size_t>(r) * wout + c] += bias->values()[static_cast<std::size_t>(c)];
    };

    if (!is_kan()) {
        const Mlp& m = mlp();
        std::vector<double> next;
        for (std::size_t i = 0; i < m.weights().size(); ++i) {
            apply_linear(m.weights()[i], &m.biases()[i], cur, next);
            if (i + 1 < m.weights().size()) {
                if (m.config().activation == Activation::Mish)
                    for (auto& v : next) v = v * std::tanh(ad::stable_softplus(v));
                else
                    for (auto& v : next) v = v * ad::stable_sigmoid(v);
            }
            cur.swap(next);
            width = m.weights()[i].cols();
        }
        (void)width;
        return cur;
    }

    const Kan& k = kan();
    const int nb = k.config().grid_size + k.config().degree;
    const int d = k.config().degree;
    std::vector<double> silu_buf, out, coeff_eff;
    for (const auto& layer : k.layers()) {
        const int p_in = layer.base_weight.rows();
        const int p_out = layer.base_weight.cols();

        silu_buf.resize(cur.size());
        {
            Eigen::Map<const Eigen::ArrayXd> xa(cur.data(), static_cast<Eigen::Index>(cur.size()));
            Eigen::Map<Eigen::ArrayXd> sa(silu_buf.data(), static_cast<Eigen::Index>(cur.size()));
            sa = xa / (1.0 + (-xa).exp());
        }
        apply_linear(layer.base_weight, nullptr, silu_buf, out);

        const std::vector<double>* coeff = &layer.spline_coeff.values();
        if (layer.spline_scale.defined()) {
            coeff_eff = layer.spline_coeff.values();
            for (int i = 0; i < p_in; ++i)
                for (int r = 0; r < nb; ++r)
                    for (int j = 0; j < p_out; ++j)
                        coeff_eff[(static_cast<std::size_t>(i) * nb + r) * p_out + j] *=
                            layer.spline_scale.values()[static_cast<std::size_t>(i) * p_out + j];
            coeff = &coeff_eff;
        }

        const double* cw = coeff->data();
        const double lo = layer.grid->lo();
        const double hi = layer.grid->hi();
        const int g_spans = layer.grid->num_intervals();
        const double step = (hi - lo) / g_spans;
        const int last_span = g_spans - 1;

        const HornerFn horner = horner_for_degree(d);
        if (horner && batch >= 64) {
            // Piecewise-polynomial form: on a uniform grid every span shares
            // the same d+1 cardinal piece polynomials, so each edge spline
            // collapses to one degree-d Horner evaluation per span. The
            // coefficient blocks are built once per layer.
            const double* pr = layer.grid->cardinal_piece().data();
            std::vector<double> pp(static_cast<std::size_t>(p_in) * g_spans * (d + 1) * p_out, 0.0);
            const double inv_step = 1.0 / step;
            for (int p = 0; p < p_in; ++p) {
                for (int span = 0; span < g_spans; ++span) {
                    double* blk = pp.data() +
                                  (static_cast<std::size_t>(p) * g_spans + span) * (d + 1) * p_out;
                    for (int r = 0; r <= d; ++r) {
                        const double* crow =
                            cw + (static_cast<std::size_t>(p) * nb + span + r) * p_out;
                        const double* prr = pr + static_cast<std::size_t>(r) * (d + 1);
                        for (int kk = 0; kk <= d; ++kk) {
                            const double w = prr[kk];
                            if (w == 0.0) continue;
                            double* dst = blk + static_cast<std::size_t>(kk) * p_out;
                            for (int q = 0; q < p_out; ++q) dst[q] += w * crow[q];
                        }
                    }
                }
            }
            constexpr int kRowTile = 256;
            const std::size_t col_block = static_cast<std::size_t>(g_spans) * (d + 1) * p_out;
            for (int begin = 0; begin < batch; begin += kRowTile) {
                const int rows = std::min(kRowTile, batch - begin);
                for (int p = 0; p < p_in; ++p)
                    horner(cur.data() + static_cast<std::size_t>(begin) * p_in + p, p_in, rows, lo,
                           hi, inv_step, last_span, pp.data() + static_cast<std::size_t>(p) * col_block,
                           p_out, out.data() + static_cast<std::size_t>(begin) * p_out);
            }
            cur.swap(out);
            continue;
        }

        // Fallback: only d+1 bases are alive per scalar, so contract them
        // against the matching coefficient rows instead of materializing
        // the dense (batch x p_in*nb) basis matrix. The Cox-de Boor
        // recursion runs column-wise over row tiles small enough to keep
        // the level scratch in cache.
        const ContractFn contract = contract_for_degree(d);

        constexpr int kTile = 128;
        std::vector<double> ucol(kTile);
        std::vector<int> firsts(kTile);
        std::vector<double> nlev(static_cast<std::size_t>(d + 1) * kTile);
        for (int begin = 0; begin < batch; begin += kTile) {
            const int tile = std::min(kTile, batch - begin);
            for (int p = 0; p < p_in; ++p) {
                const double* __restrict__ xs = cur.data() + static_cast<std::size_t>(begin) * p_in;
                for (int i = 0; i < tile; ++i) {
                    double x = xs[static_cast<std::size_t>(i) * p_in + p];
                    x = std::min(std::max(x, lo), hi);
                    int span = static_cast<int>((x - lo) / step);
                    span = std::min(std::max(span, 0), last_span);
                    firsts[static_cast<std::size_t>(i)] = span;
                    ucol[static_cast<std::size_t>(i)] = x - (lo + span * step);
                    nlev[static_cast<std::size_t>(i)] = 1.0;
                }
                for (int j = 1; j <= d; ++j) {
                    const double inv = 1.0 / (j * step);
                    // row j carries the running `saved` term of the recursion
                    double* __restrict__ njrow = nlev.data() + static_cast<std::size_t>(j) * tile;
                    const double* __restrict__ uc = ucol.data();
                    for (int r = 0; r < j; ++r) {
                        double* __restrict__ nrow = nlev.data() + static_cast<std::size_t>(r) * tile;
                        const double roff = r * step + step;
                        const double loff = (j - r - 1) * step;
                        if (r == 0) {
                            for (int i = 0; i < tile; ++i) {
                                const double tmp = nrow[i] * inv;
                                nrow[i] = (roff - uc[i]) * tmp;
                                njrow[i] = (loff + uc[i]) * tmp;
                            }
                        } else {
                            for (int i = 0; i < tile; ++i) {
                                const double tmp = nrow[i] * inv;
                                nrow[i] = njrow[i] + (roff - uc[i]) * tmp;
                                njrow[i] = (loff + uc[i]) * tmp;
                            }
                        }
                    }
                }
                const double* cw_col = cw + static_cast<std::size_t>(p) * nb * p_out;
                double* out_tile = out.data() + static_cast<std::size_t>(begin) * p_out;
                if (contract)
                    contract(nlev.data(), firsts.data(), cw_col, out_tile, tile, p_out, p_out);
                else
                    contract_generic(nlev.data(), firsts.data(), cw_col, out_tile, tile, p_out,
                                     p_out, d);
            }
        }
        cur.swap(out);
    }
    return cur;
}

Network Network::clone() const {
    if (!defined()) return Network();
    auto deep = [](ad::Tensor& t) {
        if (!t.defined()) return;
        ad::Tensor fresh = ad::Tensor::from(t.shape(), t.values());
        fresh.set_requires_grad(t.requires_grad());
        t = fresh;
    };
    if (is_kan()) {
        Kan copy = kan(); // copies still share parameter storage
        for (auto& layer : copy.layers()) {
            deep(layer.base_weight);
            deep(layer.spline_coeff);
            deep(layer.spline_scale);
        }
        return Network(std::move(copy));
    }
    Mlp copy = mlp();
    for (auto& t : copy.weights()) deep(t);
    for (auto& t : copy.biases()) deep(t);
    return Network(std::move(copy));
}

namespace {

json transform_to_json(const data::ColumnTransform& t) {
    return json{{"log", t.log_scale}, {"eps", t.eps}, {"min", t.min}, {"max", t.max}};
}

data::ColumnTransform transform_from_json(const json& j) {
    data::ColumnTransform t;
    t.log_scale = j.at("log").get<bool>();
    t.eps = j.at("eps").get<double>();
    t.min = j.at("min").get<double>();
    t.max = j.at("max").get<double>();
    return t;
}

json preprocess_to_json(const data::Preprocess& p) {
    json in = json::array(), out = json::array();
    for (const auto& c : p.input_cols) in.push_back(transform_to_json(c));
    for (const auto& c : p.output_cols) out.push_back(transform_to_json(c));
    return json{{"input", in},
                {"output", out},
                {"input_names", p.input_names},
                {"output_names", p.output_names}};
}

data::Preprocess preprocess_from_json(const json& j) {
    data::Preprocess p;
    for (const auto& c : j.at("input")) p.input_cols.push_back(transform_from_json(c));
    for (const auto& c : j.at("output")) p.output_cols.push_back(transform_from_json(c));
    p.input_names = j.at("input_names").get<std::vector<std::string>>();
    p.output_names = j.at("output_names").get<std::vector<std::string>>();
    return p;
}

void put_param(json& params, const std::string& name, const ad::Tensor& t) {
    params[name] = t.values();
}

std::vector<double> take_param(const json& params, const std::string& name, std::size_t numel) {
    if (!params.contains(name)) throw contract_error("checkpoint: missing parameter section " + name);
    auto v = params.at(name).get<std::vector<double>>();
    if (v.size() != numel)
        throw contract_error("checkpoint: parameter " + name + " has " + std::to_string(v.size()) +
                             " values, config expects " + std::to_string(numel));
    return v;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["format"] = "kaneq-checkpoint";
    j["version"] = 1;

    json arch;
    json params;
    if (ckpt.net.is_kan()) {
        const auto& cfg = ckpt.net.kan().config();
        arch = {{"kind", "kan"},
                {"input_dim", cfg.input_dim},
                {"output_dim", cfg.output_dim},
                {"hidden", cfg.hidden},
                {"degree", cfg.degree},
                {"grid_size", cfg.grid_size},
                {"standalone_spline_scale", cfg.standalone_spline_scale},
                {"domain", {cfg.domain_lo, cfg.domain_hi}}};
        const auto& layers = ckpt.net.kan().layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string pre = "layer" + std::to_string(i) + ".";
            put_param(params, pre + "base_weight", layers[i].base_weight);
            put_param(params, pre + "spline_coeff", layers[i].spline_coeff);
            if (layers[i].spline_scale.defined())
                put_param(params, pre + "spline_scale", layers[i].spline_scale);
        }
    } else {
        const auto& cfg = ckpt.net.mlp().config();
        arch = {{"kind", "mlp"},
                {"input_dim", cfg.input_dim},
                {"output_dim", cfg.output_dim},
                {"hidden", cfg.hidden},
                {"activation", activation_name(cfg.activation)}};
        const auto& net = ckpt.net.mlp();
        for (std::size_t i = 0; i < net.weights().size(); ++i) {
            const std::string pre = "layer" + std::to_string(i) + ".";
            put_param(params, pre + "weight", net.weights()[i]);
            put_param(params, pre + "bias", net.biases()[i]);
        }
    }
    j["arch"] = arch;
    j["params"] = params;
    j["preprocessing"] = preprocess_to_json(ckpt.preprocess);
    j["metadata"] = {{"seed", ckpt.meta.seed},
                     {"epochs", ckpt.meta.epochs},
                     {"dataset_hash", ckpt.meta.dataset_hash}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    out << j.dump(1, '\t') << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw io_error("checkpoint parse error in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "kaneq-checkpoint")
        throw io_error("not a kaneq checkpoint: " + path);
    if (j.value("version", -1) != 1)
        throw io_error("unsupported checkpoint version in " + path);

    const json& arch = j.at("arch");
    const json& params = j.at("params");
    Checkpoint ckpt;

    const std::string kind = arch.at("kind").get<std::string>();
    if (kind == "kan") {
        KanConfig cfg;
        cfg.input_dim = arch.at("input_dim").get<int>();
        cfg.output_dim = arch.at("output_dim").get<int>();
        cfg.hidden = arch.at("hidden").get<std::vector<int>>();
        cfg.degree = arch.at("degree").get<int>();
        cfg.grid_size = arch.at("grid_size").get<int>();
        cfg.standalone_spline_scale = arch.at("standalone_spline_scale").get<bool>();
        cfg.domain_lo = arch.at("domain")[0].get<double>();
        cfg.domain_hi = arch.at("domain")[1].get<double>();
        Kan net(cfg, 0);
        auto& layers = net.layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string pre = "layer" + std::to_string(i) + ".";
            layers[i].base_weight.values() =
                take_param(params, pre + "base_weight", layers[i].base_weight.numel());
            layers[i].spline_coeff.values() =
                take_param(params, pre + "spline_coeff", layers[i].spline_coeff.numel());
            if (layers[i].spline_scale.defined())
                layers[i].spline_scale.values() =
                    take_param(params, pre + "spline_scale", layers[i].spline_scale.numel());
        }
        ckpt.net = Network(std::move(net));
    } else if (kind == "mlp") {
        MlpConfig cfg;
        cfg.input_dim = arch.at("input_dim").get<int>();
        cfg.output_dim = arch.at("output_dim").get<int>();
        cfg.hidden = arch.at("hidden").get<std::vector<int>>();
        cfg.activation = activation_from_name(arch.at("activation").get<std::string>());
        Mlp net(cfg, 0);
        auto& weights = net.weights();
        auto& biases = net.biases();
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const std::string pre = "layer" + std::to_string(i) + ".";
            weights[i].values() = take_param(params, pre + "weight", weights[i].numel());
            biases[i].values() = take_param(params, pre + "bias", biases[i].numel());
        }
        ckpt.net = Network(std::move(net));
    } else {
        throw io_error("unknown architecture kind in checkpoint: " + kind);
    }

    ckpt.preprocess = preprocess_from_json(j.at("preprocessing"));
    const json& meta = j.at("metadata");
    ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.meta.epochs = meta.at("epochs").get<int>();
    ckpt.meta.dataset_hash = meta.at("dataset_hash").get<std::string>();
    return ckpt;
}

} // namespace kaneq::nn
