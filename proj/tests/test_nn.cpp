#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kaneq/nn.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace kaneq;
using namespace kaneq::nn;

namespace {

ad::Tensor random_batch(int rows, int cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    ad::Tensor t = ad::Tensor::zeros({rows, cols});
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

} // namespace

TEST_CASE("parameter counts reproduce the published figures") {
    MlpConfig mlp;
    mlp.input_dim = 3;
    mlp.output_dim = 18;
    mlp.hidden.assign(5, 192);
    CHECK(param_count(mlp) == 152466);

    KanConfig kan;
    kan.input_dim = 3;
    kan.output_dim = 18;
    kan.hidden.assign(4, 28);
    kan.degree = 7;
    kan.grid_size = 10;
    CHECK(param_count(kan) == 52920);

    MlpConfig tiny;
    tiny.input_dim = 3;
    tiny.output_dim = 18;
    CHECK(param_count(tiny) == 72);
}

TEST_CASE("param_count equals allocated trainable scalars across a config grid") {
    for (int layers = 0; layers <= 3; ++layers)
        for (int width : {1, 3, 7}) {
            MlpConfig mc;
            mc.input_dim = 2;
            mc.output_dim = 3;
            mc.hidden.assign(static_cast<std::size_t>(layers), width);
            Network mlp = Network::make_mlp(mc, 1);
            long actual = 0;
            for (const auto& p : mlp.params()) actual += static_cast<long>(p.numel());
            CHECK(actual == param_count(mc));

            for (bool scale : {false, true}) {
                KanConfig kc;
                kc.input_dim = 2;
                kc.output_dim = 3;
                kc.hidden.assign(static_cast<std::size_t>(layers), width);
                kc.degree = 3;
                kc.grid_size = 5;
                kc.standalone_spline_scale = scale;
                Network kan = Network::make_kan(kc, 1);
                long kactual = 0;
                for (const auto& p : kan.params()) kactual += static_cast<long>(p.numel());
                CHECK(kactual == param_count(kc));
            }
        }
}

TEST_CASE("mlp forward identity and zero cases") {
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 3;
    Mlp net(cfg, 7);
    for (auto& w : net.weights()) std::fill(w.values().begin(), w.values().end(), 0.0);
    for (auto& b : net.biases()) std::fill(b.values().begin(), b.values().end(), 0.0);

    ad::Graph g;
    ad::Tensor x = random_batch(4, 3, 2);
    auto zero = net.forward(g, x);
    for (double v : zero.values()) CHECK(v == 0.0);

    // identity weights
    auto& w = net.weights()[0];
    for (int i = 0; i < 3; ++i) w.values()[static_cast<std::size_t>(i) * 3 + i] = 1.0;
    auto ident = net.forward(g, x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(ident.values()[i] == x.values()[i]);
}

TEST_CASE("mlp forward equals hand-composed primitives bit for bit") {
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 2;
    cfg.hidden = {5};
    cfg.activation = Activation::Mish;
    Mlp net(cfg, 42);

    ad::Tensor x = random_batch(6, 3, 9);
    ad::Graph g;
    const auto got = net.forward(g, x).values();

    ad::Graph h;
    ad::Tensor manual =
        h.add_bias(h.matmul(h.mish(h.add_bias(h.matmul(x, net.weights()[0]), net.biases()[0])),
                            net.weights()[1]),
                   net.biases()[1]);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == manual.values()[i]);
}

TEST_CASE("kan layer equals the per-edge scalar formula") {
    KanConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 4;
    cfg.degree = 3;
    cfg.grid_size = 6;
    Kan net(cfg, 11);

    ad::Tensor x = random_batch(5, 3, 13);
    ad::Graph g;
    const auto got = net.forward(g, x).values();

    // brute-force: out[b][q] = sum_p w_f[p][q] silu(x) + sum_j c[p][j][q] B_j(x)
    const auto& layer = net.layers()[0];
    const int nb = layer.grid->num_basis();
    for (int b = 0; b < 5; ++b) {
        for (int q = 0; q < 4; ++q) {
            double acc = 0.0;
            for (int p = 0; p < 3; ++p) {
                const double xv = x.values()[static_cast<std::size_t>(b) * 3 + p];
                const double base = xv * ad::stable_sigmoid(xv);
                acc += layer.base_weight.values()[static_cast<std::size_t>(p) * 4 + q] * base;
                const auto bs = layer.grid->basis_eval(xv);
                for (int j = 0; j < nb; ++j)
                    acc += bs[static_cast<std::size_t>(j)] *
                           layer.spline_coeff.values()[(static_cast<std::size_t>(p) * nb + j) * 4 + q];
            }
            CHECK(std::abs(acc - got[static_cast<std::size_t>(b) * 4 + q]) <= 1e-12);
        }
    }
}

TEST_CASE("kan reduces to summed silu when splines vanish") {
    KanConfig cfg;
    cfg.input_dim = 2;
    cfg.output_dim = 1;
    cfg.degree = 3;
    cfg.grid_size = 5;
    Kan net(cfg, 3);
    auto& layer = net.layers()[0];
    std::fill(layer.spline_coeff.values().begin(), layer.spline_coeff.values().end(), 0.0);
    std::fill(layer.base_weight.values().begin(), layer.base_weight.values().end(), 1.0);

    ad::Tensor x = random_batch(7, 2, 5);
    ad::Graph g;
    const auto out = net.forward(g, x).values();
    for (int b = 0; b < 7; ++b) {
        double expect = 0.0;
        for (int p = 0; p < 2; ++p) {
            const double xv = x.values()[static_cast<std::size_t>(b) * 2 + p];
            expect += xv * ad::stable_sigmoid(xv);
        }
        CHECK(std::abs(out[static_cast<std::size_t>(b)] - expect) <= 1e-14);
    }
}

TEST_CASE("constant spline via partition of unity") {
    KanConfig cfg;
    cfg.input_dim = 1;
    cfg.output_dim = 1;
    cfg.degree = 4;
    cfg.grid_size = 8;
    Kan net(cfg, 3);
    auto& layer = net.layers()[0];
    std::fill(layer.base_weight.values().begin(), layer.base_weight.values().end(), 0.0);
    const double c = 0.7;
    std::fill(layer.spline_coeff.values().begin(), layer.spline_coeff.values().end(), c);

    ad::Tensor x = random_batch(9, 1, 19);
    ad::Graph g;
    const auto out = net.forward(g, x).values();
    for (double v : out) CHECK(std::abs(v - c) <= 1e-12);
}

TEST_CASE("infer matches tape forward") {
    for (bool use_kan : {false, true}) {
        Network net;
        if (use_kan) {
            KanConfig cfg;
            cfg.input_dim = 3;
            cfg.output_dim = 2;
            cfg.hidden = {6, 4};
            cfg.degree = 5;
            cfg.grid_size = 7;
            net = Network::make_kan(cfg, 21);
        } else {
            MlpConfig cfg;
            cfg.input_dim = 3;
            cfg.output_dim = 2;
            cfg.hidden = {6, 4};
            net = Network::make_mlp(cfg, 21);
        }
        ad::Tensor x = random_batch(11, 3, 31);
        ad::Graph g;
        const auto tape = net.forward(g, x).values();
        const auto fast = net.infer(x.values(), 11);
        REQUIRE(tape.size() == fast.size());
        for (std::size_t i = 0; i < tape.size(); ++i)
            CHECK(std::abs(tape[i] - fast[i]) <= 1e-13);
    }
}

TEST_CASE("forward is batch permutation equivariant") {
    KanConfig cfg;
    cfg.input_dim = 2;
    cfg.output_dim = 2;
    cfg.hidden = {4};
    Network net = Network::make_kan(cfg, 77);
    ad::Tensor x = random_batch(6, 2, 3);
    ad::Tensor xr = ad::Tensor::zeros({6, 2});
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 2; ++c)
            xr.values()[static_cast<std::size_t>(5 - r) * 2 + c] =
                x.values()[static_cast<std::size_t>(r) * 2 + c];
    ad::Graph g;
    const auto a = net.forward(g, x).values();
    const auto b = net.forward(g, xr).values();
    // matmul kernels treat remainder rows differently, so equivariance is
    // checked to near machine precision rather than bitwise
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 2; ++c) {
            const double av = a[static_cast<std::size_t>(r) * 2 + c];
            const double bv = b[static_cast<std::size_t>(5 - r) * 2 + c];
            CHECK(std::abs(av - bv) <= 1e-13 * std::max(1.0, std::abs(av)));
        }
}

TEST_CASE("checkpoint round trip reproduces outputs bit for bit") {
    KanConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 2;
    cfg.hidden = {5};
    cfg.degree = 4;
    cfg.grid_size = 6;
    Checkpoint ckpt;
    ckpt.net = Network::make_kan(cfg, 55);
    ckpt.preprocess.input_cols.assign(3, {});
    ckpt.preprocess.output_cols.assign(2, {true, 1e-12, -3.0, 2.0});
    ckpt.preprocess.input_names = {"a", "b", "c"};
    ckpt.preprocess.output_names = {"u", "v"};
    ckpt.meta.seed = 55;
    ckpt.meta.epochs = 12;
    ckpt.meta.dataset_hash = "abc123";

    save_checkpoint(ckpt, "test_ckpt.json");
    const Checkpoint back = load_checkpoint("test_ckpt.json");
    CHECK(back.meta.epochs == 12);
    CHECK(back.meta.dataset_hash == "abc123");
    CHECK(back.preprocess.output_cols[0].log_scale);

    ad::Tensor x = random_batch(100, 3, 101);
    const auto a = ckpt.net.infer(x.values(), 100);
    const auto b = back.net.infer(x.values(), 100);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("checkpoint errors") {
    // truncated file
    {
        std::FILE* f = std::fopen("test_trunc.json", "wb");
        std::fputs("{\"format\": \"kaneq-checkpoint\", \"ver", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint("test_trunc.json"), io_error);
    CHECK_THROWS_AS(load_checkpoint("no_such_file.json"), io_error);

    // shape conflict: config says 5 hidden, params hold 4
    MlpConfig cfg;
    cfg.input_dim = 2;
    cfg.output_dim = 1;
    cfg.hidden = {4};
    Checkpoint ckpt;
    ckpt.net = Network::make_mlp(cfg, 1);
    ckpt.preprocess.input_names = {"x", "y"};
    ckpt.preprocess.output_names = {"z"};
    ckpt.preprocess.input_cols.assign(2, {});
    ckpt.preprocess.output_cols.assign(1, {});
    save_checkpoint(ckpt, "test_shape.json");
    // corrupt the stored hidden widths
    {
        std::FILE* f = std::fopen("test_shape.json", "rb");
        std::fseek(f, 0, SEEK_END);
        const long n = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::string s(static_cast<std::size_t>(n), '\0');
        const size_t got = std::fread(s.data(), 1, static_cast<std::size_t>(n), f);
        std::fclose(f);
        s.resize(got);
        auto pos = s.find("\"input_dim\": 2");
        REQUIRE(pos != std::string::npos);
        s.replace(pos, 14, "\"input_dim\": 3");
        f = std::fopen("test_shape.json", "wb");
        std::fwrite(s.data(), 1, s.size(), f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint("test_shape.json"), contract_error);
}

TEST_CASE("finite outputs on the scaled input cube") {
    KanConfig kc;
    kc.input_dim = 4;
    kc.output_dim = 3;
    kc.hidden = {8, 8};
    kc.degree = 7;
    kc.grid_size = 10;
    Network kan = Network::make_kan(kc, 2);
    ad::Tensor x = random_batch(64, 4, 77);
    ad::Graph g;
    CHECK(all_finite(kan.forward(g, x).values()));
}
