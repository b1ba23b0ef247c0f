#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kaneq/tensor.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace kaneq;
using ad::Graph;
using ad::Tensor;

namespace {

// Central finite-difference gradient of a scalar-valued forward function.
std::vector<double> fd_gradient(Tensor& param, const std::function<double()>& forward,
                                double h = 1e-6) {
    std::vector<double> grad(param.numel());
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double keep = param.values()[i];
        param.values()[i] = keep + h;
        const double up = forward();
        param.values()[i] = keep - h;
        const double dn = forward();
        param.values()[i] = keep;
        grad[i] = (up - dn) / (2.0 * h);
    }
    return grad;
}

// Hybrid tolerance: central differences carry ~eps*|f|/h absolute noise
// (about 1e-10 here), so tiny gradient entries are compared absolutely.
void check_close(const std::vector<double>& a, const std::vector<double>& b, double rel) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
        const double diff = std::abs(a[i] - b[i]);
        CHECK((diff <= 1e-9 || diff / scale <= rel));
    }
}

} // namespace

TEST_CASE("activation special values") {
    Graph g;
    Tensor x = Tensor::from({3}, {0.0, 1.0, -1.0});
    const auto silu = g.silu(x).values();
    CHECK(silu[0] == 0.0);
    CHECK(std::abs(silu[1] - 1.0 / (1.0 + std::exp(-1.0))) <= 1e-15);
    const auto mish = g.mish(x).values();
    CHECK(mish[0] == 0.0);
}

TEST_CASE("matmul identity") {
    Graph g;
    Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor x = Tensor::from({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    const auto y = g.matmul(eye, x);
    for (std::size_t i = 0; i < 12; ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("shape errors name both shapes") {
    Graph g;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 2});
    CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("(2,3)"), dimension_error);
    CHECK_THROWS_AS(g.matmul(a, a), dimension_error);
    CHECK_THROWS_AS(g.log(Tensor::from({1}, {-1.0})), domain_error);
}

TEST_CASE("sum of squares gradient") {
    Graph g;
    Tensor x = Tensor::from({1}, {3.0}).set_requires_grad();
    Tensor loss = g.sum(g.mul(x, x));
    g.backward(loss);
    CHECK(std::abs(x.grad()[0] - 6.0) <= 1e-12);
}

TEST_CASE("constant loss yields zero grads") {
    Graph g;
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad();
    Tensor c = Tensor::scalar(5.0);
    Tensor loss = g.sum(c);
    g.backward(loss);
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("backward on non-scalar throws") {
    Graph g;
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad();
    Tensor y = g.mul(x, x);
    CHECK_THROWS_AS(g.backward(y), contract_error);
}

TEST_CASE("grads accumulate until zero_grad") {
    Graph g;
    Tensor x = Tensor::from({1}, {2.0}).set_requires_grad();
    Tensor loss = g.sum(g.mul(x, x));
    g.backward(loss);
    g.backward(loss);
    CHECK(std::abs(x.grad()[0] - 8.0) <= 1e-12);
    std::vector<Tensor> params = {x};
    ad::zero_grad(params);
    CHECK(x.grad()[0] == 0.0);
    ad::zero_grad(params); // idempotent
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("every primitive matches finite differences") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> dist(0.2, 1.5);

    auto random_tensor = [&](std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (auto& v : t.values()) v = dist(rng);
        t.set_requires_grad();
        return t;
    };

    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor({4, 3});
        Tensor b = random_tensor({4, 3});
        Tensor w = random_tensor({3, 2});
        Tensor bias = random_tensor({3});

        struct Case {
            const char* name;
            std::function<double()> forward;
            std::vector<Tensor*> params;
        };

        auto fwd = [&]() {
            Graph g;
            Tensor t1 = g.mul(g.add(a, b), g.sub(a, b));
            Tensor t2 = g.silu(g.add_bias(t1, bias));
            Tensor t3 = g.mish(g.matmul(t2, w));
            Tensor t4 = g.add(g.exp(g.scale(t3, 0.3)), g.log(g.exp(t3)));
            return g.mean(t4).item();
        };

        Graph g;
        Tensor t1 = g.mul(g.add(a, b), g.sub(a, b));
        Tensor t2 = g.silu(g.add_bias(t1, bias));
        Tensor t3 = g.mish(g.matmul(t2, w));
        Tensor t4 = g.add(g.exp(g.scale(t3, 0.3)), g.log(g.exp(t3)));
        Tensor loss = g.mean(t4);
        for (Tensor* p : {&a, &b, &w, &bias}) p->zero_grad();
        g.backward(loss);

        CHECK(std::abs(loss.item() - fwd()) <= 1e-14);
        for (Tensor* p : {&a, &b, &w, &bias}) check_close(p->grad(), fd_gradient(*p, fwd), 1e-6);
    }
}

TEST_CASE("spline basis op gradient matches finite differences") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    kaneq::spline::SplineGrid grid(5, 8);

    Tensor x = Tensor::zeros({6, 2});
    for (auto& v : x.values()) v = dist(rng);
    x.set_requires_grad();
    Tensor c = Tensor::zeros({2 * grid.num_basis(), 3});
    for (auto& v : c.values()) v = dist(rng);
    c.set_requires_grad();

    auto fwd = [&]() {
        Graph g;
        return g.mean(g.matmul(g.spline_basis(x, grid), c)).item();
    };

    Graph g;
    Tensor loss = g.mean(g.matmul(g.spline_basis(x, grid), c));
    x.zero_grad();
    c.zero_grad();
    g.backward(loss);
    check_close(x.grad(), fd_gradient(x, fwd), 1e-6);
    check_close(c.grad(), fd_gradient(c, fwd), 1e-6);
}

TEST_CASE("tile_rows forward and backward") {
    Graph g;
    Tensor s = Tensor::from({2, 2}, {1, 2, 3, 4}).set_requires_grad();
    Tensor t = g.tile_rows(s, 3);
    CHECK(t.shape() == std::vector<int>{6, 2});
    CHECK(t.values()[0] == 1);
    CHECK(t.values()[5] == 2);
    Tensor loss = g.sum(t);
    g.backward(loss);
    for (double v : s.grad()) CHECK(v == 3.0);
}

TEST_CASE("backward linearity") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor x = Tensor::zeros({5});
    for (auto& v : x.values()) v = dist(rng);
    x.set_requires_grad();

    auto grads_of = [&](double ca, double cb) {
        Graph g;
        Tensor l1 = g.mean(g.mul(x, x));
        Tensor l2 = g.sum(g.silu(x));
        Tensor loss = g.add(g.scale(l1, ca), g.scale(l2, cb));
        x.zero_grad();
        g.backward(loss);
        return x.grad();
    };

    const auto g10 = grads_of(1.0, 0.0);
    const auto g01 = grads_of(0.0, 1.0);
    const auto gab = grads_of(2.5, -1.25);
    for (std::size_t i = 0; i < g10.size(); ++i)
        CHECK(std::abs(gab[i] - (2.5 * g10[i] - 1.25 * g01[i])) <= 1e-12);
}

TEST_CASE("determinism of forward and backward") {
    auto run = [] {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        Tensor x = Tensor::zeros({8});
        for (auto& v : x.values()) v = dist(rng);
        x.set_requires_grad();
        Graph g;
        Tensor loss = g.mean(g.mish(x));
        g.backward(loss);
        auto out = x.grad();
        out.push_back(loss.item());
        return out;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
