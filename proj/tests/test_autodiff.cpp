#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vqclust/adam.hpp"
#include "vqclust/checkpoint.hpp"
#include "vqclust/graph.hpp"
#include "vqclust/rng.hpp"

using namespace vqclust;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

// loss builder for a small ReLU MLP ending in a sum-of-squares reduction
NodeId mlp_loss(Graph& g, const std::vector<NodeId>& params, const Tensor& x,
                std::size_t layers) {
    NodeId h = g.input(x);
    for (std::size_t l = 0; l < layers; ++l) {
        h = g.add(g.matmul(h, params[2 * l]), params[2 * l + 1]);
        if (l + 1 < layers) h = g.relu(h);
    }
    return g.sum(g.mul(h, h));
}

}  // namespace

TEST_CASE("forward: identity linear layer") {
    Graph g;
    Tensor x = Tensor::matrix(2, 2, {1.0, -2.0, 3.0, 4.0});
    Tensor w = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    Tensor b = Tensor::vector1d({0.0, 0.0});
    NodeId y = g.add(g.matmul(g.input(x), g.param(w)), g.param(b));
    CHECK(g.value(y).data == x.data);
}

TEST_CASE("forward: relu clamps negatives") {
    Graph g;
    NodeId y = g.relu(g.input(Tensor::vector1d({-1.0, 2.0})));
    CHECK(g.value(y).data == std::vector<double>{0.0, 2.0});
}

TEST_CASE("forward: two-layer net matches hand-multiplied matrices") {
    Graph g;
    Tensor x = Tensor::matrix(1, 2, {1.0, 2.0});
    Tensor w1 = Tensor::matrix(2, 2, {1.0, -1.0, 0.5, 2.0});
    Tensor b1 = Tensor::vector1d({0.0, 1.0});
    Tensor w2 = Tensor::matrix(2, 1, {3.0, -1.0});
    Tensor b2 = Tensor::vector1d({0.25});
    NodeId h = g.relu(g.add(g.matmul(g.input(x), g.param(w1)), g.param(b1)));
    NodeId y = g.add(g.matmul(h, g.param(w2)), g.param(b2));
    // hand: x*w1 = (2, 3); +b1 = (2, 4); relu = (2,4); *w2 = 6 - 4 = 2; +0.25
    CHECK(g.value(h).data == std::vector<double>{2.0, 4.0});
    CHECK(g.value(y).data[0] == doctest::Approx(2.25).epsilon(1e-15));
}

TEST_CASE("forward: shape mismatch names the node") {
    Graph g;
    NodeId a = g.input(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
    NodeId b = g.input(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
    CHECK_THROWS_AS(g.matmul(a, b), std::invalid_argument);
}

TEST_CASE("backward: d(x^2)/dx at 3 is 6") {
    Graph g;
    NodeId x = g.param(Tensor::scalar(3.0));
    NodeId loss = g.sum(g.mul(x, x));
    g.backward(loss);
    CHECK(g.grad(x).data[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward: d(sum(Wx))/dW broadcasts x") {
    Graph g;
    Tensor x = Tensor::matrix(1, 3, {2.0, -1.0, 4.0});
    NodeId w = g.param(Tensor::matrix(3, 2, std::vector<double>(6, 0.5)));
    NodeId loss = g.sum(g.matmul(g.input(x), w));
    g.backward(loss);
    // dL/dW[i,j] = x[i]
    const Tensor& gw = g.grad(w);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(gw.at(i, j) == x.data[i]);
}

TEST_CASE("backward: unreachable parameter gets zero gradient") {
    Graph g;
    NodeId x = g.param(Tensor::scalar(3.0));
    NodeId unused = g.param(Tensor::vector1d({1.0, 2.0}));
    NodeId loss = g.sum(g.mul(x, x));
    g.backward(loss);
    CHECK(g.grad(unused).data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward: non-scalar loss rejected") {
    Graph g;
    NodeId x = g.param(Tensor::vector1d({1.0, 2.0}));
    CHECK_THROWS_AS(g.backward(x), std::invalid_argument);
}

TEST_CASE("grad_check: random 2-layer mlp under 1e-4") {
    Rng rng(42);
    std::vector<Tensor> params = {
        random_tensor({5, 6}, rng, 0.5), random_tensor({6}, rng, 0.1),
        random_tensor({6, 3}, rng, 0.5), random_tensor({3}, rng, 0.1)};
    Tensor x = random_tensor({8, 5}, rng);
    double err = grad_check(
        [&](Graph& g, const std::vector<NodeId>& p) { return mlp_loss(g, p, x, 2); }, params);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check: linear model under 1e-7") {
    Rng rng(7);
    std::vector<Tensor> params = {random_tensor({4, 2}, rng), random_tensor({2}, rng)};
    Tensor x = random_tensor({3, 4}, rng);
    double err = grad_check(
        [&](Graph& g, const std::vector<NodeId>& p) {
            return g.sum(g.add(g.matmul(g.input(x), p[0]), p[1]));
        },
        params);
    CHECK(err < 1e-7);
}

TEST_CASE("grad_check: zero net, zero input is exactly zero") {
    std::vector<Tensor> params = {Tensor({3, 3}, 0.0), Tensor({3}, 0.0)};
    Tensor x({2, 3}, 0.0);
    double err = grad_check(
        [&](Graph& g, const std::vector<NodeId>& p) { return mlp_loss(g, p, x, 1); }, params);
    CHECK(err == 0.0);
}

TEST_CASE("grad_check covers every op kind") {
    Rng rng(1234);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor({3, 4}, rng);
        std::vector<Tensor> params = {random_tensor({4, 4}, rng, 0.4),
                                      random_tensor({4}, rng, 0.2),
                                      random_tensor({3, 2}, rng, 0.3)};
        double err = grad_check(
            [&](Graph& g, const std::vector<NodeId>& p) {
                NodeId h = g.add(g.matmul(g.input(x), p[0]), p[1]);
                NodeId s = g.sigmoid(h);
                NodeId e = g.exp(g.scale(h, 0.1));
                NodeId mixed = g.mul(s, e);
                NodeId lg = g.log(g.add_const(g.mul(mixed, mixed), 1.0));
                NodeId mu = g.slice_cols(p[2], 0, 1);
                NodeId lv = g.slice_cols(p[2], 1, 1);
                NodeId kl = g.kl_diag_gaussian(mu, lv);
                NodeId st = g.straight_through(lg, g.stop_gradient(lg));
                return g.add(g.add(g.mean(st), kl), g.mse(s, e));
            },
            params);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("backward linearity: grad of sum of losses equals sum of grads") {
    Rng rng(9);
    Tensor w0 = random_tensor({3, 3}, rng);
    Tensor x = random_tensor({2, 3}, rng);

    auto grads_for = [&](int which) {
        Graph g;
        NodeId w = g.param(w0);
        NodeId y = g.matmul(g.input(x), w);
        NodeId l1 = g.sum(g.mul(y, y));
        NodeId l2 = g.mean(g.sigmoid(y));
        NodeId loss = which == 0 ? l1 : (which == 1 ? l2 : g.add(l1, l2));
        g.backward(loss);
        return g.grad(w).data;
    };
    auto g1 = grads_for(0), g2 = grads_for(1), gsum = grads_for(2);
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(std::fabs(gsum[i] - (g1[i] + g2[i])) < 1e-10);
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
    Rng rng(100);
    Tensor x = random_tensor({4, 5}, rng);
    Tensor w = random_tensor({5, 4}, rng);
    auto run = [&]() {
        Graph g;
        NodeId y = g.sigmoid(g.matmul(g.input(x), g.param(w)));
        return g.value(y).data;
    };
    CHECK(run() == run());
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
    std::vector<Tensor> params = {Tensor::vector1d({1.0, -2.0})};
    std::vector<Tensor> grads = {Tensor({2}, 0.0)};
    AdamState st;
    st.init(params);
    adam_step(params, grads, st);
    CHECK(params[0].data == std::vector<double>{1.0, -2.0});
    CHECK(st.step == 1);
}

TEST_CASE("adam: first step moves by about lr") {
    std::vector<Tensor> params = {Tensor::scalar(0.5)};
    std::vector<Tensor> grads = {Tensor::scalar(1.0)};
    AdamState st;
    st.init(params);
    adam_step(params, grads, st);
    // bias-corrected first step: lr * 1 / (1 + eps)
    CHECK(std::fabs((0.5 - params[0].data[0]) - 1e-3) < 1e-10);
}

TEST_CASE("adam: identical tensors with identical grads update identically") {
    Rng rng(55);
    Tensor t = random_tensor({3, 2}, rng);
    Tensor gr = random_tensor({3, 2}, rng);
    std::vector<Tensor> params = {t, t};
    std::vector<Tensor> grads = {gr, gr};
    AdamState st;
    st.init(params);
    for (int i = 0; i < 5; ++i) adam_step(params, grads, st);
    CHECK(params[0].data == params[1].data);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(77);
    Checkpoint ck;
    ck.seed = 123456789ULL;
    ck.step = 42;
    ck.add_meta("kind", "vqvae");
    ck.add_meta("note", "value with spaces");
    ck.add_tensor("w", random_tensor({7, 3}, rng));
    ck.add_tensor("b", random_tensor({3}, rng, 1e-12));
    // throw in values that stress text round-trips
    Tensor nasty = Tensor::vector1d({0.1, 1.0 / 3.0, -0.0, 1e-300, 6.02e23});
    ck.add_tensor("nasty", nasty);

    std::filesystem::create_directories("test_tmp");
    ck.save("test_tmp/ck.txt");
    Checkpoint back = Checkpoint::load("test_tmp/ck.txt");
    CHECK(back.seed == ck.seed);
    CHECK(back.step == ck.step);
    CHECK(back.meta_value("kind") == "vqvae");
    CHECK(back.meta_value("note") == "value with spaces");
    REQUIRE(back.tensors.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(back.tensors[t].first == ck.tensors[t].first);
        CHECK(back.tensors[t].second.shape == ck.tensors[t].second.shape);
        CHECK(back.tensors[t].second.data == ck.tensors[t].second.data);
    }

    // and the file itself is stable across re-saves
    back.save("test_tmp/ck2.txt");
    std::ifstream f1("test_tmp/ck.txt"), f2("test_tmp/ck2.txt");
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
}
