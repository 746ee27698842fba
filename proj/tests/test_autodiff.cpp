#include <doctest.h>

#include <random>

#include "mcd/ops.hpp"
#include "mcd/optim.hpp"
#include "test_util.hpp"

using namespace mcd;
using mcd::test::check_grads;
using mcd::test::random_param;

TEST_CASE("matmul identity and hand arithmetic") {
    Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
    Tensor c = matmul(id, b);
    CHECK(std::vector<double>(c.values().begin(), c.values().end()) ==
          std::vector<double>{3, 4, 5, 6});

    Tensor a = Tensor::from({1, 2}, {1, 2});
    Tensor d = Tensor::from({2, 1}, {3, 4});
    CHECK(matmul(a, d).item() == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
    std::mt19937_64 rng(7);
    Tensor a = random_param({3, 4}, rng);
    Tensor b = random_param({4, 2}, rng);
    auto res = check_grads({a, b}, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });
    CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("conv2d padded-overlap counting on all-ones input") {
    Tensor x = Tensor::param({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor k = Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor y = conv2d(x, k);
    auto v = y.values();
    CHECK(v[4] == 9.0);  // center sees the full kernel
    CHECK(v[0] == 4.0);  // corners see a 2x2 overlap
    CHECK(v[2] == 4.0);
    CHECK(v[6] == 4.0);
    CHECK(v[8] == 4.0);
}

TEST_CASE("conv2d zero kernel gives zero output") {
    std::mt19937_64 rng(3);
    Tensor x = random_param({2, 2, 4, 4}, rng);
    Tensor k = Tensor::from({3, 2, 3, 3}, std::vector<double>(54, 0.0));
    Tensor y = conv2d(x, k);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d channel mismatch") {
    Tensor x = Tensor::from({1, 2, 4, 4}, std::vector<double>(32, 0.0));
    Tensor k = Tensor::from({1, 3, 3, 3}, std::vector<double>(27, 0.0));
    CHECK_THROWS_AS(conv2d(x, k), DimensionError);
}

TEST_CASE("conv2d gradient vs finite differences") {
    std::mt19937_64 rng(11);
    Tensor x = random_param({2, 2, 5, 5}, rng);
    Tensor k = random_param({3, 2, 3, 3}, rng);
    auto res = check_grads({x, k}, [&] { return sum(mul(conv2d(x, k), conv2d(x, k))); });
    CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("relu values and subgradient at 0") {
    Tensor x = Tensor::param({3}, {-1.0, 0.0, 2.0});
    Tensor y = relu(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == 0.0);
    CHECK(y.values()[2] == 2.0);
    backward(sum(y));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);  // subgradient 0 at x=0
    CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("avgpool2d of [[1,3],[5,7]] is 4") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 3, 5, 7});
    CHECK(avgpool2d(x).item() == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("elementwise and pooling ops pass finite differences") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x = random_param({2, 3, 4, 4}, rng);
        Tensor b = random_param({3}, rng);
        auto r1 = check_grads({x}, [&] { return sum(mul(relu(x), relu(x))); });
        CHECK(r1.max_rel_err <= 1e-6);
        auto r2 = check_grads({x}, [&] { return sum(mul(avgpool2d(x), avgpool2d(x))); });
        CHECK(r2.max_rel_err <= 1e-6);
        auto r3 = check_grads({x, b}, [&] { return sum(mul(add_bias(x, b), add_bias(x, b))); });
        CHECK(r3.max_rel_err <= 1e-6);
        auto r4 = check_grads({x}, [&] {
            return sum(mul(global_avgpool(x), global_avgpool(x)));
        });
        CHECK(r4.max_rel_err <= 1e-6);
    }
}

TEST_CASE("softmax of equal logits is uniform") {
    Tensor x = Tensor::from({1, 4}, {0, 0, 0, 0});
    Tensor p = softmax(x);
    for (double v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax shift invariance: [c, c+ln3] -> [0.25, 0.75]") {
    for (double c : {-100.0, 0.0, 3.5, 700.0}) {
        Tensor x = Tensor::from({1, 2}, {c, c + std::log(3.0)});
        Tensor p = softmax(x);
        CHECK(p.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(p.values()[1] == doctest::Approx(0.75).epsilon(1e-12));
    }
}

TEST_CASE("softmax rows sum to 1 and entries lie in (0,1)") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-30.0, 30.0);
    std::vector<double> logits(8 * 6);
    for (auto& v : logits) v = dist(rng);
    Tensor p = softmax(Tensor::from({8, 6}, logits));
    auto v = p.values();
    for (std::size_t i = 0; i < 8; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(v[i * 6 + j] > 0.0);
            CHECK(v[i * 6 + j] < 1.0);
            row += v[i * 6 + j];
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax gradient vs finite differences") {
    std::mt19937_64 rng(17);
    Tensor x = random_param({4, 6}, rng, 2.0);
    std::vector<double> wv(24);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : wv) v = dist(rng);
    Tensor w = Tensor::from({4, 6}, wv);
    auto res = check_grads({x}, [&] { return sum(mul(softmax(x), w)); });
    CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("backward on sum gives all-ones gradient") {
    Tensor x = Tensor::param({5}, {1, 2, 3, 4, 5});
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of x*x at x=3 gives 6") {
    Tensor x = Tensor::param({}, {3.0});
    backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::param({3}, {1, 2, 3});
    CHECK_THROWS_AS(backward(relu(x)), ContractError);
}

TEST_CASE("gradient accumulation: two backward passes sum") {
    Tensor x = Tensor::param({3}, {1.0, -2.0, 3.0});
    backward(sum(mul(x, x)));
    std::vector<double> once(x.grad().begin(), x.grad().end());
    backward(sum(mul(x, x)));
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));
}

TEST_CASE("forward pass is deterministic bit for bit") {
    std::mt19937_64 rng(31);
    Tensor a = random_param({4, 4}, rng);
    Tensor b = random_param({4, 4}, rng);
    Tensor y1 = softmax(matmul(a, b));
    Tensor y2 = softmax(matmul(a, b));
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.values()[i] == y2.values()[i]);
}

TEST_CASE("composite MLP full-network gradient check") {
    std::mt19937_64 rng(41);
    Tensor x = Tensor::from({4, 3}, [&] {
        std::vector<double> v(12);
        std::uniform_real_distribution<double> d(-1, 1);
        for (auto& e : v) e = d(rng);
        return v;
    }());
    Tensor w1 = random_param({3, 8}, rng);
    Tensor b1 = random_param({8}, rng, 0.1);
    Tensor w2 = random_param({8, 5}, rng);
    Tensor b2 = random_param({5}, rng, 0.1);
    auto loss = [&] {
        Tensor h = relu(add_bias(matmul(x, w1), b1));
        Tensor p = softmax(add_bias(matmul(h, w2), b2));
        return mean(mul(p, p));
    };
    auto res = check_grads({w1, b1, w2, b2}, loss);
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("sgd_step arithmetic: 1.0 - 0.1*0.5 = 0.95") {
    Tensor p = Tensor::param({}, {1.0});
    p.mutable_grad()[0] = 0.5;
    SgdOptimizer opt({p}, 0.1);
    opt.step();
    CHECK(p.values()[0] == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("zero grad leaves parameter unchanged and resets buffers") {
    Tensor p = Tensor::param({2}, {1.0, 2.0});
    p.mutable_grad()[0] = 5.0;
    SgdOptimizer opt({p}, 0.1);
    opt.zero_grads();
    opt.step();
    CHECK(p.values()[0] == 1.0);
    CHECK(p.values()[1] == 2.0);
    for (double g : p.grad()) CHECK(g == 0.0);
}

TEST_CASE("one sgd step on a convex quadratic decreases the loss") {
    Tensor x = Tensor::param({3}, {3.0, -2.0, 1.5});
    auto loss = [&] { return sum(mul(x, x)); };
    const double before = loss().item();
    x.zero_grad();
    backward(loss());
    SgdOptimizer opt({x}, 0.1);
    opt.step();
    CHECK(loss().item() < before);
}
