#include <doctest.h>

#include <random>
#include <set>

#include "mcd/data.hpp"
#include "mcd/losses.hpp"
#include "mcd/model.hpp"
#include "mcd/optim.hpp"

using namespace mcd;

namespace {

TwoHeadConfig mlp_config() {
    TwoHeadConfig cfg;
    cfg.input_kind = InputKind::Vector;
    cfg.input_dim = 2;
    cfg.num_classes = 4;
    cfg.hidden = {16, 8};
    return cfg;
}

}  // namespace

TEST_CASE("identical config and seeds give identical parameters") {
    TwoHeadConfig cfg = mlp_config();
    TwoHeadModel a = init_model(cfg);
    TwoHeadModel b = init_model(cfg);
    auto pa = a.snapshot(), pb = b.snapshot();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("distinct head seeds give distinct head weights") {
    TwoHeadModel m = init_model(mlp_config());
    bool any_diff = false;
    for (std::size_t i = 0; i < m.head1_weight.size(); ++i)
        if (m.head1_weight.values()[i] != m.head2_weight.values()[i]) any_diff = true;
    CHECK(any_diff);
    CHECK(m.head1_weight.shape() == m.head2_weight.shape());
}

TEST_CASE("equal head seeds are rejected") {
    TwoHeadConfig cfg = mlp_config();
    cfg.seed_head2 = cfg.seed_head1;
    CHECK_THROWS_AS(init_model(cfg), ConfigError);
}

TEST_CASE("invalid layer spec names the layer") {
    TwoHeadConfig cfg = mlp_config();
    cfg.hidden = {16, 0};
    CHECK_THROWS_WITH_AS(init_model(cfg), doctest::Contains("layer 1"), ConfigError);
}

TEST_CASE("zero-weight heads produce uniform probabilities") {
    TwoHeadModel m = init_model(mlp_config());
    for (Tensor t : {m.head1_weight, m.head1_bias, m.head2_weight, m.head2_bias})
        std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
    Tensor x = Tensor::from({3, 2}, {1, 2, -1, 0, 0.5, 0.5});
    auto [p1, p2] = probabilities(m, x);
    for (double v : p1.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    for (double v : p2.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("batched duplicate rows give identical outputs") {
    TwoHeadModel m = init_model(mlp_config());
    Tensor single = Tensor::from({1, 2}, {0.3, -0.7});
    Tensor batch = Tensor::from({3, 2}, {0.3, -0.7, 0.3, -0.7, 0.3, -0.7});
    auto [s1, s2] = forward(m, single);
    auto [b1, b2] = forward(m, batch);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(b1.values()[r * 4 + j] == s1.values()[j]);
            CHECK(b2.values()[r * 4 + j] == s2.values()[j]);
        }
}

TEST_CASE("probability rows sum to 1") {
    TwoHeadModel m = init_model(mlp_config());
    Tensor x = Tensor::from({5, 2}, {1, 1, 2, -2, 0, 0, -1, 3, 0.5, -0.5});
    auto [p1, p2] = probabilities(m, x);
    for (const Tensor& p : {p1, p2})
        for (std::size_t r = 0; r < 5; ++r) {
            double row = 0.0;
            for (std::size_t j = 0; j < 4; ++j) row += p.values()[r * 4 + j];
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("forward shape mismatch raises a dimension error") {
    TwoHeadModel m = init_model(mlp_config());
    Tensor x = Tensor::from({2, 3}, std::vector<double>(6, 0.0));
    CHECK_THROWS_AS(forward(m, x), DimensionError);
}

TEST_CASE("extractor gradient from both heads equals the sum of per-head gradients") {
    TwoHeadModel m = init_model(mlp_config());
    Tensor x = Tensor::from({2, 2}, {0.5, 1.0, -1.0, 0.25});

    auto grads_of = [&](bool head1, bool head2) {
        for (auto& p : m.all_params()) p.zero_grad();
        auto [l1, l2] = forward(m, x);
        Tensor loss = head1 && head2 ? add(sum(l1), sum(l2)) : (head1 ? sum(l1) : sum(l2));
        backward(loss);
        std::vector<double> out;
        for (auto& p : m.extractor_params())
            out.insert(out.end(), p.grad().begin(), p.grad().end());
        return out;
    };

    auto both = grads_of(true, true);
    auto only1 = grads_of(true, false);
    auto only2 = grads_of(false, true);
    for (std::size_t i = 0; i < both.size(); ++i)
        CHECK(both[i] == doctest::Approx(only1[i] + only2[i]).epsilon(1e-12));
}

TEST_CASE("parameter groups partition all parameters") {
    TwoHeadModel m = init_model(mlp_config());
    std::set<const void*> seen;
    std::size_t total = 0;
    for (const auto& group : {m.extractor_params(), m.head1_params(), m.head2_params()})
        for (const auto& t : group) {
            CHECK(seen.insert(t.node().get()).second);  // pairwise disjoint
            total += t.size();
        }
    std::size_t all = 0;
    for (const auto& t : m.all_params()) {
        CHECK(seen.count(t.node().get()) == 1);  // union == all parameters
        all += t.size();
    }
    CHECK(total == all);
}

TEST_CASE("2->16->8 extractor with K=4 has 256 parameters") {
    TwoHeadModel m = init_model(mlp_config());
    std::size_t total = 0;
    for (const auto& t : m.all_params()) total += t.size();
    CHECK(total == (2 * 16 + 16) + (16 * 8 + 8) + 2 * (8 * 4 + 4));
    CHECK(total == 256);
}

TEST_CASE("fresh model accuracy on gaussian data is near chance") {
    TwoHeadModel m = init_model(mlp_config());
    auto data = gen_gaussian_blobs(4, 250, default_blob_centers(), 0.5, 99);
    std::size_t correct1 = 0, correct2 = 0;
    for (const auto& s : data) {
        Tensor x = Tensor::from({1, 2}, {s.x[0], s.x[1]});
        auto [l1, l2] = forward(m, x);
        auto argmax = [](std::span<const double> v) {
            std::size_t a = 0;
            for (std::size_t j = 1; j < v.size(); ++j)
                if (v[j] > v[a]) a = j;
            return a;
        };
        if (argmax(l1.values()) == s.y) ++correct1;
        if (argmax(l2.values()) == s.y) ++correct2;
    }
    const double n = (double)data.size();
    CHECK(correct1 / n == doctest::Approx(0.25).epsilon(0.6));  // within +-15 points of 1/K
    CHECK(std::abs(correct1 / n - 0.25) <= 0.15);
    CHECK(std::abs(correct2 / n - 0.25) <= 0.15);
}

TEST_CASE("image extractor forwards and matches config dims") {
    TwoHeadConfig cfg;
    cfg.input_kind = InputKind::Image;
    cfg.channels = 1;
    cfg.height = 8;
    cfg.width = 8;
    cfg.num_classes = 3;
    cfg.hidden = {4, 6};
    TwoHeadModel m = init_model(cfg);
    Tensor x = Tensor::from({2, 1, 8, 8}, std::vector<double>(128, 0.5));
    auto [p1, p2] = probabilities(m, x);
    CHECK(p1.shape() == Shape{2, 3});
    for (std::size_t r = 0; r < 2; ++r) {
        double row = 0.0;
        for (std::size_t j = 0; j < 3; ++j) row += p1.values()[r * 3 + j];
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("heads pretrained on ID data disagree somewhere on a dense grid") {
    // supervised-only training leaves the two heads with different decision
    // boundaries away from the data support
    TwoHeadModel m = init_model(mlp_config());
    auto data = gen_gaussian_blobs(4, 100, default_blob_centers(), 0.5, 7);
    SgdOptimizer opt(m.all_params(), 0.1);
    std::mt19937_64 rng(1);
    for (int epoch = 0; epoch < 30; ++epoch) {
        std::shuffle(data.begin(), data.end(), rng);
        for (std::size_t start = 0; start + 32 <= data.size(); start += 32) {
            std::vector<double> flat;
            std::vector<std::size_t> ys;
            for (std::size_t i = start; i < start + 32; ++i) {
                flat.insert(flat.end(), data[i].x.begin(), data[i].x.end());
                ys.push_back(data[i].y);
            }
            LossValue loss = supervised_loss(m, Tensor::from({32, 2}, flat), ys);
            opt.zero_grads();
            backward(loss.value);
            opt.step();
        }
    }
    std::size_t disagreements = 0;
    for (double gx = -8.0; gx <= 8.0; gx += 0.25)
        for (double gy = -8.0; gy <= 8.0; gy += 0.25) {
            Tensor x = Tensor::from({1, 2}, {gx, gy});
            auto [l1, l2] = forward(m, x);
            auto argmax = [](std::span<const double> v) {
                std::size_t a = 0;
                for (std::size_t j = 1; j < v.size(); ++j)
                    if (v[j] > v[a]) a = j;
                return a;
            };
            if (argmax(l1.values()) != argmax(l2.values())) ++disagreements;
        }
    CHECK(disagreements >= 1);
}
