#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "thyme/error.hpp"
#include "thyme/graph_head.hpp"
#include "thyme/rng.hpp"

#include "test_support.hpp"

using namespace thyme;
using test::grad_error;
using test::random_tensor;
using test::weighted_sum;

namespace {

Parameter identity_param(const std::string& name, long d) {
    std::vector<double> v(static_cast<std::size_t>(d * d), 0.0);
    for (long i = 0; i < d; ++i) v[static_cast<std::size_t>(i * d + i)] = 1.0;
    return Parameter{name, Tensor::from({d, d}, std::move(v)), true};
}

Parameter random_param(const std::string& name, Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (double& x : v) x = rng.uniform(-0.7, 0.7);
    return Parameter{name, Tensor::from(std::move(shape), std::move(v)), true};
}

} // namespace

TEST_CASE("pair_representation: identity projections concatenate rows") {
    Parameter ws = identity_param("ws", 2);
    Parameter wo = identity_param("wo", 2);
    Tensor q = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor k = Tensor::from({2, 2}, {5.0, 6.0, 7.0, 8.0});
    Tensor p = pair_representation(q, k, ws, wo);
    REQUIRE(p.rows() == 4); // ordered pairs, row i*N+j
    // pair (0, 1) = concat(q[0], k[1])
    CHECK(p(1, 0) == 1.0);
    CHECK(p(1, 1) == 2.0);
    CHECK(p(1, 2) == 7.0);
    CHECK(p(1, 3) == 8.0);
    // ordered pairs are asymmetric: (0,1) != (1,0)
    bool differs = false;
    for (long c = 0; c < 4; ++c) differs |= (p(1, c) != p(2, c));
    CHECK(differs);
}

TEST_CASE("pair_representation: fewer than two objects yields an empty pair tensor") {
    Parameter ws = random_param("ws", {3, 4}, 1);
    Parameter wo = random_param("wo", {3, 4}, 2);
    Tensor one = Tensor::zeros({1, 4});
    Tensor p = pair_representation(one, one, ws, wo);
    CHECK(p.rows() == 0);
    CHECK(p.cols() == 6);
}

TEST_CASE("pair_representation matches the double-loop concat oracle") {
    Rng rng(7);
    const long n = 3, d = 4, m = 2;
    Parameter ws = random_param("ws", {m, d}, 7);
    Parameter wo = random_param("wo", {m, d}, 8);
    Tensor q = random_tensor(rng, {n, d});
    Tensor k = random_tensor(rng, {n, d});
    Tensor p = pair_representation(q, k, ws, wo);
    REQUIRE(p.rows() == n * n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j)
            for (long c = 0; c < 2 * m; ++c) {
                double expect = 0.0;
                if (c < m)
                    for (long x = 0; x < d; ++x) expect += ws.value(c, x) * q(i, x);
                else
                    for (long x = 0; x < d; ++x) expect += wo.value(c - m, x) * k(j, x);
                CHECK(p(i * n + j, c) == doctest::Approx(expect).epsilon(1e-12));
            }
}

TEST_CASE("gate: zero pre-activation gives 0.5, monotone towards 1") {
    Parameter wg = random_param("wg", {4, 4}, 11);
    Tensor zeros = Tensor::zeros({3, 4});
    Tensor g0 = gate(zeros, wg);
    for (long i = 0; i < g0.size(); ++i) CHECK(g0.value_at(i) == doctest::Approx(0.5).epsilon(1e-15));

    Parameter wg_id = identity_param("wg", 2);
    Tensor r_small = Tensor::from({1, 2}, {1.0, 1.0});
    Tensor r_large = Tensor::from({1, 2}, {8.0, 8.0});
    CHECK(gate(r_large, wg_id)(0, 0) > gate(r_small, wg_id)(0, 0));
    CHECK(gate(r_large, wg_id)(0, 0) < 1.0);
    CHECK(gate(r_large, wg_id)(0, 0) > 0.0);
}

TEST_CASE("gate matches the elementwise sigmoid formula") {
    Rng rng(13);
    Parameter wg = random_param("wg", {3, 3}, 13);
    Tensor r = random_tensor(rng, {2, 3});
    Tensor g = gate(r, wg);
    for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 3; ++j) {
            double pre = 0.0;
            for (long c = 0; c < 3; ++c) pre += r(i, c) * wg.value(c, j);
            CHECK(g(i, j) == doctest::Approx(1.0 / (1.0 + std::exp(-pre))).epsilon(1e-12));
        }
}

namespace {

struct MlpFixture {
    Parameter w1, b1, w2, b2;
    MlpParams params;

    MlpFixture(long d_in, long d_hidden, long d_out, std::uint64_t seed)
        : w1(random_param("w1", {d_hidden, d_in}, seed)),
          b1(random_param("b1", {1, d_hidden}, seed + 1)),
          w2(random_param("w2", {d_out, d_hidden}, seed + 2)),
          b2(random_param("b2", {1, d_out}, seed + 3)) {
        params = {&w1, &b1, &w2, &b2};
    }
};

} // namespace

TEST_CASE("fuse_and_score: zero final MLP layer scores 0.5 everywhere") {
    MlpFixture mlp(4, 3, 2, 17);
    std::fill(mlp.w2.value.mutable_values().begin(), mlp.w2.value.mutable_values().end(), 0.0);
    std::fill(mlp.b2.value.mutable_values().begin(), mlp.b2.value.mutable_values().end(), 0.0);

    Rng rng(17);
    Tensor rep = random_tensor(rng, {4, 4});
    Tensor g = random_tensor(rng, {4, 4}, 0.1, 0.9);
    Tensor rz = random_tensor(rng, {4, 4});
    Tensor gz = random_tensor(rng, {4, 4}, 0.1, 0.9);
    Tensor scores = fuse_and_score({rep}, {g}, rz, gz, mlp.params);
    for (long i = 0; i < scores.size(); ++i)
        CHECK(scores.value_at(i) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("fuse_and_score with gates forced to 1 equals ungated summation") {
    MlpFixture mlp(4, 3, 2, 19);
    Rng rng(19);
    Tensor rep1 = random_tensor(rng, {4, 4});
    Tensor rep2 = random_tensor(rng, {4, 4});
    Tensor rz = random_tensor(rng, {4, 4});
    Tensor ones = Tensor::from({4, 4}, std::vector<double>(16, 1.0));

    Tensor gated = fuse_and_score({rep1, rep2}, {ones, ones}, rz, ones, mlp.params);

    // manual ungated composition: sigmoid(MLP(rep1 + rep2 + rz))
    Tensor fused = add(add(rep1, rep2), rz);
    Tensor expect = sigmoid(linear(relu(linear(fused, mlp.w1.value, mlp.b1.value)),
                                   mlp.w2.value, mlp.b2.value));
    for (long i = 0; i < gated.size(); ++i)
        CHECK(gated.value_at(i) == expect.value_at(i)); // exact algebraic identity
}

TEST_CASE("fuse_and_score: scores stay inside (0, 1)") {
    MlpFixture mlp(4, 3, 2, 23);
    Rng rng(23);
    Tensor rep = random_tensor(rng, {9, 4}, -3.0, 3.0);
    Tensor g = random_tensor(rng, {9, 4}, 0.0, 1.0);
    Tensor rz = random_tensor(rng, {9, 4}, -3.0, 3.0);
    Tensor gz = random_tensor(rng, {9, 4}, 0.0, 1.0);
    Tensor scores = fuse_and_score({rep}, {g}, rz, gz, mlp.params);
    for (long i = 0; i < scores.size(); ++i) {
        CHECK(scores.value_at(i) > 0.0);
        CHECK(scores.value_at(i) < 1.0);
    }
}

TEST_CASE("gradient w.r.t. the gate weight matches finite differences") {
    Rng rng(29);
    Rng wrng(30);
    const long n = 2, d = 3, m = 2;
    Parameter ws = random_param("ws", {m, d}, 31);
    Parameter wo = random_param("wo", {m, d}, 32);
    MlpFixture mlp(2 * m, m, 2, 33);
    Tensor q = random_tensor(rng, {n, d});
    Tensor rz = random_tensor(rng, {n * n, 2 * m});
    Tensor wt = random_tensor(wrng, {n * n, 2});
    Tensor wg0 = random_tensor(rng, {2 * m, 2 * m});

    auto objective = [&](const Tensor& wg) {
        Parameter wgp{"wg", wg, true};
        Tensor rep = pair_representation(q, q, ws, wo);
        Tensor scores = fuse_and_score({rep}, {gate(rep, wgp)}, rz, gate(rz, wgp), mlp.params);
        return weighted_sum(scores, wt);
    };
    CHECK(grad_error(objective, wg0) <= 1e-4);
}

TEST_CASE("node_attribute_scores: zero final layer, determinism, gradient") {
    MlpFixture mlp(4, 3, 2, 37);
    SUBCASE("zero final layer scores 0.5") {
        std::fill(mlp.w2.value.mutable_values().begin(), mlp.w2.value.mutable_values().end(), 0.0);
        std::fill(mlp.b2.value.mutable_values().begin(), mlp.b2.value.mutable_values().end(), 0.0);
        Rng rng(37);
        Tensor f = random_tensor(rng, {3, 4});
        Tensor s = node_attribute_scores(f, mlp.params);
        for (long i = 0; i < s.size(); ++i) CHECK(s.value_at(i) == doctest::Approx(0.5));
    }
    SUBCASE("identical tracks produce identical scores") {
        Tensor f = Tensor::from({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4});
        Tensor s = node_attribute_scores(f, mlp.params);
        for (long j = 0; j < s.cols(); ++j) CHECK(s(0, j) == s(1, j));
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(38);
        Rng wrng(39);
        Tensor f0 = random_tensor(rng, {3, 4});
        Tensor wt = random_tensor(wrng, {3, 2});
        CHECK(grad_error(
                  [&](const Tensor& f) { return weighted_sum(node_attribute_scores(f, mlp.params), wt); },
                  f0) <= 1e-4);
    }
}

TEST_CASE("top_k: deterministic tie-break order on equal scores") {
    std::vector<ScoredTriplet> c;
    for (long sub : {2L, 0L, 1L})
        for (long pred : {1L, 0L}) c.push_back({0, sub, 5, pred, 0.75});
    auto ranked = top_k(c, 4);
    REQUIRE(ranked.size() == 4);
    CHECK(ranked[0].sub == 0);
    CHECK(ranked[0].pred == 0);
    CHECK(ranked[1].sub == 0);
    CHECK(ranked[1].pred == 1);
    CHECK(ranked[2].sub == 1);
    CHECK(ranked[2].pred == 0);
}

TEST_CASE("top_k: k beyond the candidate count returns everything") {
    std::vector<ScoredTriplet> c = {{0, 1, 2, 0, 0.5}, {0, 2, 1, 0, 0.9}};
    auto ranked = top_k(c, 100);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].score == 0.9);
}

TEST_CASE("top_k matches a full-sort oracle on random scores") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ScoredTriplet> c;
        const long n = 30;
        for (long i = 0; i < n; ++i)
            c.push_back({static_cast<long>(rng.uniform_int(0, 3)), rng.uniform_int(0, 4),
                         rng.uniform_int(0, 4), rng.uniform_int(0, 2),
                         rng.uniform(0.0, 1.0) < 0.3 ? 0.5 : rng.uniform(0.0, 1.0)});
        const long k = 1 + rng.uniform_int(0, n - 1);

        auto fast = top_k(c, k);

        std::vector<ScoredTriplet> oracle = c;
        std::stable_sort(oracle.begin(), oracle.end(), ranks_before);
        oracle.resize(static_cast<std::size_t>(k));

        REQUIRE(fast.size() == oracle.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(fast[i].sub == oracle[i].sub);
            CHECK(fast[i].obj == oracle[i].obj);
            CHECK(fast[i].pred == oracle[i].pred);
            CHECK(fast[i].frame == oracle[i].frame);
            CHECK(fast[i].score == oracle[i].score);
        }
    }
}
