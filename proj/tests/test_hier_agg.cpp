#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "thyme/error.hpp"
#include "thyme/hier_agg.hpp"
#include "thyme/rng.hpp"

#include "test_support.hpp"

using namespace thyme;
using test::grad_error;
using test::random_tensor;
using test::weighted_sum;

namespace {

// Naive exp/sum evaluation of the intra-frame attention, double loops only.
std::vector<std::vector<double>> attention_oracle(const Tensor& f) {
    const long n = f.rows(), d = f.cols();
    std::vector<std::vector<double>> a(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (long i = 0; i < n; ++i) {
        double denom = 0.0;
        for (long k = 0; k < n; ++k) {
            double dot = 0.0;
            for (long c = 0; c < d; ++c) dot += f(i, c) * f(k, c);
            denom += std::exp(dot);
        }
        for (long j = 0; j < n; ++j) {
            double dot = 0.0;
            for (long c = 0; c < d; ++c) dot += f(i, c) * f(j, c);
            a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::exp(dot) / denom;
        }
    }
    return a;
}

// From-scratch evaluation of one aggregation level.
std::vector<std::vector<double>> aggregate_oracle(const Tensor& f, const Tensor& w,
                                                  const Tensor& b) {
    const long n = f.rows(), din = f.cols(), dout = w.rows();
    auto a = attention_oracle(f);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(n),
                                         std::vector<double>(static_cast<std::size_t>(dout), 0.0));
    for (long i = 0; i < n; ++i)
        for (long o = 0; o < dout; ++o) {
            double acc = 0.0;
            for (long j = 0; j < n; ++j) {
                double wf = b(0, o);
                for (long c = 0; c < din; ++c) wf += w(o, c) * f(j, c);
                acc += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * wf;
            }
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(o)] = std::max(acc, 0.0);
        }
    return out;
}

ParamStore make_level_params(long din, long dout, std::uint64_t seed) {
    ParamStore store;
    store.add_uniform("w", {dout, din}, din, seed);
    store.add_uniform("b", {1, dout}, din, seed);
    return store;
}

} // namespace

TEST_CASE("active level count: round to nearest with a floor of 1") {
    CHECK(HierarchyConfig{4, 0.25}.active_levels() == 1);
    CHECK(HierarchyConfig{4, 0.5}.active_levels() == 2);
    CHECK(HierarchyConfig{4, 0.75}.active_levels() == 3);
    CHECK(HierarchyConfig{4, 1.0}.active_levels() == 4);
    CHECK(HierarchyConfig{8, 0.25}.active_levels() == 2);
    CHECK(HierarchyConfig{1, 0.25}.active_levels() == 1); // floor
}

TEST_CASE("attention_weights: single object and identical rows") {
    Tensor one = Tensor::from({1, 3}, {0.4, -0.2, 1.0});
    Tensor a1 = attention_weights(one);
    CHECK(a1.rows() == 1);
    CHECK(a1(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    Tensor twin = Tensor::from({2, 2}, {0.3, 0.7, 0.3, 0.7});
    Tensor a2 = attention_weights(twin);
    for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 2; ++j) CHECK(a2(i, j) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("attention_weights: empty frame yields an empty matrix") {
    Tensor a = attention_weights(Tensor::zeros({0, 4}));
    CHECK(a.rows() == 0);
    CHECK(a.cols() == 0);
}

TEST_CASE("attention_weights matches the exp/sum oracle within 1e-12") {
    Rng rng(17);
    Tensor f = random_tensor(rng, {3, 4}, -1.0, 1.0);
    Tensor a = attention_weights(f);
    auto oracle = attention_oracle(f);
    for (long i = 0; i < 3; ++i) {
        double row_sum = 0.0;
        for (long j = 0; j < 3; ++j) {
            CHECK(std::abs(a(i, j) - oracle[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) <=
                  1e-12);
            row_sum += a(i, j);
        }
        CHECK(std::abs(row_sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("aggregate_level: single object reduces to relu(W f + b)") {
    ParamStore store;
    store.add_constant("w", {2, 2}, 0.0);
    auto& wv = store.get("w").value.mutable_values();
    wv[0] = 1.0;
    wv[3] = 1.0; // identity
    store.add_constant("b", {1, 2}, 0.0);
    Tensor f = Tensor::from({1, 2}, {-1.0, 2.0});
    Tensor out = aggregate_level(f, store.get("w"), store.get("b"));
    CHECK(out(0, 0) == 0.0);
    CHECK(out(0, 1) == 2.0);
}

TEST_CASE("aggregate_level: identical objects produce identical rows") {
    ParamStore store = make_level_params(3, 3, 9);
    Tensor f = Tensor::from({2, 3}, {0.2, -0.5, 0.9, 0.2, -0.5, 0.9});
    Tensor out = aggregate_level(f, store.get("w"), store.get("b"));
    for (long j = 0; j < 3; ++j) CHECK(out(0, j) == out(1, j));
}

TEST_CASE("aggregate_level matches the from-scratch oracle within 1e-10") {
    Rng rng(23);
    ParamStore store = make_level_params(4, 3, 23);
    Tensor f = random_tensor(rng, {3, 4}, -1.0, 1.0);
    Tensor out = aggregate_level(f, store.get("w"), store.get("b"));
    auto oracle = aggregate_oracle(f, store.get("w").value, store.get("b").value);
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 3; ++j)
            CHECK(std::abs(out(i, j) -
                           oracle[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) <= 1e-10);
    for (long i = 0; i < out.size(); ++i) CHECK(out.value_at(i) >= 0.0);
}

namespace {

HierarchyParams to_hier(const ParamStore& store, long levels) {
    HierarchyParams hp;
    for (long l = 1; l <= levels; ++l) {
        hp.w.push_back(&store.get("l" + std::to_string(l) + ".w"));
        hp.b.push_back(&store.get("l" + std::to_string(l) + ".b"));
    }
    return hp;
}

ParamStore make_stack(long levels, long d, std::uint64_t seed) {
    ParamStore store;
    for (long l = 1; l <= levels; ++l) {
        store.add_uniform("l" + std::to_string(l) + ".w", {d, d}, d, seed);
        store.add_uniform("l" + std::to_string(l) + ".b", {1, d}, d, seed);
    }
    return store;
}

} // namespace

TEST_CASE("run_hierarchy: level 0 is the identity, empty frames stay empty") {
    ParamStore store = make_stack(2, 3, 31);
    HierarchyParams hp = to_hier(store, 2);

    Rng rng(31);
    Tensor f = random_tensor(rng, {4, 3});
    auto levels = run_hierarchy(f, hp, 2);
    REQUIRE(levels.size() == 3);
    CHECK(levels[0].values() == f.values());

    auto empty_levels = run_hierarchy(Tensor::zeros({0, 3}), hp, 2);
    for (const Tensor& lv : empty_levels) CHECK(lv.rows() == 0);
}

TEST_CASE("run_hierarchy equals repeated aggregate_level composition") {
    ParamStore store = make_stack(3, 4, 41);
    HierarchyParams hp = to_hier(store, 3);
    Rng rng(41);
    Tensor f = random_tensor(rng, {3, 4});

    auto levels = run_hierarchy(f, hp, 3);
    Tensor manual = f;
    for (long l = 1; l <= 3; ++l) {
        manual = aggregate_level(manual, store.get("l" + std::to_string(l) + ".w"),
                                 store.get("l" + std::to_string(l) + ".b"));
        CHECK(levels[static_cast<std::size_t>(l)].values() == manual.values());
    }
}

TEST_CASE("permutation equivariance is exact at every level") {
    ParamStore store = make_stack(3, 5, 53);
    HierarchyParams hp = to_hier(store, 3);
    Rng rng(53);
    const long n = 5;
    Tensor f = random_tensor(rng, {n, 5});

    std::vector<long> perm = {3, 0, 4, 1, 2};
    Tensor f_perm = gather_rows(f, perm);

    auto base = run_hierarchy(f, hp, 3);
    auto permuted = run_hierarchy(f_perm, hp, 3);
    for (std::size_t lv = 0; lv < base.size(); ++lv)
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < 5; ++j)
                CHECK(permuted[lv](i, j) == base[lv](perm[static_cast<std::size_t>(i)], j));
}

TEST_CASE("attention rows are stochastic at every level") {
    ParamStore store = make_stack(4, 4, 67);
    HierarchyParams hp = to_hier(store, 4);
    Rng rng(67);
    Tensor f = random_tensor(rng, {4, 4});
    auto levels = run_hierarchy(f, hp, 4);
    for (const Tensor& lv : levels) {
        Tensor a = attention_weights(lv);
        for (long i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (long j = 0; j < a.cols(); ++j) s += a(i, j);
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("gradients through aggregate_level match finite differences") {
    Rng rng(71);
    Rng wrng(72);
    ParamStore store = make_level_params(3, 3, 71);
    Tensor f0 = random_tensor(rng, {3, 3}, -1.0, 1.0);
    Tensor wt = random_tensor(wrng, {3, 3});

    CHECK(grad_error(
              [&](const Tensor& f) {
                  return weighted_sum(aggregate_level(f, store.get("w"), store.get("b")), wt);
              },
              f0) <= 1e-4);

    Tensor w0 = Tensor::from(store.get("w").value.shape(), store.get("w").value.values());
    CHECK(grad_error(
              [&](const Tensor& w) {
                  Parameter wp{"w", w, true};
                  return weighted_sum(aggregate_level(f0, wp, store.get("b")), wt);
              },
              w0) <= 1e-4);
}
