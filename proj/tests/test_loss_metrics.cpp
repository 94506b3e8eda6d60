#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "thyme/error.hpp"
#include "thyme/focal_loss.hpp"
#include "thyme/metrics.hpp"
#include "thyme/rng.hpp"

#include "test_support.hpp"

using namespace thyme;
using test::grad_error;
using test::random_tensor;

// ---- focal loss --------------------------------------------------------------

TEST_CASE("focal loss: perfect prediction costs exactly zero") {
    CHECK(focal_loss(1.0, {0.25, 2.0}) == 0.0);
    CHECK(focal_loss(1.0, {1.0, 0.0}) == 0.0);
}

TEST_CASE("focal loss: cross-entropy reduction at gamma 0, alpha 1") {
    CHECK(focal_loss(0.5, {1.0, 0.0}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    // equals plain binary cross-entropy for any probability
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double p = rng.uniform(1e-6, 1.0);
        CHECK(std::abs(focal_loss(p, {1.0, 0.0}) - (-std::log(p))) <= 1e-12);
    }
}

TEST_CASE("focal loss: direct formula evaluation at the defaults") {
    // 0.25 * (1 - 0.9)^2 * (-ln 0.9)
    const double expect = 0.25 * 0.01 * (-std::log(0.9));
    CHECK(focal_loss(0.9, {0.25, 2.0}) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(focal_loss(0.9, {0.25, 2.0}) - 2.634e-4) <= 1e-6);
}

TEST_CASE("focal loss: monotone decreasing in the true-class probability") {
    const FocalConfig cfg{0.25, 2.0};
    double prev = focal_loss(1e-6, cfg);
    for (double p = 0.05; p <= 1.0; p += 0.05) {
        const double cur = focal_loss(p, cfg);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(focal_loss(0.0, cfg), Error);
    CHECK_THROWS_AS(focal_loss(1.5, cfg), Error);
}

TEST_CASE("focal_elementwise agrees with the scalar form on both slot kinds") {
    const FocalConfig cfg{0.25, 2.0};
    Tensor scores = Tensor::from({2, 2}, {0.9, 0.2, 0.65, 0.45});
    Tensor targets = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor loss = focal_elementwise(scores, targets, cfg);
    CHECK(loss(0, 0) == doctest::Approx(focal_loss(0.9, cfg)).epsilon(1e-12));  // positive slot
    CHECK(loss(0, 1) == doctest::Approx(focal_loss(0.8, cfg)).epsilon(1e-12));  // negative slot
    CHECK(loss(1, 0) == doctest::Approx(focal_loss(0.35, cfg)).epsilon(1e-12));
    CHECK(loss(1, 1) == doctest::Approx(focal_loss(0.45, cfg)).epsilon(1e-12));
    for (long i = 0; i < loss.size(); ++i) CHECK(loss.value_at(i) >= 0.0);
}

TEST_CASE("focal_elementwise tends to zero as predictions approach gold") {
    const FocalConfig cfg{0.25, 2.0};
    Tensor targets = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 1});
    const double eps = 1e-9;
    std::vector<double> s(6);
    for (int i = 0; i < 6; ++i) s[static_cast<std::size_t>(i)] =
        targets.value_at(i) > 0.5 ? 1.0 - eps : eps;
    Tensor loss = focal_elementwise(Tensor::from({2, 3}, s), targets, cfg);
    double total = 0.0;
    for (long i = 0; i < loss.size(); ++i) total += loss.value_at(i);
    CHECK(total <= 1e-6);
}

TEST_CASE("focal gradient through sigmoid scores matches finite differences") {
    Rng rng(9);
    Tensor logits0 = random_tensor(rng, {3, 4}, -2.0, 2.0);
    Tensor targets = Tensor::from({3, 4}, {1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0});
    for (double gamma : {0.0, 1.0, 2.0}) {
        const FocalConfig cfg{0.25, gamma};
        CHECK(grad_error(
                  [&](const Tensor& logits) {
                      return mean_all(focal_elementwise(sigmoid(logits), targets, cfg));
                  },
                  logits0) <= 1e-4);
    }
}

// ---- recall metrics ------------------------------------------------------------

namespace {

// Independent brute-force matcher: linear scan of the first K predictions per
// gold tuple, each prediction creditable once.
double recall_oracle(const std::vector<GoldTriplet>& gold,
                     const std::vector<ScoredTriplet>& ranked, long k) {
    std::vector<bool> used(ranked.size(), false);
    long hits = 0;
    for (const GoldTriplet& g : gold) {
        const long limit = std::min<long>(k, static_cast<long>(ranked.size()));
        for (long i = 0; i < limit; ++i) {
            if (used[static_cast<std::size_t>(i)]) continue;
            const ScoredTriplet& p = ranked[static_cast<std::size_t>(i)];
            if (p.frame == g.frame && p.sub == g.sub && p.obj == g.obj && p.pred == g.pred) {
                used[static_cast<std::size_t>(i)] = true;
                ++hits;
                break;
            }
        }
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(gold.size());
}

double mean_recall_oracle(const std::vector<GoldTriplet>& gold,
                          const std::vector<ScoredTriplet>& ranked, long k) {
    std::set<long> classes;
    for (const GoldTriplet& g : gold) classes.insert(g.pred);
    double total = 0.0;
    for (long c : classes) {
        std::vector<GoldTriplet> gold_c;
        for (const GoldTriplet& g : gold)
            if (g.pred == c) gold_c.push_back(g);
        total += recall_oracle(gold_c, ranked, k);
    }
    return total / static_cast<double>(classes.size());
}

} // namespace

TEST_CASE("recall: exact end points") {
    std::vector<GoldTriplet> gold = {{0, 1, 2, 0}, {0, 2, 1, 1}, {1, 1, 2, 0}};
    std::vector<ScoredTriplet> perfect;
    for (const GoldTriplet& g : gold) perfect.push_back({g.frame, g.sub, g.obj, g.pred, 0.9});
    CHECK(recall_at_k(gold, perfect, 20) == 100.0);

    CHECK(recall_at_k(gold, {}, 20) == 0.0);

    std::vector<ScoredTriplet> disjoint = {{5, 9, 9, 3, 0.99}, {6, 9, 9, 3, 0.98}};
    CHECK(recall_at_k(gold, disjoint, 20) == 0.0);
}

TEST_CASE("recall: two of three gold in the top-K gives 66.66...") {
    std::vector<GoldTriplet> gold = {{0, 1, 2, 0}, {0, 2, 1, 1}, {1, 1, 2, 0}};
    std::vector<ScoredTriplet> ranked = {
        {0, 1, 2, 0, 0.9}, {0, 2, 1, 1, 0.8}, {9, 9, 9, 3, 0.7}, {1, 1, 2, 0, 0.6}};
    const double r = recall_at_k(gold, ranked, 3);
    CHECK(r == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-12));
    CHECK(r == recall_oracle(gold, ranked, 3));
}

TEST_CASE("recall requires non-empty gold and positive K") {
    CHECK_THROWS_AS(recall_at_k({}, {}, 5), Error);
    CHECK_THROWS_AS(recall_at_k({{0, 1, 2, 0}}, {}, 0), Error);
}

TEST_CASE("mean recall: degenerate single class equals recall") {
    std::vector<GoldTriplet> gold = {{0, 1, 2, 0}, {1, 1, 2, 0}};
    std::vector<ScoredTriplet> ranked = {{0, 1, 2, 0, 0.9}, {2, 8, 8, 0, 0.8}};
    CHECK(mean_recall_at_k(gold, ranked, 2) == recall_at_k(gold, ranked, 2));
}

TEST_CASE("mean recall: classes at 100 and 0 average to 50") {
    std::vector<GoldTriplet> gold = {{0, 1, 2, 0}, {0, 2, 1, 1}};
    std::vector<ScoredTriplet> ranked = {{0, 1, 2, 0, 0.9}};
    CHECK(mean_recall_at_k(gold, ranked, 5) == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("recall and mean recall match the brute-force oracle bit for bit") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<GoldTriplet> gold;
        const long n_gold = 1 + rng.uniform_int(0, 4);
        std::set<GoldTriplet> unique;
        while (static_cast<long>(gold.size()) < n_gold) {
            GoldTriplet g{rng.uniform_int(0, 3), rng.uniform_int(0, 4), rng.uniform_int(0, 4),
                          rng.uniform_int(0, 2)};
            if (unique.insert(g).second) gold.push_back(g);
        }
        std::vector<ScoredTriplet> ranked;
        const long n_pred = rng.uniform_int(0, 30);
        for (long i = 0; i < n_pred; ++i)
            ranked.push_back({rng.uniform_int(0, 3), rng.uniform_int(0, 4), rng.uniform_int(0, 4),
                              rng.uniform_int(0, 2), 1.0 - 0.01 * static_cast<double>(i)});
        for (long k : {1L, 5L, 20L}) {
            CHECK(recall_at_k(gold, ranked, k) == recall_oracle(gold, ranked, k));
            CHECK(mean_recall_at_k(gold, ranked, k) == mean_recall_oracle(gold, ranked, k));
        }
    }
}

TEST_CASE("recall is monotone non-decreasing in K") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<GoldTriplet> gold;
        for (long i = 0; i < 4; ++i)
            gold.push_back({i, rng.uniform_int(0, 3), rng.uniform_int(0, 3), rng.uniform_int(0, 2)});
        std::vector<ScoredTriplet> ranked;
        for (long i = 0; i < 25; ++i)
            ranked.push_back({rng.uniform_int(0, 3), rng.uniform_int(0, 3), rng.uniform_int(0, 3),
                              rng.uniform_int(0, 2), 1.0 - 0.01 * static_cast<double>(i)});
        double prev_r = 0.0, prev_mr = 0.0;
        for (long k = 1; k <= 25; ++k) {
            const double r = recall_at_k(gold, ranked, k);
            const double mr = mean_recall_at_k(gold, ranked, k);
            CHECK(r >= prev_r);
            CHECK(mr >= prev_mr);
            prev_r = r;
            prev_mr = mr;
        }
    }
}

TEST_CASE("evaluate_samples macro-averages over videos") {
    PredicateVocab vocab;
    vocab.names[static_cast<int>(IType::Position)] = {"left_of", "right_of"};
    // video A: both gold tuples found; video B: none found
    SampleEval a;
    a.video = "a";
    a.gold[static_cast<int>(IType::Position)] = {{0, 1, 2, 0}, {0, 2, 1, 1}};
    a.ranked[static_cast<int>(IType::Position)] = {{0, 1, 2, 0, 0.9}, {0, 2, 1, 1, 0.8}};
    SampleEval b;
    b.video = "b";
    b.gold[static_cast<int>(IType::Position)] = {{0, 3, 4, 0}};
    b.ranked[static_cast<int>(IType::Position)] = {{0, 9, 9, 1, 0.9}};

    EvalReport report = evaluate_samples({a, b}, vocab, {20});
    const TypeReport& tr = report.types[static_cast<int>(IType::Position)];
    CHECK(tr.recall.at(20) == doctest::Approx(50.0).epsilon(1e-12)); // (100 + 0) / 2
    // left_of: video a hit, video b miss -> 50; right_of: only video a -> 100
    CHECK(tr.per_predicate.at(20).at("left_of") == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(tr.per_predicate.at(20).at("right_of") == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(tr.mean_recall.at(20) == doctest::Approx(75.0).epsilon(1e-12));

    const std::string text = report.to_text();
    CHECK(text.find("Position") != std::string::npos);
    CHECK(text.find("R/mR@20") != std::string::npos);
}
