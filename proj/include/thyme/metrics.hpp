#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "thyme/dataio.hpp"
#include "thyme/graph_head.hpp"

namespace thyme {

// Gold unit matched by the recall metrics. Double-actor tuples carry the
// frame; single-actor tuples are video-level with frame == -1 and obj == -1.
struct GoldTriplet {
    long frame = -1;
    long sub = 0;
    long obj = -1;
    long pred = 0;

    auto operator<=>(const GoldTriplet&) const = default;
};

// |gold  intersect  top-K| / |gold| * 100 for a single sample; matching on the
// exact (sub, pred, obj, frame) tuple. `ranked` must already follow the
// ranking contract. Gold must be non-empty.
double recall_at_k(const std::vector<GoldTriplet>& gold,
                   const std::vector<ScoredTriplet>& ranked, long k);

// Per-predicate recall_at_k against the same overall top-K list, averaged
// uniformly over predicate classes with at least one gold instance.
double mean_recall_at_k(const std::vector<GoldTriplet>& gold,
                        const std::vector<ScoredTriplet>& ranked, long k);

// ---- corpus-level report -----------------------------------------------------

struct SampleEval {
    std::string video;
    std::array<std::vector<GoldTriplet>, kNumTypes> gold;
    std::array<std::vector<ScoredTriplet>, kNumTypes> ranked;
};

struct TypeReport {
    std::map<long, double> recall;      // K -> R
    std::map<long, double> mean_recall; // K -> mR
    // K -> predicate name -> recall; the table backing mR
    std::map<long, std::map<std::string, double>> per_predicate;
};

// Recall macro-averaged over videos; mR averages per-predicate recalls (each
// itself macro-averaged over the videos holding that predicate) over
// predicates with >= 1 gold instance.
struct EvalReport {
    std::vector<long> ks;
    std::array<TypeReport, kNumTypes> types;

    std::string to_text() const; // fixed-width "R/mR@K" table
    std::string to_json(const PredicateVocab& vocab) const;
};

EvalReport evaluate_samples(const std::vector<SampleEval>& samples, const PredicateVocab& vocab,
                            const std::vector<long>& ks);

} // namespace thyme
