#include "thyme/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "thyme/error.hpp"

namespace thyme {

using nlohmann::json;

namespace {

long count_hits(const std::vector<GoldTriplet>& gold, const std::vector<ScoredTriplet>& ranked,
                long k) {
    std::set<GoldTriplet> todo(gold.begin(), gold.end());
    long hits = 0;
    const long limit = std::min<long>(k, static_cast<long>(ranked.size()));
    for (long i = 0; i < limit; ++i) {
        const ScoredTriplet& p = ranked[static_cast<std::size_t>(i)];
        GoldTriplet key{p.frame, p.sub, p.obj, p.pred};
        auto it = todo.find(key);
        if (it != todo.end()) {
            ++hits;
            todo.erase(it); // each gold tuple is creditable once
        }
    }
    return hits;
}

} // namespace

double recall_at_k(const std::vector<GoldTriplet>& gold, const std::vector<ScoredTriplet>& ranked,
                   long k) {
    if (gold.empty()) fail("empty-gold", "recall_at_k needs a non-empty gold set");
    if (k < 1) fail("invalid-config-value", "recall_at_k needs K >= 1");
    return 100.0 * static_cast<double>(count_hits(gold, ranked, k)) /
           static_cast<double>(gold.size());
}

double mean_recall_at_k(const std::vector<GoldTriplet>& gold,
                        const std::vector<ScoredTriplet>& ranked, long k) {
    if (gold.empty()) fail("empty-gold", "mean_recall_at_k needs a non-empty gold set");
    if (k < 1) fail("invalid-config-value", "mean_recall_at_k needs K >= 1");

    std::set<long> classes;
    for (const GoldTriplet& g : gold) classes.insert(g.pred);

    double total = 0.0;
    for (long c : classes) { // ascending, deterministic
        std::vector<GoldTriplet> gold_c;
        for (const GoldTriplet& g : gold)
            if (g.pred == c) gold_c.push_back(g);
        // matching runs against the overall top-K list, not a per-class top-K
        total += 100.0 * static_cast<double>(count_hits(gold_c, ranked, k)) /
                 static_cast<double>(gold_c.size());
    }
    return total / static_cast<double>(classes.size());
}

EvalReport evaluate_samples(const std::vector<SampleEval>& samples, const PredicateVocab& vocab,
                            const std::vector<long>& ks) {
    EvalReport report;
    report.ks = ks;
    for (int ti = 0; ti < kNumTypes; ++ti) {
        const IType t = kAllTypes[static_cast<std::size_t>(ti)];
        TypeReport& tr = report.types[static_cast<std::size_t>(ti)];
        for (long k : ks) {
            // macro recall over videos with gold of this type
            double sum = 0.0;
            long n = 0;
            for (const SampleEval& s : samples) {
                const auto& gold = s.gold[static_cast<std::size_t>(ti)];
                if (gold.empty()) continue;
                sum += recall_at_k(gold, s.ranked[static_cast<std::size_t>(ti)], k);
                ++n;
            }
            tr.recall[k] = n > 0 ? sum / static_cast<double>(n) : 0.0;

            // per-predicate recall, macro over the videos holding the predicate
            double class_sum = 0.0;
            long class_n = 0;
            for (long c = 0; c < vocab.size(t); ++c) {
                double c_sum = 0.0;
                long c_n = 0;
                for (const SampleEval& s : samples) {
                    std::vector<GoldTriplet> gold_c;
                    for (const GoldTriplet& g : s.gold[static_cast<std::size_t>(ti)])
                        if (g.pred == c) gold_c.push_back(g);
                    if (gold_c.empty()) continue;
                    c_sum += recall_at_k(gold_c, s.ranked[static_cast<std::size_t>(ti)], k);
                    ++c_n;
                }
                if (c_n == 0) continue; // predicate without gold support
                const double r_c = c_sum / static_cast<double>(c_n);
                tr.per_predicate[k][vocab.name(t, c)] = r_c;
                class_sum += r_c;
                ++class_n;
            }
            tr.mean_recall[k] = class_n > 0 ? class_sum / static_cast<double>(class_n) : 0.0;
        }
    }
    return report;
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << "# Recall macro-averaged over videos; mR averages per-predicate recall over\n"
           "# predicates with gold support.\n";
    char buf[64];
    out << "Interactivity Type ";
    for (long k : ks) {
        std::snprintf(buf, sizeof(buf), "  %-15s", ("R/mR@" + std::to_string(k)).c_str());
        out << buf;
    }
    out << '\n';
    for (int ti = 0; ti < kNumTypes; ++ti) {
        std::snprintf(buf, sizeof(buf), "%-19s", type_label(kAllTypes[static_cast<std::size_t>(ti)]));
        out << buf;
        for (long k : ks) {
            const TypeReport& tr = types[static_cast<std::size_t>(ti)];
            std::snprintf(buf, sizeof(buf), "  %6.2f / %-6.2f", tr.recall.at(k),
                          tr.mean_recall.at(k));
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

std::string EvalReport::to_json(const PredicateVocab& vocab) const {
    (void)vocab;
    json j;
    j["protocol"] = "macro-over-videos";
    j["ks"] = ks;
    json jt;
    for (int ti = 0; ti < kNumTypes; ++ti) {
        const TypeReport& tr = types[static_cast<std::size_t>(ti)];
        json one;
        for (long k : ks) {
            const std::string key = std::to_string(k);
            one["recall"][key] = tr.recall.at(k);
            one["mean_recall"][key] = tr.mean_recall.at(k);
            json per;
            auto it = tr.per_predicate.find(k);
            if (it != tr.per_predicate.end())
                for (const auto& [name, r] : it->second) per[name] = r;
            one["per_predicate"][key] = per;
        }
        jt[type_key(kAllTypes[static_cast<std::size_t>(ti)])] = one;
    }
    j["types"] = jt;
    return j.dump(2) + "\n";
}

} // namespace thyme
