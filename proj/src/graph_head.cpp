#include "thyme/graph_head.hpp"

#include <algorithm>

#include "thyme/error.hpp"

namespace thyme {

Tensor pair_representation(const Tensor& q, const Tensor& k, const Parameter& w_s,
                           const Parameter& w_o) {
    if (q.rows() != k.rows())
        fail("dim-mismatch", "pair_representation: subject/object row counts differ");
    const long n = q.rows();
    const long m = w_s.value.rows();
    if (n < 2) return Tensor::zeros({0, 2 * m});
    Tensor s = linear(q, w_s.value, Tensor());
    Tensor o = linear(k, w_o.value, Tensor());
    std::vector<long> idx_sub(static_cast<std::size_t>(n * n));
    std::vector<long> idx_obj(static_cast<std::size_t>(n * n));
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
            idx_sub[static_cast<std::size_t>(i * n + j)] = i;
            idx_obj[static_cast<std::size_t>(i * n + j)] = j;
        }
    return concat_cols(gather_rows(s, std::move(idx_sub)), gather_rows(o, std::move(idx_obj)));
}

Tensor gate(const Tensor& rep, const Parameter& w_g) {
    return sigmoid(matmul(rep, w_g.value));
}

Tensor mlp_scores(const Tensor& input, const MlpParams& mlp) {
    Tensor hidden = relu(linear(input, mlp.w1->value, mlp.b1->value));
    return sigmoid(linear(hidden, mlp.w2->value, mlp.b2->value));
}

Tensor fuse_and_score(const std::vector<Tensor>& reps, const std::vector<Tensor>& gates,
                      const Tensor& rep_z, const Tensor& gate_z, const MlpParams& mlp) {
    if (reps.empty()) fail("invalid-config-value", "fuse_and_score needs at least one layer rep");
    if (reps.size() != gates.size())
        fail("dim-mismatch", "fuse_and_score: rep/gate count mismatch");
    Tensor fused = mul(gates[0], reps[0]);
    for (std::size_t k = 1; k < reps.size(); ++k) fused = add(fused, mul(gates[k], reps[k]));
    fused = add(fused, mul(gate_z, rep_z));
    return mlp_scores(fused, mlp);
}

Tensor node_attribute_scores(const Tensor& summaries, const MlpParams& mlp) {
    return mlp_scores(summaries, mlp);
}

bool ranks_before(const ScoredTriplet& a, const ScoredTriplet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.sub != b.sub) return a.sub < b.sub;
    if (a.obj != b.obj) return a.obj < b.obj;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.frame < b.frame;
}

std::vector<ScoredTriplet> top_k(std::vector<ScoredTriplet> candidates, long k) {
    if (k < 1) fail("invalid-config-value", "top_k needs k >= 1");
    const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(k));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), ranks_before);
    candidates.resize(keep);
    return candidates;
}

} // namespace thyme
