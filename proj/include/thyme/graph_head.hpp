#pragma once

#include <vector>

#include "thyme/params.hpp"
#include "thyme/tensor.hpp"

namespace thyme {

// Relation prediction head: per-layer subject/object projections lifted to
// ordered pairs, sigmoid gating, gated fusion and a relation MLP, plus
// per-node attribute heads for the single-actor types.
//
// Pair tensors are stored as [N*N x 2m] with row p = i*N + j for the ordered
// pair (i, j).

// P[i*N+j] = concat(W_s q[i], W_o k[j]). N < 2 yields an empty pair tensor.
Tensor pair_representation(const Tensor& q, const Tensor& k, const Parameter& w_s,
                           const Parameter& w_o);

// g = sigmoid(R W_g), same shape as R.
Tensor gate(const Tensor& rep, const Parameter& w_g);

struct MlpParams {
    const Parameter* w1;
    const Parameter* b1;
    const Parameter* w2;
    const Parameter* b2;
};

// Two-layer relu MLP followed by sigmoid.
Tensor mlp_scores(const Tensor& input, const MlpParams& mlp);

// sigmoid( MLP_rel( sum_k g_k (.) R_k + g_z (.) R_z ) ); gates are supplied by
// the caller so tests can force them to exact constants.
Tensor fuse_and_score(const std::vector<Tensor>& reps, const std::vector<Tensor>& gates,
                      const Tensor& rep_z, const Tensor& gate_z, const MlpParams& mlp);

// sigmoid(MLP_node(track summaries)); multi-label scores in (0,1).
Tensor node_attribute_scores(const Tensor& summaries, const MlpParams& mlp);

// ---- ranking ----------------------------------------------------------------

// One scored prediction. Node-attribute entries use obj == -1 and frame == -1.
struct ScoredTriplet {
    long frame = -1;
    long sub = 0;
    long obj = -1;
    long pred = 0;
    double score = 0.0;
};

// Tie-break contract: score desc, then subject asc, object asc, predicate asc,
// frame asc. Total order, so rankings are reproducible bit for bit.
bool ranks_before(const ScoredTriplet& a, const ScoredTriplet& b);

// Top-k by the contract above (partial selection; tests compare against a
// full-sort oracle). k larger than the candidate count returns everything.
std::vector<ScoredTriplet> top_k(std::vector<ScoredTriplet> candidates, long k);

} // namespace thyme
