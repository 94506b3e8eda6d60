#pragma once

#include <vector>

#include "thyme/params.hpp"
#include "thyme/tensor.hpp"

namespace thyme {

// Intra-frame hierarchical aggregation: stacked attention layers over the
// fully connected object set of one frame.
struct HierarchyConfig {
    long levels = 4;     // total depth the model was designed with
    double factor = 1.0; // fraction of levels that are active: 1/4, 1/2, 3/4 or 1

    // Rounded to nearest, floor 1.
    long active_levels() const;
};

// Row-stochastic weights a[i][j] = softmax_j <F[i], F[j]>. The neighborhood is
// the whole frame including i itself; scores are raw dot products.
// N == 0 yields an empty matrix.
Tensor attention_weights(const Tensor& features);

// F_l[i] = relu( sum_j a[i][j] (W F_prev[j] + b) ). The contraction is
// order-invariant, so reordering the frame's instances permutes rows exactly.
Tensor aggregate_level(const Tensor& f_prev, const Parameter& w, const Parameter& b);

// Per-level weight handles, shared across frames.
struct HierarchyParams {
    std::vector<const Parameter*> w; // one per active level, [d_l x d_{l-1}]
    std::vector<const Parameter*> b; // one per active level, [1 x d_l]
};

// Returns levels 0..active; level 0 is the identity copy of the embeddings.
std::vector<Tensor> run_hierarchy(const Tensor& embeddings, const HierarchyParams& params,
                                  long active_levels);

} // namespace thyme
