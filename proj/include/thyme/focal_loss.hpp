#pragma once

#include "thyme/tensor.hpp"

namespace thyme {

struct FocalConfig {
    double alpha = 0.25; // balancing factor, in (0, 1]
    double gamma = 2.0;  // focusing exponent, >= 0
};

// L = -alpha (1 - p)^gamma log(p) for the probability p assigned to the true
// outcome, clamped at p >= 1e-12. Scalar form; the reference the elementwise
// tensor path is tested against.
double focal_loss(double p_true, const FocalConfig& cfg);

// Elementwise focal loss over multi-label sigmoid scores. `targets` holds 0/1
// gold labels; for a negative slot the true-class probability is 1 - score.
// Differentiable through `scores`.
Tensor focal_elementwise(const Tensor& scores, const Tensor& targets, const FocalConfig& cfg);

} // namespace thyme
