#include "thyme/focal_loss.hpp"

#include <cmath>

#include "thyme/error.hpp"

namespace thyme {

namespace {
constexpr double kProbFloor = 1e-12;
}

double focal_loss(double p_true, const FocalConfig& cfg) {
    if (!(p_true > 0.0 && p_true <= 1.0))
        fail("numeric", "focal_loss expects a probability in (0, 1]");
    const double p = std::max(p_true, kProbFloor);
    return -cfg.alpha * std::pow(1.0 - p, cfg.gamma) * std::log(p);
}

Tensor focal_elementwise(const Tensor& scores, const Tensor& targets, const FocalConfig& cfg) {
    if (scores.shape() != targets.shape())
        fail("dim-mismatch", "focal_elementwise: score/target shapes differ");
    // p = y s + (1 - y)(1 - s)
    Tensor one_minus_targets = add_const(scale(targets, -1.0), 1.0);
    Tensor one_minus_scores = add_const(scale(scores, -1.0), 1.0);
    Tensor p = add(mul(targets, scores), mul(one_minus_targets, one_minus_scores));
    Tensor pc = clamp_min(p, kProbFloor);
    Tensor modulator = pow_const(add_const(scale(pc, -1.0), 1.0), cfg.gamma);
    return scale(mul(modulator, log_of(pc)), -cfg.alpha);
}

} // namespace thyme
