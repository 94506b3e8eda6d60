#pragma once

// Shared helpers for the unit suites: random tensors and a reverse-mode vs
// central-difference gradient comparison. The finite-difference side only ever
// calls forward evaluations, so it stays independent of the tape.

#include <functional>
#include <vector>

#include "thyme/rng.hpp"
#include "thyme/tensor.hpp"

namespace thyme::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Max relative error between the reverse-mode gradient of scalar_fn at x0 and
// the finite-difference oracle.
inline double grad_error(const std::function<Tensor(const Tensor&)>& scalar_fn, const Tensor& x0,
                         double h = 1e-5) {
    Tensor x = Tensor::from(x0.shape(), x0.values(), true);
    Tensor loss = scalar_fn(x);
    loss.backward();
    Tensor fd = finite_diff_grad(
        [&](const Tensor& t) { return scalar_fn(t).value_at(0); }, x0, h);
    return max_rel_error(x.grad(), fd.values());
}

// Fixed weights turn a tensor-valued op into a scalar objective with nonzero
// gradients everywhere. The weight tensor must be drawn once per objective so
// the finite-difference sweep sees the same function as the reverse pass.
inline Tensor weighted_sum(const Tensor& y, const Tensor& weights) {
    return sum_all(mul(y, weights));
}

} // namespace thyme::test
