#include "thyme/hier_agg.hpp"

#include <cmath>

#include "thyme/error.hpp"

namespace thyme {

long HierarchyConfig::active_levels() const {
    if (levels < 1) fail("invalid-config-value", "hierarchy needs levels >= 1");
    return std::max<long>(1, std::lround(factor * static_cast<double>(levels)));
}

Tensor attention_weights(const Tensor& features) {
    const long n = features.rows();
    if (n == 0) return Tensor::zeros({0, 0});
    return softmax_rows(matmul(features, transpose(features)));
}

Tensor aggregate_level(const Tensor& f_prev, const Parameter& w, const Parameter& b) {
    if (f_prev.rows() == 0) return Tensor::zeros({0, w.value.rows()});
    Tensor a = attention_weights(f_prev);
    Tensor messages = linear(f_prev, w.value, b.value);
    return relu(attn_apply(a, messages));
}

std::vector<Tensor> run_hierarchy(const Tensor& embeddings, const HierarchyParams& params,
                                  long active_levels) {
    if (active_levels < 1 || active_levels > static_cast<long>(params.w.size()))
        fail("invalid-config-value", "active level count " + std::to_string(active_levels) +
                                         " exceeds allocated hierarchy depth");
    std::vector<Tensor> levels;
    levels.reserve(static_cast<std::size_t>(active_levels) + 1);
    levels.push_back(embeddings);
    for (long l = 0; l < active_levels; ++l)
        levels.push_back(aggregate_level(levels.back(), *params.w[static_cast<std::size_t>(l)],
                                         *params.b[static_cast<std::size_t>(l)]));
    return levels;
}

} // namespace thyme
