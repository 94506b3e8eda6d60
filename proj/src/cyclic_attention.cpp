#include "thyme/cyclic_attention.hpp"

#include <cmath>

#include "thyme/error.hpp"

namespace thyme {

long CyclicConfig::window(long t_steps) const {
    return std::max<long>(1, std::lround(window_frac * static_cast<double>(t_steps)));
}

Tensor temporal_pool(const Tensor& steps, long pool) {
    if (pool < 1) fail("invalid-config-value", "pool length must be >= 1");
    const long t = steps.rows();
    if (t == 0) fail("empty-track", "temporal_pool needs at least one step");
    if (pool == 1) return steps;
    const long t_out = (t + pool - 1) / pool;
    // Constant pooling matrix keeps the op differentiable through matmul.
    std::vector<double> m(static_cast<std::size_t>(t_out * t), 0.0);
    for (long r = 0; r < t_out; ++r) {
        const long lo = r * pool;
        const long hi = std::min(t, lo + pool);
        for (long c = lo; c < hi; ++c)
            m[static_cast<std::size_t>(r * t + c)] = 1.0 / static_cast<double>(hi - lo);
    }
    return matmul(Tensor::from({t_out, t}, std::move(m)), steps);
}

Qkv project_qkv(const Tensor& x, const Parameter& wq, const Parameter& wk, const Parameter& wv) {
    return {linear(x, wq.value, Tensor()), linear(x, wk.value, Tensor()),
            linear(x, wv.value, Tensor())};
}

namespace {

std::vector<long> window_indices(long t, long t_steps, long window, AttentionKind kind) {
    std::vector<long> idx;
    if (kind == AttentionKind::Cyclic) {
        idx.reserve(static_cast<std::size_t>(window));
        for (long tau = 0; tau < window; ++tau) idx.push_back((t + tau) % t_steps);
    } else {
        for (long p = std::max<long>(0, t - window + 1); p <= t; ++p) idx.push_back(p);
    }
    return idx;
}

void check_window(long window, long t_steps) {
    if (window < 1 || window > t_steps)
        fail("invalid-config-value", "window " + std::to_string(window) + " outside 1.." +
                                         std::to_string(t_steps));
}

} // namespace

std::vector<Tensor> attention_rows(const Tensor& q, const Tensor& k, long window,
                                   AttentionKind kind) {
    const long t_steps = q.rows();
    check_window(window, t_steps);
    const double inv_sqrt_da = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(t_steps));
    for (long t = 0; t < t_steps; ++t) {
        auto idx = window_indices(t, t_steps, window, kind);
        Tensor qt = gather_rows(q, {t});
        Tensor kw = gather_rows(k, idx);
        rows.push_back(softmax_rows(scale(matmul(qt, transpose(kw)), inv_sqrt_da)));
    }
    return rows;
}

Tensor cyclic_attention(const Tensor& q, const Tensor& k, const Tensor& v, long window,
                        AttentionKind kind) {
    const long t_steps = q.rows();
    check_window(window, t_steps);
    if (k.shape() != q.shape() || v.shape() != q.shape())
        fail("dim-mismatch", "cyclic_attention expects Q, K, V of identical shape");
    const double inv_sqrt_da = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(t_steps));
    for (long t = 0; t < t_steps; ++t) {
        auto idx = window_indices(t, t_steps, window, kind);
        Tensor qt = gather_rows(q, {t});
        Tensor kw = gather_rows(k, idx);
        Tensor vw = gather_rows(v, idx);
        Tensor alpha = softmax_rows(scale(matmul(qt, transpose(kw)), inv_sqrt_da));
        rows.push_back(matmul(alpha, vw));
    }
    return concat_rows(rows);
}

Tensor encoder_block(const Tensor& x, const Tensor& attn_out, const EncoderParams& p) {
    Tensor y = layer_norm_rows(add(x, linear(attn_out, p.proj_w->value, p.proj_b->value)),
                               p.ln1_gain->value, p.ln1_bias->value, p.ln_eps);
    Tensor hidden = relu(linear(y, p.ffn_w1->value, p.ffn_b1->value));
    Tensor ffn = linear(hidden, p.ffn_w2->value, p.ffn_b2->value);
    return layer_norm_rows(add(y, ffn), p.ln2_gain->value, p.ln2_bias->value, p.ln_eps);
}

std::map<long, TrackSequence> refine_tracks(
    const std::vector<Tensor>& top_level_per_frame,
    const std::map<long, std::vector<std::pair<long, long>>>& rows, const CyclicConfig& cfg,
    const RefineParams& params) {
    std::map<long, TrackSequence> out;
    for (const auto& [track, appearances] : rows) {
        if (appearances.empty()) fail("empty-track", "track " + std::to_string(track) + " never appears");
        TrackSequence seq;
        seq.track = track;
        std::vector<Tensor> steps;
        steps.reserve(appearances.size());
        for (const auto& [frame, row] : appearances) {
            seq.frames.push_back(frame);
            steps.push_back(gather_rows(top_level_per_frame[static_cast<std::size_t>(frame)], {row}));
        }
        seq.steps = temporal_pool(concat_rows(steps), cfg.pool);
        const long t_steps = seq.steps.rows();
        const long w = cfg.window(t_steps);
        Qkv qkv = project_qkv(seq.steps, *params.wq, *params.wk, *params.wv);
        Tensor attn = cyclic_attention(qkv.q, qkv.k, qkv.v, w, cfg.kind);
        seq.refined = encoder_block(seq.steps, attn, params.encoder);
        seq.summary = mean_rows(seq.refined);
        out.emplace(track, std::move(seq));
    }
    return out;
}

} // namespace thyme
