#pragma once

#include <map>
#include <vector>

#include "thyme/params.hpp"
#include "thyme/tensor.hpp"

namespace thyme {

enum class AttentionKind { Cyclic, Standard };

struct CyclicConfig {
    double window_frac = 1.0; // 1/2, 3/4 or 1
    AttentionKind kind = AttentionKind::Cyclic;
    long d_a = 0;  // attention dimension
    long pool = 1; // frames per pooled step

    // w = max(1, round(window_frac * t_steps))
    long window(long t_steps) const;
};

// Mean over non-overlapping windows of length `pool` in track-local time;
// T' = ceil(present / pool). The tail window may be shorter.
Tensor temporal_pool(const Tensor& steps, long pool);

struct Qkv {
    Tensor q, k, v; // each [T' x d_a]
};

Qkv project_qkv(const Tensor& x, const Parameter& wq, const Parameter& wk, const Parameter& wv);

// Windowed temporal attention over a track sequence, scores scaled by
// 1/sqrt(d_a).
//   cyclic:   row t' attends positions (t'+tau) mod T' for tau in 0..w-1
//   standard: row t' attends positions max(0, t'-w+1)..t', no wraparound
Tensor cyclic_attention(const Tensor& q, const Tensor& k, const Tensor& v, long window,
                        AttentionKind kind);

// Exposed for tests that inspect normalization directly: the [T' x w] (cyclic)
// or ragged (standard, materialized as per-row tensors) attention rows.
std::vector<Tensor> attention_rows(const Tensor& q, const Tensor& k, long window,
                                   AttentionKind kind);

struct EncoderParams {
    const Parameter* proj_w; // [d x d_a]
    const Parameter* proj_b; // [1 x d]
    const Parameter* ln1_gain;
    const Parameter* ln1_bias;
    const Parameter* ffn_w1; // [4d x d]
    const Parameter* ffn_b1;
    const Parameter* ffn_w2; // [d x 4d]
    const Parameter* ffn_b2;
    const Parameter* ln2_gain;
    const Parameter* ln2_bias;
    double ln_eps = 1e-9;
};

// Y = LN(X + proj(attn)); out = LN(Y + FFN(Y)) with FFN = linear-relu-linear,
// hidden width 4d.
Tensor encoder_block(const Tensor& x, const Tensor& attn_out, const EncoderParams& params);

struct TrackSequence {
    long track = 0;
    std::vector<long> frames; // frames where the track is present, ascending
    Tensor steps;             // [T' x d] pooled inputs X
    Tensor refined;           // [T' x d] encoder output
    Tensor summary;           // [1 x d] mean over refined steps
};

struct TemporalBlockParams {
    const Parameter* wq;
    const Parameter* wk;
    const Parameter* wv;
    EncoderParams encoder;
};

// One attention projection + encoder block per entry; depth defaults to 1.
using RefineParams = std::vector<TemporalBlockParams>;

// Per-track refinement over top-level per-frame features. `rows` maps each
// track to its (frame, row-in-frame) appearances in time order.
std::map<long, TrackSequence> refine_tracks(
    const std::vector<Tensor>& top_level_per_frame,
    const std::map<long, std::vector<std::pair<long, long>>>& rows, const CyclicConfig& cfg,
    const RefineParams& params);

} // namespace thyme
