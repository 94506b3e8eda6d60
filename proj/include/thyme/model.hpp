#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "thyme/cyclic_attention.hpp"
#include "thyme/dataio.hpp"
#include "thyme/focal_loss.hpp"
#include "thyme/frame_features.hpp"
#include "thyme/graph_head.hpp"
#include "thyme/hier_agg.hpp"
#include "thyme/metrics.hpp"
#include "thyme/params.hpp"

namespace thyme {

struct ModelConfig {
    long d0 = 64;
    long levels = 4;
    double factor = 1.0;
    AttentionKind attention = AttentionKind::Cyclic;
    double window_frac = 1.0;
    long pool = 1;
    long head_width = 32; // m: subject/object projection width
    long d_a = 0;         // attention dimension; 0 means d0
    double ln_eps = 1e-9;
    std::array<long, kNumTypes> vocab_sizes{};

    long active_levels() const { return HierarchyConfig{levels, factor}.active_levels(); }
    long attn_dim() const { return d_a > 0 ? d_a : d0; }
};

// The full pipeline: hierarchical aggregation, cyclic temporal refinement and
// the gated relation head, with one parameter store behind all of it.
//
// Without a detector front end, the head's decoder layers are the active
// hierarchy levels (layer k reads F^(k)) and the final-layer embedding Z is
// the cyclic-refined track summary broadcast to each frame's instances.
class ThymeModel {
public:
    ThymeModel(const ModelConfig& cfg, std::uint64_t seed);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

    struct Forward {
        // per frame: instance track ids in row order
        std::vector<std::vector<long>> frame_tracks;
        // per frame: levels 0..La of [N x d]
        std::vector<std::vector<Tensor>> levels;
        std::map<long, TrackSequence> tracks;
        std::vector<long> track_ids; // ascending
        // edge_scores[l-1][frame][double type] = [N*N x C] using levels 1..l
        std::vector<std::vector<std::array<Tensor, 3>>> edge_scores;
        // node_scores[0] appearance, [1] situation: [n_tracks x C]
        std::array<Tensor, 2> node_scores;
    };

    Forward forward(const FeatureVideo& video) const;

    // Deep supervision: level l's loss is the mean focal loss over every pair
    // and node slot, with edge scores taken from the gated fusion of levels
    // 1..l. The total is the sum over active levels; the top term trains the
    // exact inference path.
    Tensor video_loss(const Forward& fwd, const std::vector<AnnotationRecord>& gold,
                      const FocalConfig& focal) const;

    // Ranked predictions per type from the full (all-levels) fusion, truncated
    // to max_k per type.
    std::array<std::vector<ScoredTriplet>, kNumTypes> predict(const Forward& fwd,
                                                              long max_k) const;

    // Gold tuples in metric form: per-frame for double-actor types,
    // video-level (deduplicated) for node attributes.
    std::array<std::vector<GoldTriplet>, kNumTypes> gold_tuples(
        const std::vector<AnnotationRecord>& gold) const;

    const PredicateVocab& vocab() const { return vocab_; }
    void set_vocab(PredicateVocab vocab);

private:
    ModelConfig cfg_;
    PredicateVocab vocab_;
    ParamStore params_;

    HierarchyParams hier_params() const;
    RefineParams refine_params() const;
    MlpParams edge_mlp(int double_type_index) const; // 0 position, 1 interaction, 2 relation
    MlpParams node_mlp(int single_type_index) const; // 0 appearance, 1 situation
};

// Mean loss over a batch of videos.
Tensor batch_loss(const ThymeModel& model, const std::vector<ThymeModel::Forward>& forwards,
                  const std::vector<const std::vector<AnnotationRecord>*>& golds,
                  const FocalConfig& focal);

} // namespace thyme
