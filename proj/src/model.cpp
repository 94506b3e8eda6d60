#include "thyme/model.hpp"

#include <algorithm>
#include <set>

#include "thyme/error.hpp"

namespace thyme {

namespace {

const char* kDoubleTypeNames[3] = {"position", "interaction", "relation"};
const char* kSingleTypeNames[2] = {"appearance", "situation"};

constexpr IType kDoubleTypes[3] = {IType::Position, IType::Interaction, IType::Relation};
constexpr IType kSingleTypes[2] = {IType::Appearance, IType::Situation};

} // namespace

ThymeModel::ThymeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    const long d = cfg.d0;
    const long da = cfg.attn_dim();
    const long m = cfg.head_width;
    const long la = cfg.active_levels();
    const long ffn = 4 * d;

    for (long l = 1; l <= la; ++l) {
        const std::string tag = "hier.l" + std::to_string(l);
        params_.add_uniform(tag + ".w", {d, d}, d, seed);
        params_.add_uniform(tag + ".b", {1, d}, d, seed);
    }

    params_.add_uniform("temporal.wq", {da, d}, d, seed);
    params_.add_uniform("temporal.wk", {da, d}, d, seed);
    params_.add_uniform("temporal.wv", {da, d}, d, seed);
    params_.add_uniform("temporal.proj.w", {d, da}, da, seed);
    params_.add_uniform("temporal.proj.b", {1, d}, da, seed);
    params_.add_constant("temporal.ln1.gain", {1, d}, 1.0);
    params_.add_constant("temporal.ln1.bias", {1, d}, 0.0);
    params_.add_uniform("temporal.ffn.w1", {ffn, d}, d, seed);
    params_.add_uniform("temporal.ffn.b1", {1, ffn}, d, seed);
    params_.add_uniform("temporal.ffn.w2", {d, ffn}, ffn, seed);
    params_.add_uniform("temporal.ffn.b2", {1, d}, ffn, seed);
    params_.add_constant("temporal.ln2.gain", {1, d}, 1.0);
    params_.add_constant("temporal.ln2.bias", {1, d}, 0.0);

    for (long k = 1; k <= la; ++k) {
        const std::string tag = "head.l" + std::to_string(k);
        params_.add_uniform(tag + ".sub.w", {m, d}, d, seed);
        params_.add_uniform(tag + ".obj.w", {m, d}, d, seed);
    }
    params_.add_uniform("head.z.sub.w", {m, d}, d, seed);
    params_.add_uniform("head.z.obj.w", {m, d}, d, seed);
    params_.add_uniform("head.gate.w", {2 * m, 2 * m}, 2 * m, seed);

    for (int t = 0; t < 3; ++t) {
        const long c = cfg.vocab_sizes[static_cast<std::size_t>(
            static_cast<int>(kDoubleTypes[t]))];
        const std::string tag = std::string("head.rel.") + kDoubleTypeNames[t];
        params_.add_uniform(tag + ".w1", {m, 2 * m}, 2 * m, seed);
        params_.add_uniform(tag + ".b1", {1, m}, 2 * m, seed);
        params_.add_uniform(tag + ".w2", {c, m}, m, seed);
        params_.add_uniform(tag + ".b2", {1, c}, m, seed);
    }
    for (int t = 0; t < 2; ++t) {
        const long c = cfg.vocab_sizes[static_cast<std::size_t>(
            static_cast<int>(kSingleTypes[t]))];
        const std::string tag = std::string("head.node.") + kSingleTypeNames[t];
        params_.add_uniform(tag + ".w1", {m, d}, d, seed);
        params_.add_uniform(tag + ".b1", {1, m}, d, seed);
        params_.add_uniform(tag + ".w2", {c, m}, m, seed);
        params_.add_uniform(tag + ".b2", {1, c}, m, seed);
    }
}

void ThymeModel::set_vocab(PredicateVocab vocab) {
    for (int t = 0; t < kNumTypes; ++t)
        if (static_cast<long>(vocab.names[static_cast<std::size_t>(t)].size()) !=
            cfg_.vocab_sizes[static_cast<std::size_t>(t)])
            fail("vocab-mismatch",
                 std::string("vocabulary size for ") + type_key(static_cast<IType>(t)) +
                     " does not match the model head");
    vocab_ = std::move(vocab);
}

HierarchyParams ThymeModel::hier_params() const {
    HierarchyParams hp;
    for (long l = 1; l <= cfg_.active_levels(); ++l) {
        const std::string tag = "hier.l" + std::to_string(l);
        hp.w.push_back(&params_.get(tag + ".w"));
        hp.b.push_back(&params_.get(tag + ".b"));
    }
    return hp;
}

RefineParams ThymeModel::refine_params() const {
    RefineParams rp;
    rp.wq = &params_.get("temporal.wq");
    rp.wk = &params_.get("temporal.wk");
    rp.wv = &params_.get("temporal.wv");
    rp.encoder.proj_w = &params_.get("temporal.proj.w");
    rp.encoder.proj_b = &params_.get("temporal.proj.b");
    rp.encoder.ln1_gain = &params_.get("temporal.ln1.gain");
    rp.encoder.ln1_bias = &params_.get("temporal.ln1.bias");
    rp.encoder.ffn_w1 = &params_.get("temporal.ffn.w1");
    rp.encoder.ffn_b1 = &params_.get("temporal.ffn.b1");
    rp.encoder.ffn_w2 = &params_.get("temporal.ffn.w2");
    rp.encoder.ffn_b2 = &params_.get("temporal.ffn.b2");
    rp.encoder.ln2_gain = &params_.get("temporal.ln2.gain");
    rp.encoder.ln2_bias = &params_.get("temporal.ln2.bias");
    rp.encoder.ln_eps = cfg_.ln_eps;
    return rp;
}

MlpParams ThymeModel::edge_mlp(int t) const {
    const std::string tag = std::string("head.rel.") + kDoubleTypeNames[t];
    return {&params_.get(tag + ".w1"), &params_.get(tag + ".b1"), &params_.get(tag + ".w2"),
            &params_.get(tag + ".b2")};
}

MlpParams ThymeModel::node_mlp(int t) const {
    const std::string tag = std::string("head.node.") + kSingleTypeNames[t];
    return {&params_.get(tag + ".w1"), &params_.get(tag + ".b1"), &params_.get(tag + ".w2"),
            &params_.get(tag + ".b2")};
}

ThymeModel::Forward ThymeModel::forward(const FeatureVideo& video) const {
    Forward fwd;
    const long la = cfg_.active_levels();
    const HierarchyParams hp = hier_params();

    std::map<long, std::vector<std::pair<long, long>>> track_rows;
    for (const FrameSet& fs : video.frames) {
        std::vector<long> tracks;
        std::vector<double> flat;
        flat.reserve(fs.instances.size() * static_cast<std::size_t>(cfg_.d0));
        for (std::size_t i = 0; i < fs.instances.size(); ++i) {
            const ObjectInstance& obj = fs.instances[i];
            if (static_cast<long>(obj.embedding.size()) != cfg_.d0)
                fail("feature-dim-mismatch", "embedding length does not match the model d0");
            tracks.push_back(obj.track);
            flat.insert(flat.end(), obj.embedding.begin(), obj.embedding.end());
            track_rows[obj.track].emplace_back(fs.frame, static_cast<long>(i));
        }
        Tensor emb = Tensor::from({static_cast<long>(fs.instances.size()), cfg_.d0}, std::move(flat));
        fwd.frame_tracks.push_back(std::move(tracks));
        fwd.levels.push_back(run_hierarchy(emb, hp, la));
    }

    std::vector<Tensor> top_level;
    top_level.reserve(fwd.levels.size());
    for (const auto& lv : fwd.levels) top_level.push_back(lv.back());

    CyclicConfig ccfg{cfg_.window_frac, cfg_.attention, cfg_.attn_dim(), cfg_.pool};
    fwd.tracks = refine_tracks(top_level, track_rows, ccfg, refine_params());
    for (const auto& [track, seq] : fwd.tracks) fwd.track_ids.push_back(track);

    // node attribute heads over the refined summaries
    Tensor summaries;
    if (!fwd.track_ids.empty()) {
        std::vector<Tensor> rows;
        rows.reserve(fwd.track_ids.size());
        for (long track : fwd.track_ids) rows.push_back(fwd.tracks.at(track).summary);
        summaries = concat_rows(rows);
    }
    for (int t = 0; t < 2; ++t) {
        const long c = cfg_.vocab_sizes[static_cast<std::size_t>(static_cast<int>(kSingleTypes[t]))];
        fwd.node_scores[static_cast<std::size_t>(t)] =
            summaries.defined() ? node_attribute_scores(summaries, node_mlp(t))
                                : Tensor::zeros({0, c});
    }

    // relation head, deep-supervised per level prefix
    const Parameter& wg = params_.get("head.gate.w");
    const Parameter& ws_z = params_.get("head.z.sub.w");
    const Parameter& wo_z = params_.get("head.z.obj.w");

    fwd.edge_scores.assign(static_cast<std::size_t>(la), {});
    for (long l = 0; l < la; ++l)
        fwd.edge_scores[static_cast<std::size_t>(l)].resize(video.frames.size());

    for (std::size_t t = 0; t < video.frames.size(); ++t) {
        const long n = static_cast<long>(fwd.frame_tracks[t].size());

        // Z: refined per-track summaries broadcast to the frame's instances
        Tensor z;
        if (n > 0) {
            std::vector<Tensor> rows;
            rows.reserve(static_cast<std::size_t>(n));
            for (long track : fwd.frame_tracks[t]) rows.push_back(fwd.tracks.at(track).summary);
            z = concat_rows(rows);
        } else {
            z = Tensor::zeros({0, cfg_.d0});
        }
        Tensor rep_z = pair_representation(z, z, ws_z, wo_z);
        Tensor gate_z = gate(rep_z, wg);

        std::vector<Tensor> reps, gates;
        reps.reserve(static_cast<std::size_t>(la));
        gates.reserve(static_cast<std::size_t>(la));
        for (long k = 1; k <= la; ++k) {
            const std::string tag = "head.l" + std::to_string(k);
            const Tensor& fk = fwd.levels[t][static_cast<std::size_t>(k)];
            Tensor rep = pair_representation(fk, fk, params_.get(tag + ".sub.w"),
                                             params_.get(tag + ".obj.w"));
            gates.push_back(gate(rep, wg));
            reps.push_back(std::move(rep));

            for (int dt = 0; dt < 3; ++dt) {
                std::vector<Tensor> prefix_reps(reps.begin(), reps.end());
                std::vector<Tensor> prefix_gates(gates.begin(), gates.end());
                fwd.edge_scores[static_cast<std::size_t>(k - 1)][t][static_cast<std::size_t>(dt)] =
                    fuse_and_score(prefix_reps, prefix_gates, rep_z, gate_z, edge_mlp(dt));
            }
        }
    }
    return fwd;
}

namespace {

// target matrix [N*N x C] for one frame and one double-actor type
Tensor edge_targets(const std::vector<long>& frame_tracks, const std::vector<EdgeAnn>& edges,
                    IType type, const PredicateVocab& vocab) {
    const long n = static_cast<long>(frame_tracks.size());
    const long c = vocab.size(type);
    std::vector<double> y(static_cast<std::size_t>(n * n * c), 0.0);
    std::map<long, long> row_of;
    for (long i = 0; i < n; ++i) row_of[frame_tracks[static_cast<std::size_t>(i)]] = i;
    for (const EdgeAnn& e : edges) {
        const std::vector<std::string>* preds = nullptr;
        if (type == IType::Position) preds = &e.position;
        else if (type == IType::Interaction) preds = &e.interaction;
        else preds = &e.relation;
        if (preds->empty()) continue;
        auto si = row_of.find(e.sub);
        auto oi = row_of.find(e.obj);
        if (si == row_of.end() || oi == row_of.end())
            fail("annotation-feature-mismatch",
                 "gold edge references a track missing from the feature frame");
        for (const std::string& p : *preds) {
            const long pid = vocab.id(type, p);
            y[static_cast<std::size_t>((si->second * n + oi->second) * c + pid)] = 1.0;
        }
    }
    return Tensor::from({n * n, c}, std::move(y));
}

// mask zeroing the diagonal (self-pair) rows
Tensor offdiag_mask(long n, long c) {
    std::vector<double> m(static_cast<std::size_t>(n * n * c), 1.0);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < c; ++j) m[static_cast<std::size_t>((i * n + i) * c + j)] = 0.0;
    return Tensor::from({n * n, c}, std::move(m));
}

} // namespace

Tensor ThymeModel::video_loss(const Forward& fwd, const std::vector<AnnotationRecord>& gold,
                              const FocalConfig& focal) const {
    const long la = cfg_.active_levels();

    std::map<long, const AnnotationRecord*> by_frame;
    for (const AnnotationRecord& r : gold) by_frame[r.frame] = &r;

    // video-level node targets: union of per-frame node predicates
    std::map<long, long> node_row;
    for (std::size_t i = 0; i < fwd.track_ids.size(); ++i)
        node_row[fwd.track_ids[i]] = static_cast<long>(i);
    std::array<Tensor, 2> node_targets;
    for (int st = 0; st < 2; ++st) {
        const IType type = kSingleTypes[st];
        const long c = cfg_.vocab_sizes[static_cast<std::size_t>(static_cast<int>(type))];
        std::vector<double> y(fwd.track_ids.size() * static_cast<std::size_t>(c), 0.0);
        for (const AnnotationRecord& r : gold)
            for (const NodeAnn& n : r.nodes) {
                auto it = node_row.find(n.track);
                if (it == node_row.end())
                    fail("annotation-feature-mismatch",
                         "gold node references a track missing from the features");
                const auto& preds = type == IType::Appearance ? n.appearance : n.situation;
                for (const std::string& p : preds)
                    y[static_cast<std::size_t>(it->second * c + vocab_.id(type, p))] = 1.0;
            }
        node_targets[static_cast<std::size_t>(st)] =
            Tensor::from({static_cast<long>(fwd.track_ids.size()), c}, std::move(y));
    }

    std::vector<Tensor> level_losses;
    for (long l = 0; l < la; ++l) {
        std::vector<Tensor> sums;
        long slots = 0;
        for (std::size_t t = 0; t < fwd.frame_tracks.size(); ++t) {
            const long n = static_cast<long>(fwd.frame_tracks[t].size());
            if (n < 2) continue;
            auto rec_it = by_frame.find(static_cast<long>(t));
            static const std::vector<EdgeAnn> no_edges;
            const std::vector<EdgeAnn>& edges =
                rec_it != by_frame.end() ? rec_it->second->edges : no_edges;
            for (int dt = 0; dt < 3; ++dt) {
                const IType type = kDoubleTypes[dt];
                const long c = cfg_.vocab_sizes[static_cast<std::size_t>(static_cast<int>(type))];
                Tensor targets = edge_targets(fwd.frame_tracks[t], edges, type, vocab_);
                const Tensor& scores =
                    fwd.edge_scores[static_cast<std::size_t>(l)][t][static_cast<std::size_t>(dt)];
                Tensor elem = focal_elementwise(scores, targets, focal);
                sums.push_back(sum_all(mul(elem, offdiag_mask(n, c))));
                slots += (n * n - n) * c;
            }
        }
        for (int st = 0; st < 2; ++st) {
            const Tensor& scores = fwd.node_scores[static_cast<std::size_t>(st)];
            if (scores.rows() == 0) continue;
            sums.push_back(
                sum_all(focal_elementwise(scores, node_targets[static_cast<std::size_t>(st)], focal)));
            slots += scores.rows() * scores.cols();
        }
        if (slots == 0) {
            level_losses.push_back(Tensor::scalar(0.0));
            continue;
        }
        Tensor total = sums[0];
        for (std::size_t i = 1; i < sums.size(); ++i) total = add(total, sums[i]);
        level_losses.push_back(scale(total, 1.0 / static_cast<double>(slots)));
    }

    Tensor loss = level_losses[0];
    for (std::size_t l = 1; l < level_losses.size(); ++l) loss = add(loss, level_losses[l]);
    return loss;
}

std::array<std::vector<ScoredTriplet>, kNumTypes> ThymeModel::predict(const Forward& fwd,
                                                                      long max_k) const {
    std::array<std::vector<ScoredTriplet>, kNumTypes> out;

    // double-actor types from the full (all active levels) fusion
    const auto& full = fwd.edge_scores.back();
    for (int dt = 0; dt < 3; ++dt) {
        const IType type = kDoubleTypes[dt];
        const long c = cfg_.vocab_sizes[static_cast<std::size_t>(static_cast<int>(type))];
        std::vector<ScoredTriplet> candidates;
        for (std::size_t t = 0; t < fwd.frame_tracks.size(); ++t) {
            const long n = static_cast<long>(fwd.frame_tracks[t].size());
            if (n < 2) continue;
            const Tensor& scores = full[t][static_cast<std::size_t>(dt)];
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < n; ++j) {
                    if (i == j) continue; // no self-edges
                    for (long p = 0; p < c; ++p)
                        candidates.push_back({static_cast<long>(t),
                                              fwd.frame_tracks[t][static_cast<std::size_t>(i)],
                                              fwd.frame_tracks[t][static_cast<std::size_t>(j)], p,
                                              scores.value_at((i * n + j) * c + p)});
                }
        }
        out[static_cast<std::size_t>(static_cast<int>(type))] = top_k(std::move(candidates), max_k);
    }

    // single-actor types, one entry per (track, predicate)
    for (int st = 0; st < 2; ++st) {
        const IType type = kSingleTypes[st];
        const long c = cfg_.vocab_sizes[static_cast<std::size_t>(static_cast<int>(type))];
        const Tensor& scores = fwd.node_scores[static_cast<std::size_t>(st)];
        std::vector<ScoredTriplet> candidates;
        for (std::size_t r = 0; r < fwd.track_ids.size(); ++r)
            for (long p = 0; p < c; ++p)
                candidates.push_back(
                    {-1, fwd.track_ids[r], -1, p, scores.value_at(static_cast<long>(r) * c + p)});
        out[static_cast<std::size_t>(static_cast<int>(type))] = top_k(std::move(candidates), max_k);
    }
    return out;
}

std::array<std::vector<GoldTriplet>, kNumTypes> ThymeModel::gold_tuples(
    const std::vector<AnnotationRecord>& gold) const {
    std::array<std::vector<GoldTriplet>, kNumTypes> out;
    std::array<std::set<GoldTriplet>, 2> node_sets;
    for (const AnnotationRecord& r : gold) {
        for (const EdgeAnn& e : r.edges) {
            for (const std::string& p : e.position)
                out[static_cast<int>(IType::Position)].push_back(
                    {r.frame, e.sub, e.obj, vocab_.id(IType::Position, p)});
            for (const std::string& p : e.interaction)
                out[static_cast<int>(IType::Interaction)].push_back(
                    {r.frame, e.sub, e.obj, vocab_.id(IType::Interaction, p)});
            for (const std::string& p : e.relation)
                out[static_cast<int>(IType::Relation)].push_back(
                    {r.frame, e.sub, e.obj, vocab_.id(IType::Relation, p)});
        }
        for (const NodeAnn& n : r.nodes) {
            for (const std::string& p : n.appearance)
                node_sets[0].insert({-1, n.track, -1, vocab_.id(IType::Appearance, p)});
            for (const std::string& p : n.situation)
                node_sets[1].insert({-1, n.track, -1, vocab_.id(IType::Situation, p)});
        }
    }
    out[static_cast<int>(IType::Appearance)].assign(node_sets[0].begin(), node_sets[0].end());
    out[static_cast<int>(IType::Situation)].assign(node_sets[1].begin(), node_sets[1].end());
    return out;
}

Tensor batch_loss(const ThymeModel& model, const std::vector<ThymeModel::Forward>& forwards,
                  const std::vector<const std::vector<AnnotationRecord>*>& golds,
                  const FocalConfig& focal) {
    if (forwards.empty() || forwards.size() != golds.size())
        fail("invalid-config-value", "batch_loss needs matching non-empty forwards and golds");
    Tensor total = model.video_loss(forwards[0], *golds[0], focal);
    for (std::size_t i = 1; i < forwards.size(); ++i)
        total = add(total, model.video_loss(forwards[i], *golds[i], focal));
    return scale(total, 1.0 / static_cast<double>(forwards.size()));
}

} // namespace thyme
