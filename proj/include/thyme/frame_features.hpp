#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "thyme/dataio.hpp"

namespace thyme {

// One detected/tracked object in one frame. Track identity is consumed as
// input; there is no tracker in this artifact.
struct ObjectInstance {
    long track = 0;
    long frame = 0;
    std::array<double, 4> bbox{}; // x, y, w, h normalized to [0,1]
    std::vector<double> embedding; // length d0
};

struct FrameSet {
    long frame = 0;
    std::vector<ObjectInstance> instances;
};

struct FeatureVideo {
    std::string video;
    long d0 = 0;
    std::vector<FrameSet> frames; // indexed contiguously 0..T-1
};

// JSON Lines: header {"d0":..,"frames":..}, then one object per line
// {"video":..,"frame":..,"track":..,"bbox":[..],"emb":[..]}. One file holds
// one video.
FeatureVideo load_precomputed(const std::string& path, long d0);
void write_features(const std::string& path, const FeatureVideo& video);

// ---- synthetic generator ---------------------------------------------------

// Deterministic stand-in for real footage. Embeddings are a fixed function of
// (appearance class, situation, bbox, scripted phase, role) plus seeded
// Gaussian noise (sigma 0.1), so every gold predicate is recoverable from the
// features. Requires d0 >= 24 to fit the encoded blocks.
struct SynthVideo {
    FeatureVideo features;
    std::vector<AnnotationRecord> annotations;
};

// Scenarios:
//   chase  - a mover pursues an anchor; the scripted interaction flips from
//            "approaching" to "chasing" at frame floor(T/2)
//   convoy - a moving column; consecutive members follow/escort
//   static - parked objects; one fully annotated pair plus a position-only edge
SynthVideo synth_video(std::uint64_t seed, long frames, long max_objects, long d0,
                       const std::string& scenario, const std::string& video_id);

// Scripted interaction switch frame for the chase scenario.
long chase_switch_frame(long frames);

// The fixed vocabulary every synthetic video draws from.
PredicateVocab synthetic_vocab();

struct SynthDataset {
    std::vector<SynthVideo> videos;
    PredicateVocab vocab;
};

// scenario "mixed" cycles chase/convoy/static across videos.
SynthDataset synth_dataset(std::uint64_t seed, long videos, long frames, long max_objects, long d0,
                           const std::string& scenario);

} // namespace thyme
