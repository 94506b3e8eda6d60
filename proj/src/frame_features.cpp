#include "thyme/frame_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "thyme/error.hpp"
#include "thyme/rng.hpp"

namespace thyme {

using nlohmann::json;

FeatureVideo load_precomputed(const std::string& path, long d0) {
    std::ifstream in(path);
    if (!in) fail("missing-file", "cannot open features '" + path + "'");

    FeatureVideo video;
    std::string line;
    long line_no = 0;
    long declared_frames = -1;
    std::set<std::pair<long, long>> seen; // (frame, track)
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            fail("malformed-json-line", "invalid JSON (line " + std::to_string(line_no) + ")");
        if (declared_frames < 0) {
            if (!j.contains("d0") || !j.contains("frames"))
                fail("malformed-header", "feature file must start with a {d0, frames} header");
            const long file_d0 = j.at("d0").get<long>();
            if (file_d0 != d0)
                fail("feature-dim-mismatch", "file declares d0=" + std::to_string(file_d0) +
                                                 ", loader expects d0=" + std::to_string(d0));
            declared_frames = j.at("frames").get<long>();
            if (declared_frames < 0) fail("malformed-header", "negative frame count");
            video.d0 = d0;
            video.frames.resize(static_cast<std::size_t>(declared_frames));
            for (long t = 0; t < declared_frames; ++t)
                video.frames[static_cast<std::size_t>(t)].frame = t;
            continue;
        }
        ObjectInstance obj;
        try {
            const std::string vid = j.at("video").get<std::string>();
            if (video.video.empty())
                video.video = vid;
            else if (video.video != vid)
                fail("mixed-video", "feature file holds more than one video id (line " +
                                        std::to_string(line_no) + ")");
            obj.frame = j.at("frame").get<long>();
            obj.track = j.at("track").get<long>();
            const auto& bb = j.at("bbox");
            for (int i = 0; i < 4; ++i) obj.bbox[static_cast<std::size_t>(i)] = bb.at(i).get<double>();
            obj.embedding = j.at("emb").get<std::vector<double>>();
        } catch (const json::exception& ex) {
            fail("malformed-json-line", std::string(ex.what()) + " (line " + std::to_string(line_no) + ")");
        }
        if (static_cast<long>(obj.embedding.size()) != d0)
            fail("feature-dim-mismatch", "embedding length " + std::to_string(obj.embedding.size()) +
                                             " != d0 (line " + std::to_string(line_no) + ")");
        if (obj.frame < 0 || obj.frame >= declared_frames)
            fail("non-contiguous-frames", "frame " + std::to_string(obj.frame) +
                                              " outside 0.." + std::to_string(declared_frames - 1) +
                                              " (line " + std::to_string(line_no) + ")");
        if (!(obj.bbox[0] >= 0.0 && obj.bbox[1] >= 0.0 && obj.bbox[0] + obj.bbox[2] <= 1.0 &&
              obj.bbox[1] + obj.bbox[3] <= 1.0))
            fail("invalid-bbox", "bbox outside the unit square (line " + std::to_string(line_no) + ")");
        if (!seen.insert({obj.frame, obj.track}).second)
            fail("duplicate-track", "track " + std::to_string(obj.track) + " repeated in frame " +
                                        std::to_string(obj.frame) + " (line " + std::to_string(line_no) + ")");
        video.frames[static_cast<std::size_t>(obj.frame)].instances.push_back(std::move(obj));
    }
    if (declared_frames < 0) fail("malformed-header", "'" + path + "' lacks the {d0, frames} header");
    return video;
}

void write_features(const std::string& path, const FeatureVideo& video) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("io-write", "cannot open '" + path + "' for writing");
    json header = {{"d0", video.d0}, {"frames", static_cast<long>(video.frames.size())}};
    out << header.dump() << '\n';
    for (const FrameSet& fs : video.frames) {
        for (const ObjectInstance& obj : fs.instances) {
            json j = {{"video", video.video},
                      {"frame", obj.frame},
                      {"track", obj.track},
                      {"bbox", obj.bbox},
                      {"emb", obj.embedding}};
            out << j.dump() << '\n';
        }
    }
    if (!out) fail("io-write", "failed writing '" + path + "'");
}

// ---- synthetic generator ---------------------------------------------------

namespace {

constexpr long kMinSynthDim = 24;
constexpr double kNoiseSigma = 0.1;
constexpr double kBoxSize = 0.08;

// Embedding block layout (before noise):
//   [0..3]   appearance class one-hot
//   [4..5]   environment one-hot (rural, urban)
//   [6..7]   time-of-day one-hot (day, night)
//   [8..11]  bbox x, y, w, h
//   [12]     scripted phase flag
//   [13..19] role one-hot
enum Role : int {
    kChaseMover = 0,
    kChaseAnchor = 1,
    kConvoyAnchor = 2,
    kConvoyMover = 3,
    kStaticAnchor = 4,
    kStaticMover = 5,
    kBystander = 6,
};

const std::vector<std::string> kAppearance = {"angular", "compact", "elongated", "rounded"};
const std::vector<std::string> kSituation = {"day", "night", "rural", "urban"};
const std::vector<std::string> kPosition = {"above", "below", "left_of", "right_of"};
const std::vector<std::string> kInteraction = {"approaching", "chasing", "following", "idling"};
const std::vector<std::string> kRelation = {"escorting", "grouped_with", "pursuing"};

struct ObjectScript {
    long track;
    Role role;
    // center position at frame t
    double cx0, cy0, vx, vy;
};

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

std::array<double, 4> center_to_bbox(double cx, double cy) {
    const double x = clampd(cx - kBoxSize / 2, 0.0, 1.0 - kBoxSize);
    const double y = clampd(cy - kBoxSize / 2, 0.0, 1.0 - kBoxSize);
    return {x, y, kBoxSize, kBoxSize};
}

std::string position_predicate(const std::array<double, 4>& sub, const std::array<double, 4>& obj) {
    const double dx = (sub[0] + sub[2] / 2) - (obj[0] + obj[2] / 2);
    const double dy = (sub[1] + sub[3] / 2) - (obj[1] + obj[3] / 2);
    if (std::abs(dx) >= std::abs(dy)) return dx < 0 ? "left_of" : "right_of";
    return dy < 0 ? "above" : "below";
}

} // namespace

long chase_switch_frame(long frames) { return frames / 2; }

PredicateVocab synthetic_vocab() {
    PredicateVocab v;
    v.names[static_cast<int>(IType::Appearance)] = kAppearance;
    v.names[static_cast<int>(IType::Situation)] = kSituation;
    v.names[static_cast<int>(IType::Position)] = kPosition;
    v.names[static_cast<int>(IType::Interaction)] = kInteraction;
    v.names[static_cast<int>(IType::Relation)] = kRelation;
    return v;
}

SynthVideo synth_video(std::uint64_t seed, long frames, long max_objects, long d0,
                       const std::string& scenario, const std::string& video_id) {
    if (frames < 1) fail("invalid-config-value", "synth needs frames >= 1");
    if (max_objects < 1) fail("invalid-config-value", "synth needs max_objects >= 1");
    if (d0 < kMinSynthDim)
        fail("invalid-config-value",
             "synthetic embeddings need d0 >= " + std::to_string(kMinSynthDim));
    if (scenario != "chase" && scenario != "convoy" && scenario != "static")
        fail("invalid-config-value", "unknown scenario '" + scenario + "'");

    Rng rng(seed_for(seed, "synth." + video_id));
    const int env = static_cast<int>(rng.uniform_int(0, 1));  // 0 rural, 1 urban
    const int tod = static_cast<int>(rng.uniform_int(0, 1));  // 0 day, 1 night
    const std::string env_name = env == 0 ? "rural" : "urban";
    const std::string tod_name = tod == 0 ? "day" : "night";

    std::vector<ObjectScript> objects;
    const long n = std::min<long>(max_objects, 4);
    if (scenario == "chase") {
        objects.push_back({0, kChaseAnchor, 0.35, 0.55, 0.055, 0.0});
        if (n >= 2) objects.push_back({1, kChaseMover, 0.13, 0.45, 0.065, 0.0});
        if (n >= 3) objects.push_back({2, kBystander, 0.78, 0.15, 0.0, 0.0});
        if (n >= 4) objects.push_back({3, kBystander, 0.12, 0.85, 0.0, 0.0});
    } else if (scenario == "convoy") {
        for (long i = 0; i < n; ++i)
            objects.push_back({i, i == 0 ? kConvoyAnchor : kConvoyMover, 0.12, 0.2 + 0.19 * static_cast<double>(i),
                               0.055, 0.0});
    } else { // static
        for (long i = 0; i < n; ++i) {
            Role r = i == 0 ? kStaticAnchor : (i == 1 ? kStaticMover : kBystander);
            objects.push_back({i, r, 0.15 + 0.22 * static_cast<double>(i), 0.6, 0.0, 0.0});
        }
    }

    const long t_switch = chase_switch_frame(frames);
    SynthVideo out;
    out.features.video = video_id;
    out.features.d0 = d0;
    const double t_span = std::max<double>(1.0, static_cast<double>(frames - 1));
    const double t_scale = std::min(1.0, 7.0 / t_span); // keep long videos inside the unit square

    for (long t = 0; t < frames; ++t) {
        FrameSet fs;
        fs.frame = t;
        AnnotationRecord rec;
        rec.video = video_id;
        rec.frame = t;

        const double phase = (scenario == "chase" && t >= t_switch) ? 1.0 : 0.0;
        std::vector<std::array<double, 4>> boxes(objects.size());
        for (std::size_t k = 0; k < objects.size(); ++k) {
            const ObjectScript& o = objects[k];
            const double jx = rng.uniform(-0.004, 0.004);
            const double jy = rng.uniform(-0.004, 0.004);
            const double cx = o.cx0 + o.vx * t_scale * static_cast<double>(t) + jx;
            const double cy = o.cy0 + o.vy * t_scale * static_cast<double>(t) + jy;
            boxes[k] = center_to_bbox(cx, cy);

            ObjectInstance inst;
            inst.track = o.track;
            inst.frame = t;
            inst.bbox = boxes[k];
            inst.embedding.assign(static_cast<std::size_t>(d0), 0.0);
            inst.embedding[static_cast<std::size_t>(o.track % 4)] = 1.0;
            inst.embedding[static_cast<std::size_t>(4 + env)] = 1.0;
            inst.embedding[static_cast<std::size_t>(6 + tod)] = 1.0;
            for (int i = 0; i < 4; ++i)
                inst.embedding[static_cast<std::size_t>(8 + i)] = boxes[k][static_cast<std::size_t>(i)];
            inst.embedding[12] = phase;
            inst.embedding[static_cast<std::size_t>(13 + static_cast<int>(o.role))] = 1.0;
            for (long i = 0; i < d0; ++i)
                inst.embedding[static_cast<std::size_t>(i)] += rng.normal(0.0, kNoiseSigma);
            fs.instances.push_back(std::move(inst));

            NodeAnn node;
            node.track = o.track;
            node.bbox = boxes[k];
            node.appearance = {kAppearance[static_cast<std::size_t>(o.track % 4)]};
            node.situation = {tod_name, env_name};
            std::sort(node.situation.begin(), node.situation.end());
            rec.nodes.push_back(std::move(node));
        }

        auto add_edge = [&](long sub, long obj, std::vector<std::string> interaction,
                            std::vector<std::string> relation) {
            EdgeAnn e;
            e.sub = sub;
            e.obj = obj;
            e.position = {position_predicate(boxes[static_cast<std::size_t>(sub)],
                                             boxes[static_cast<std::size_t>(obj)])};
            e.interaction = std::move(interaction);
            e.relation = std::move(relation);
            rec.edges.push_back(std::move(e));
        };

        if (scenario == "chase" && objects.size() >= 2) {
            add_edge(1, 0, {t < t_switch ? "approaching" : "chasing"}, {"pursuing"});
            add_edge(0, 1, {}, {});
        } else if (scenario == "convoy" && objects.size() >= 2) {
            add_edge(1, 0, {"following"}, {"escorting"});
            if (objects.size() >= 3) add_edge(2, 1, {"following"}, {"escorting"});
        } else if (scenario == "static" && objects.size() >= 2) {
            add_edge(1, 0, {"idling"}, {"grouped_with"});
            if (objects.size() >= 3) add_edge(2, 1, {}, {});
        }

        out.features.frames.push_back(std::move(fs));
        out.annotations.push_back(std::move(rec));
    }
    return out;
}

SynthDataset synth_dataset(std::uint64_t seed, long videos, long frames, long max_objects, long d0,
                           const std::string& scenario) {
    if (videos < 1) fail("invalid-config-value", "synth needs videos >= 1");
    static const std::vector<std::string> cycle = {"chase", "convoy", "static"};
    SynthDataset out;
    out.vocab = synthetic_vocab();
    for (long v = 0; v < videos; ++v) {
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%03ld", v);
        const std::string scen =
            scenario == "mixed" ? cycle[static_cast<std::size_t>(v % 3)] : scenario;
        out.videos.push_back(synth_video(seed, frames, max_objects, d0, scen, id));
    }
    return out;
}

} // namespace thyme
