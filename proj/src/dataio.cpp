#include "thyme/dataio.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "thyme/error.hpp"
#include "thyme/rng.hpp"

namespace thyme {

using nlohmann::json;

const char* type_key(IType t) {
    switch (t) {
        case IType::Appearance: return "appearance";
        case IType::Situation: return "situation";
        case IType::Position: return "position";
        case IType::Interaction: return "interaction";
        case IType::Relation: return "relation";
    }
    return "?";
}

const char* type_label(IType t) {
    switch (t) {
        case IType::Appearance: return "Appearance";
        case IType::Situation: return "Situation";
        case IType::Position: return "Position";
        case IType::Interaction: return "Interaction";
        case IType::Relation: return "Relation";
    }
    return "?";
}

bool is_double_actor(IType t) {
    return t == IType::Position || t == IType::Interaction || t == IType::Relation;
}

long PredicateVocab::id(IType t, const std::string& name) const {
    const auto& list = names[static_cast<int>(t)];
    for (std::size_t i = 0; i < list.size(); ++i)
        if (list[i] == name) return static_cast<long>(i);
    fail("unknown-predicate", std::string("predicate '") + name + "' not in the " + type_key(t) +
                                  " vocabulary");
}

const std::string& PredicateVocab::name(IType t, long id) const {
    const auto& list = names[static_cast<int>(t)];
    if (id < 0 || id >= static_cast<long>(list.size()))
        fail("unknown-predicate", "predicate id out of range for " + std::string(type_key(t)));
    return list[static_cast<std::size_t>(id)];
}

namespace {

std::string at_line(long line) {
    return line > 0 ? " (line " + std::to_string(line) + ")" : "";
}

void check_bbox(const std::array<double, 4>& b, long line) {
    const double x = b[0], y = b[1], w = b[2], h = b[3];
    if (!(x >= 0.0 && y >= 0.0 && w >= 0.0 && h >= 0.0 && x + w <= 1.0 && y + h <= 1.0))
        fail("invalid-bbox", "bbox outside the unit square" + at_line(line));
}

} // namespace

void validate_record(const AnnotationRecord& rec, long line) {
    if (rec.frame < 0) fail("invalid-frame", "negative frame index" + at_line(line));
    std::set<long> tracks;
    for (const NodeAnn& n : rec.nodes) {
        if (!tracks.insert(n.track).second)
            fail("duplicate-track",
                 "track " + std::to_string(n.track) + " appears twice in frame " +
                     std::to_string(rec.frame) + at_line(line));
        check_bbox(n.bbox, line);
        if (n.appearance.empty() || n.situation.empty())
            fail("missing-node-attributes",
                 "track " + std::to_string(n.track) +
                     " lacks appearance or situation annotations" + at_line(line));
    }
    for (const EdgeAnn& e : rec.edges) {
        if (e.sub == e.obj)
            fail("self-edge", "edge from track " + std::to_string(e.sub) + " to itself" + at_line(line));
        if (!tracks.count(e.sub) || !tracks.count(e.obj))
            fail("missing-track-ref",
                 "edge (" + std::to_string(e.sub) + " -> " + std::to_string(e.obj) +
                     ") references a track absent from the frame" + at_line(line));
        if ((!e.interaction.empty() || !e.relation.empty()) && e.position.empty())
            fail("edge-requires-position",
                 "edge (" + std::to_string(e.sub) + " -> " + std::to_string(e.obj) +
                     ") has interaction/relation predicates but no position predicate" + at_line(line));
    }
}

void validate_records(const std::vector<AnnotationRecord>& records) {
    std::set<std::pair<std::string, long>> seen;
    for (const AnnotationRecord& r : records) {
        validate_record(r);
        if (!seen.insert({r.video, r.frame}).second)
            fail("duplicate-frame",
                 "video '" + r.video + "' annotates frame " + std::to_string(r.frame) + " twice");
    }
}

PredicateVocab vocab_from_records(const std::vector<AnnotationRecord>& records) {
    std::array<std::set<std::string>, kNumTypes> sets;
    for (const AnnotationRecord& r : records) {
        for (const NodeAnn& n : r.nodes) {
            sets[static_cast<int>(IType::Appearance)].insert(n.appearance.begin(), n.appearance.end());
            sets[static_cast<int>(IType::Situation)].insert(n.situation.begin(), n.situation.end());
        }
        for (const EdgeAnn& e : r.edges) {
            sets[static_cast<int>(IType::Position)].insert(e.position.begin(), e.position.end());
            sets[static_cast<int>(IType::Interaction)].insert(e.interaction.begin(), e.interaction.end());
            sets[static_cast<int>(IType::Relation)].insert(e.relation.begin(), e.relation.end());
        }
    }
    PredicateVocab vocab;
    for (int t = 0; t < kNumTypes; ++t) vocab.names[t].assign(sets[t].begin(), sets[t].end());
    return vocab;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key, long line) {
    if (!j.contains(key)) return {};
    if (!j.at(key).is_array())
        fail("malformed-json-line", std::string("'") + key + "' must be a list" + at_line(line));
    std::vector<std::string> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_string())
            fail("malformed-json-line", std::string("'") + key + "' entries must be strings" + at_line(line));
        out.push_back(v.get<std::string>());
    }
    return out;
}

AnnotationRecord record_from_json(const json& j, long line) {
    AnnotationRecord rec;
    try {
        rec.video = j.at("video").get<std::string>();
        rec.frame = j.at("frame").get<long>();
        for (const auto& nj : j.at("nodes")) {
            NodeAnn n;
            n.track = nj.at("track").get<long>();
            const auto& bb = nj.at("bbox");
            if (!bb.is_array() || bb.size() != 4)
                fail("malformed-json-line", "bbox must hold 4 numbers" + at_line(line));
            for (int i = 0; i < 4; ++i) n.bbox[static_cast<std::size_t>(i)] = bb.at(i).get<double>();
            n.appearance = string_list(nj, "appearance", line);
            n.situation = string_list(nj, "situation", line);
            rec.nodes.push_back(std::move(n));
        }
        if (j.contains("edges"))
            for (const auto& ej : j.at("edges")) {
                EdgeAnn e;
                e.sub = ej.at("sub").get<long>();
                e.obj = ej.at("obj").get<long>();
                e.position = string_list(ej, "position", line);
                e.interaction = string_list(ej, "interaction", line);
                e.relation = string_list(ej, "relation", line);
                rec.edges.push_back(std::move(e));
            }
    } catch (const json::exception& ex) {
        fail("malformed-json-line", std::string(ex.what()) + at_line(line));
    }
    return rec;
}

json record_to_json(const AnnotationRecord& rec) {
    json nodes = json::array();
    for (const NodeAnn& n : rec.nodes) {
        nodes.push_back({{"track", n.track},
                         {"bbox", n.bbox},
                         {"appearance", n.appearance},
                         {"situation", n.situation}});
    }
    json edges = json::array();
    for (const EdgeAnn& e : rec.edges) {
        edges.push_back({{"sub", e.sub},
                         {"obj", e.obj},
                         {"position", e.position},
                         {"interaction", e.interaction},
                         {"relation", e.relation}});
    }
    return {{"video", rec.video}, {"frame", rec.frame}, {"nodes", nodes}, {"edges", edges}};
}

PredicateVocab vocab_from_json(const json& j) {
    PredicateVocab vocab;
    for (IType t : kAllTypes) {
        const char* key = type_key(t);
        if (!j.contains(key)) fail("malformed-header", std::string("vocab lacks '") + key + "' list");
        for (const auto& v : j.at(key)) vocab.names[static_cast<int>(t)].push_back(v.get<std::string>());
        std::set<std::string> unique(vocab.names[static_cast<int>(t)].begin(),
                                     vocab.names[static_cast<int>(t)].end());
        if (unique.size() != vocab.names[static_cast<int>(t)].size())
            fail("malformed-header", std::string("duplicate names in '") + key + "' vocabulary");
    }
    return vocab;
}

json vocab_to_json(const PredicateVocab& vocab) {
    json j;
    for (IType t : kAllTypes) j[type_key(t)] = vocab.names[static_cast<int>(t)];
    return j;
}

void check_predicates_known(const AnnotationData& data) {
    for (const AnnotationRecord& r : data.records) {
        for (const NodeAnn& n : r.nodes) {
            for (const auto& p : n.appearance) data.vocab.id(IType::Appearance, p);
            for (const auto& p : n.situation) data.vocab.id(IType::Situation, p);
        }
        for (const EdgeAnn& e : r.edges) {
            for (const auto& p : e.position) data.vocab.id(IType::Position, p);
            for (const auto& p : e.interaction) data.vocab.id(IType::Interaction, p);
            for (const auto& p : e.relation) data.vocab.id(IType::Relation, p);
        }
    }
}

} // namespace

AnnotationData parse_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("missing-file", "cannot open annotations '" + path + "'");

    AnnotationData data;
    std::string line;
    long line_no = 0;
    bool have_header = false;
    bool header_vocab = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            fail("malformed-json-line", "invalid JSON" + at_line(line_no));
        if (!have_header) {
            if (!j.contains("schema-version") || j.at("schema-version") != 1)
                fail("malformed-header", "first line must declare schema-version 1");
            if (j.contains("vocab")) {
                data.vocab = vocab_from_json(j.at("vocab"));
                header_vocab = true;
            }
            have_header = true;
            continue;
        }
        AnnotationRecord rec = record_from_json(j, line_no);
        validate_record(rec, line_no);
        data.records.push_back(std::move(rec));
    }
    if (!have_header) fail("malformed-header", "'" + path + "' lacks the schema-version header line");
    validate_records(data.records);
    if (!header_vocab) data.vocab = vocab_from_records(data.records);
    check_predicates_known(data);
    return data;
}

void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& records,
                       const PredicateVocab& vocab) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("io-write", "cannot open '" + path + "' for writing");
    json header = {{"schema-version", 1}, {"vocab", vocab_to_json(vocab)}};
    out << header.dump() << '\n';
    for (const AnnotationRecord& rec : records) out << record_to_json(rec).dump() << '\n';
    if (!out) fail("io-write", "failed writing '" + path + "'");
}

DatasetSplit split_dataset(const std::vector<AnnotationRecord>& records, std::uint64_t seed,
                           std::array<double, 3> fractions) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        fail("invalid-fractions", "split fractions must sum to 1");
    if (records.empty()) fail("empty-dataset", "no records to split");

    std::vector<std::string> ids;
    for (const AnnotationRecord& r : records)
        if (std::find(ids.begin(), ids.end(), r.video) == ids.end()) ids.push_back(r.video);

    Rng rng(seed_for(seed, "dataset-split"));
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i) - 1))]);

    const long n = static_cast<long>(ids.size());
    long n_train = std::lround(fractions[0] * static_cast<double>(n));
    long n_val = std::lround(fractions[1] * static_cast<double>(n));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    DatasetSplit split;
    for (long i = 0; i < n; ++i) {
        if (i < n_train)
            split.train.push_back(ids[static_cast<std::size_t>(i)]);
        else if (i < n_train + n_val)
            split.val.push_back(ids[static_cast<std::size_t>(i)]);
        else
            split.test.push_back(ids[static_cast<std::size_t>(i)]);
    }
    return split;
}

} // namespace thyme
