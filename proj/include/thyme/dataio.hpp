#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace thyme {

// The five interactivity channels. Appearance and situation annotate single
// nodes; position, interaction and relation annotate ordered pairs.
enum class IType : int {
    Appearance = 0,
    Situation = 1,
    Position = 2,
    Interaction = 3,
    Relation = 4,
};

inline constexpr int kNumTypes = 5;
inline constexpr std::array<IType, 5> kAllTypes = {IType::Appearance, IType::Situation,
                                                   IType::Position, IType::Interaction,
                                                   IType::Relation};

const char* type_key(IType t);     // "appearance", ...
const char* type_label(IType t);   // "Appearance", ... (report rows)
bool is_double_actor(IType t);

// Ordered predicate names per type; ids are positions in the list.
struct PredicateVocab {
    std::array<std::vector<std::string>, kNumTypes> names;

    long size(IType t) const { return static_cast<long>(names[static_cast<int>(t)].size()); }
    long id(IType t, const std::string& name) const; // throws unknown-predicate
    const std::string& name(IType t, long id) const;
    bool operator==(const PredicateVocab&) const = default;
};

struct NodeAnn {
    long track = 0;
    std::array<double, 4> bbox{}; // x, y, w, h in [0,1]
    std::vector<std::string> appearance;
    std::vector<std::string> situation;
};

struct EdgeAnn {
    long sub = 0;
    long obj = 0;
    std::vector<std::string> position;
    std::vector<std::string> interaction;
    std::vector<std::string> relation;
};

// One annotated frame of one video.
struct AnnotationRecord {
    std::string video;
    long frame = 0;
    std::vector<NodeAnn> nodes;
    std::vector<EdgeAnn> edges;
};

// Enforces the schema invariants; `line` (1-based, 0 = unknown) feeds the
// error messages. Notable rules: every node carries non-empty appearance and
// situation lists; an edge with interaction or relation predicates must also
// carry a position predicate; position-only edges are legal.
void validate_record(const AnnotationRecord& rec, long line = 0);
void validate_records(const std::vector<AnnotationRecord>& records);

// JSON Lines file: header {"schema-version":1,"vocab":{...}} then one frame
// record per line. A header without a vocab is accepted; the vocabulary is
// then derived from the data (sorted names per type).
struct AnnotationData {
    std::vector<AnnotationRecord> records;
    PredicateVocab vocab;
};

AnnotationData parse_annotations(const std::string& path);
void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& records,
                       const PredicateVocab& vocab);

PredicateVocab vocab_from_records(const std::vector<AnnotationRecord>& records);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Disjoint split by video id, deterministic per seed. Fractions must sum to 1.
DatasetSplit split_dataset(const std::vector<AnnotationRecord>& records, std::uint64_t seed,
                           std::array<double, 3> fractions);

} // namespace thyme
