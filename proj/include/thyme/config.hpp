#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thyme/cyclic_attention.hpp"
#include "thyme/model.hpp"

namespace thyme {

// One JSON file drives every command. Unknown keys are rejected so typos
// cannot silently fall back to defaults.
struct RunConfig {
    std::uint64_t seed = 0;

    // model
    long d0 = 64;
    long levels = 4;
    double factor = 1.0;
    std::string attention = "cyclic"; // or "standard"
    double window_frac = 1.0;
    long pool = 1;
    long head_width = 32;
    long d_a = 0; // 0 = d0

    // loss / optimizer
    double alpha = 0.25;
    double gamma = 2.0;
    double lr = 8.0;
    long steps = 500;

    // evaluation
    std::vector<long> k_list = {20, 50, 100};

    // synthetic data
    long videos = 4;
    long frames = 8;
    long max_objects = 5;
    std::string scenario = "mixed";

    // paths
    std::string data_dir = "data";
    std::string out_dir = "out";

    AttentionKind attention_kind() const;
    ModelConfig model_config(const PredicateVocab& vocab) const;
    FocalConfig focal_config() const { return {alpha, gamma}; }

    std::string to_json() const;
    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
};

} // namespace thyme
