#include "thyme/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "thyme/error.hpp"

namespace thyme {

using nlohmann::json;

AttentionKind RunConfig::attention_kind() const {
    if (attention == "cyclic") return AttentionKind::Cyclic;
    if (attention == "standard") return AttentionKind::Standard;
    fail("invalid-config-value", "attention must be 'cyclic' or 'standard', got '" + attention + "'");
}

ModelConfig RunConfig::model_config(const PredicateVocab& vocab) const {
    ModelConfig mc;
    mc.d0 = d0;
    mc.levels = levels;
    mc.factor = factor;
    mc.attention = attention_kind();
    mc.window_frac = window_frac;
    mc.pool = pool;
    mc.head_width = head_width;
    mc.d_a = d_a;
    for (int t = 0; t < kNumTypes; ++t)
        mc.vocab_sizes[static_cast<std::size_t>(t)] =
            static_cast<long>(vocab.names[static_cast<std::size_t>(t)].size());
    return mc;
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["d0"] = d0;
    j["levels"] = levels;
    j["factor"] = factor;
    j["attention"] = attention;
    j["window_frac"] = window_frac;
    j["pool"] = pool;
    j["head_width"] = head_width;
    j["d_a"] = d_a;
    j["alpha"] = alpha;
    j["gamma"] = gamma;
    j["lr"] = lr;
    j["steps"] = steps;
    j["k_list"] = k_list;
    j["videos"] = videos;
    j["frames"] = frames;
    j["max_objects"] = max_objects;
    j["scenario"] = scenario;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        fail("invalid-config-value", "config is not a JSON object");

    static const std::set<std::string> known = {
        "seed",   "d0",     "levels",      "factor", "attention", "window_frac", "pool",
        "head_width", "d_a", "alpha",      "gamma",  "lr",        "steps",       "k_list",
        "videos", "frames", "max_objects", "scenario", "data_dir", "out_dir"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) fail("unknown-config-key", "unknown config key '" + key + "'");
    }

    RunConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("d0")) cfg.d0 = j.at("d0").get<long>();
        if (j.contains("levels")) cfg.levels = j.at("levels").get<long>();
        if (j.contains("factor")) cfg.factor = j.at("factor").get<double>();
        if (j.contains("attention")) cfg.attention = j.at("attention").get<std::string>();
        if (j.contains("window_frac")) cfg.window_frac = j.at("window_frac").get<double>();
        if (j.contains("pool")) cfg.pool = j.at("pool").get<long>();
        if (j.contains("head_width")) cfg.head_width = j.at("head_width").get<long>();
        if (j.contains("d_a")) cfg.d_a = j.at("d_a").get<long>();
        if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
        if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
        if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
        if (j.contains("steps")) cfg.steps = j.at("steps").get<long>();
        if (j.contains("k_list")) cfg.k_list = j.at("k_list").get<std::vector<long>>();
        if (j.contains("videos")) cfg.videos = j.at("videos").get<long>();
        if (j.contains("frames")) cfg.frames = j.at("frames").get<long>();
        if (j.contains("max_objects")) cfg.max_objects = j.at("max_objects").get<long>();
        if (j.contains("scenario")) cfg.scenario = j.at("scenario").get<std::string>();
        if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    } catch (const json::exception& ex) {
        fail("invalid-config-value", ex.what());
    }

    if (cfg.d0 < 1 || cfg.levels < 1 || cfg.pool < 1 || cfg.head_width < 1 || cfg.steps < 0 ||
        cfg.frames < 1 || cfg.videos < 1 || cfg.max_objects < 1)
        fail("invalid-config-value", "config holds a non-positive size");
    if (cfg.factor <= 0.0 || cfg.factor > 1.0)
        fail("invalid-config-value", "factor must lie in (0, 1]");
    if (cfg.window_frac <= 0.0 || cfg.window_frac > 1.0)
        fail("invalid-config-value", "window_frac must lie in (0, 1]");
    if (cfg.alpha <= 0.0 || cfg.alpha > 1.0)
        fail("invalid-config-value", "alpha must lie in (0, 1]");
    if (cfg.gamma < 0.0) fail("invalid-config-value", "gamma must be >= 0");
    if (cfg.k_list.empty()) fail("invalid-config-value", "k_list must not be empty");
    for (long k : cfg.k_list)
        if (k < 1) fail("invalid-config-value", "k_list entries must be >= 1");
    cfg.attention_kind(); // validates the string
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("missing-file", "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

} // namespace thyme
