#include "thyme/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "thyme/error.hpp"

namespace thyme {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string features_path(const std::string& data_dir, const std::string& video) {
    return data_dir + "/features-" + video + ".jsonl";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("io-write", "cannot open '" + path + "' for writing");
    out << text;
    if (!out) fail("io-write", "failed writing '" + path + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

Dataset dataset_from_synth(const SynthDataset& synth) {
    Dataset data;
    data.vocab = synth.vocab;
    for (const SynthVideo& v : synth.videos) {
        data.video_ids.push_back(v.features.video);
        data.features[v.features.video] = v.features;
        data.annotations[v.features.video] = v.annotations;
    }
    return data;
}

Dataset load_dataset(const std::string& data_dir, long d0) {
    AnnotationData ann = parse_annotations(data_dir + "/annotations.jsonl");
    Dataset data;
    data.vocab = ann.vocab;
    for (const AnnotationRecord& r : ann.records) {
        if (!data.annotations.count(r.video)) data.video_ids.push_back(r.video);
        data.annotations[r.video].push_back(r);
    }
    for (const std::string& video : data.video_ids) {
        FeatureVideo fv = load_precomputed(features_path(data_dir, video), d0);
        const long frame_count = static_cast<long>(fv.frames.size());
        for (const AnnotationRecord& r : data.annotations[video])
            if (r.frame >= frame_count)
                fail("annotation-feature-mismatch",
                     "video '" + video + "' annotates frame " + std::to_string(r.frame) +
                         " beyond the " + std::to_string(frame_count) + " feature frames");
        data.features[video] = std::move(fv);
    }
    return data;
}

SynthSummary run_synth(const RunConfig& cfg, const std::string& data_dir) {
    SynthDataset synth =
        synth_dataset(cfg.seed, cfg.videos, cfg.frames, cfg.max_objects, cfg.d0, cfg.scenario);
    fs::create_directories(data_dir);

    std::vector<AnnotationRecord> all_records;
    SynthSummary summary;
    for (const SynthVideo& v : synth.videos) {
        write_features(features_path(data_dir, v.features.video), v.features);
        for (const AnnotationRecord& r : v.annotations) {
            summary.nodes += static_cast<long>(r.nodes.size());
            summary.edges += static_cast<long>(r.edges.size());
            all_records.push_back(r);
        }
        summary.frames += static_cast<long>(v.features.frames.size());
    }
    summary.videos = static_cast<long>(synth.videos.size());
    write_annotations(data_dir + "/annotations.jsonl", all_records, synth.vocab);
    return summary;
}

std::vector<double> train_loop(ThymeModel& model, const Dataset& data, double lr, long steps,
                               const FocalConfig& focal) {
    std::vector<const std::vector<AnnotationRecord>*> golds;
    for (const std::string& video : data.video_ids)
        golds.push_back(&data.annotations.at(video));

    auto compute_loss = [&]() {
        std::vector<ThymeModel::Forward> forwards;
        forwards.reserve(data.video_ids.size());
        for (const std::string& video : data.video_ids)
            forwards.push_back(model.forward(data.features.at(video)));
        return batch_loss(model, forwards, golds, focal);
    };

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(steps) + 1);
    for (long step = 0; step < steps; ++step) {
        model.params().zero_grads();
        Tensor loss = compute_loss();
        const double value = loss.value_at(0);
        if (!std::isfinite(value))
            fail("divergence", "loss became non-finite at step " + std::to_string(step));
        losses.push_back(value);
        loss.backward();
        model.params().sgd_step(lr);
    }
    const double final_value = compute_loss().value_at(0);
    if (!std::isfinite(final_value)) fail("divergence", "final loss is non-finite");
    losses.push_back(final_value);
    return losses;
}

namespace {

json vocab_json(const PredicateVocab& vocab) {
    json j;
    for (IType t : kAllTypes) j[type_key(t)] = vocab.names[static_cast<int>(t)];
    return j;
}

PredicateVocab vocab_from_meta(const json& j) {
    PredicateVocab vocab;
    for (IType t : kAllTypes)
        vocab.names[static_cast<int>(t)] = j.at(type_key(t)).get<std::vector<std::string>>();
    return vocab;
}

} // namespace

TrainOutput run_train(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir) {
    Dataset data = load_dataset(data_dir, cfg.d0);
    ThymeModel model(cfg.model_config(data.vocab), cfg.seed);
    model.set_vocab(data.vocab);

    TrainOutput out;
    out.losses = train_loop(model, data, cfg.lr, cfg.steps, cfg.focal_config());

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "step,loss\n";
    for (std::size_t i = 0; i < out.losses.size(); ++i)
        csv << i << ',' << fmt_double(out.losses[i]) << '\n';
    write_text(out_dir + "/loss.csv", csv.str());

    out.checkpoint_path = out_dir + "/model.ckpt";
    model.params().save(out.checkpoint_path);

    json meta;
    meta["d0"] = cfg.d0;
    meta["levels"] = cfg.levels;
    meta["factor"] = cfg.factor;
    meta["attention"] = cfg.attention;
    meta["window_frac"] = cfg.window_frac;
    meta["pool"] = cfg.pool;
    meta["head_width"] = cfg.head_width;
    meta["d_a"] = cfg.d_a;
    meta["vocab"] = vocab_json(data.vocab);
    write_text(out.checkpoint_path + ".meta.json", meta.dump(2) + "\n");
    return out;
}

EvalReport eval_model(const ThymeModel& model, const Dataset& data, const std::vector<long>& ks,
                      std::vector<SampleEval>* samples_out) {
    const long max_k = *std::max_element(ks.begin(), ks.end());
    std::vector<SampleEval> samples;
    for (const std::string& video : data.video_ids) {
        ThymeModel::Forward fwd = model.forward(data.features.at(video));
        SampleEval sample;
        sample.video = video;
        sample.ranked = model.predict(fwd, max_k);
        sample.gold = model.gold_tuples(data.annotations.at(video));
        samples.push_back(std::move(sample));
    }
    EvalReport report = evaluate_samples(samples, model.vocab(), ks);
    if (samples_out) *samples_out = std::move(samples);
    return report;
}

EvalReport run_eval(const RunConfig& cfg, const std::string& data_dir,
                    const std::string& checkpoint_path, const std::string& out_dir) {
    std::ifstream meta_in(checkpoint_path + ".meta.json");
    if (!meta_in) fail("missing-file", "cannot open '" + checkpoint_path + ".meta.json'");
    json meta = json::parse(meta_in, nullptr, false);
    if (meta.is_discarded()) fail("malformed-header", "checkpoint metadata is not valid JSON");

    RunConfig arch = cfg;
    arch.d0 = meta.at("d0").get<long>();
    arch.levels = meta.at("levels").get<long>();
    arch.factor = meta.at("factor").get<double>();
    arch.attention = meta.at("attention").get<std::string>();
    arch.window_frac = meta.at("window_frac").get<double>();
    arch.pool = meta.at("pool").get<long>();
    arch.head_width = meta.at("head_width").get<long>();
    arch.d_a = meta.at("d_a").get<long>();
    const PredicateVocab ckpt_vocab = vocab_from_meta(meta.at("vocab"));

    Dataset data = load_dataset(data_dir, arch.d0);
    if (!(data.vocab == ckpt_vocab))
        fail("vocab-mismatch", "dataset vocabulary differs from the checkpoint vocabulary");

    ThymeModel model(arch.model_config(ckpt_vocab), arch.seed);
    model.set_vocab(ckpt_vocab);
    model.params().load(checkpoint_path);

    std::vector<SampleEval> samples;
    EvalReport report = eval_model(model, data, cfg.k_list, &samples);

    fs::create_directories(out_dir);
    write_text(out_dir + "/report.txt", report.to_text());
    write_text(out_dir + "/report.json", report.to_json(ckpt_vocab));

    std::ostringstream preds;
    for (const SampleEval& s : samples) {
        for (IType t : kAllTypes) {
            for (const ScoredTriplet& p : s.ranked[static_cast<int>(t)]) {
                json j;
                j["video"] = s.video;
                j["frame"] = p.frame >= 0 ? json(p.frame) : json(nullptr);
                j["type"] = type_key(t);
                j["sub"] = p.sub;
                j["obj"] = p.obj >= 0 ? json(p.obj) : json(nullptr);
                j["pred"] = ckpt_vocab.name(t, p.pred);
                j["score"] = p.score;
                preds << j.dump() << '\n';
            }
        }
    }
    write_text(out_dir + "/predictions.jsonl", preds.str());
    return report;
}

// ---- gradient verification ---------------------------------------------------

GradCheckReport run_gradcheck(const RunConfig& cfg, bool corrupt_gradient) {
    // Reduced-width instance: the code paths are the production ones, the
    // sizes keep the finite-difference sweep fast.
    RunConfig small = cfg;
    small.d0 = 24; // synthetic embedding minimum
    small.levels = 2;
    small.factor = 1.0;
    small.head_width = 6;
    small.d_a = 6;
    small.pool = 1;

    SynthVideo instance = synth_video(cfg.seed, 2, 3, small.d0, "chase", "gradcheck");
    PredicateVocab vocab = synthetic_vocab();
    ThymeModel model(small.model_config(vocab), cfg.seed);
    model.set_vocab(vocab);
    const FocalConfig focal = cfg.focal_config();

    auto loss_value = [&]() {
        return model.video_loss(model.forward(instance.features), instance.annotations, focal)
            .value_at(0);
    };

    model.params().zero_grads();
    Tensor loss = model.video_loss(model.forward(instance.features), instance.annotations, focal);
    loss.backward();

    GradCheckReport report;
    const double h = 1e-5;
    bool first = true;
    for (const auto& p : model.params().all()) {
        std::vector<double> reverse = p->value.grad();
        if (reverse.empty()) reverse.assign(p->value.values().size(), 0.0);
        if (corrupt_gradient && first) reverse[0] += 1e-2;
        first = false;

        Tensor snapshot = Tensor::from(p->value.shape(), p->value.values());
        Parameter* param = p.get();
        Tensor fd = finite_diff_grad(
            [&, param](const Tensor& x) {
                param->value.mutable_values() = x.values();
                const double v = loss_value();
                return v;
            },
            snapshot, h);
        param->value.mutable_values() = snapshot.values();

        GradCheckEntry entry{p->name, max_rel_error(reverse, fd.values())};
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.worst <= 1e-4;
    return report;
}

// ---- ablations ---------------------------------------------------------------

namespace {

struct AxisValue {
    std::string label;
    double number = 0.0;
    std::string text;
};

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

std::string run_ablate(const RunConfig& cfg, const std::string& axis) {
    std::vector<AxisValue> values;
    std::string column;
    if (axis == "factor") {
        column = "Factor";
        values = {{"1/4", 0.25, ""}, {"1/2", 0.5, ""}, {"3/4", 0.75, ""}, {"Full", 1.0, ""}};
    } else if (axis == "mechanism") {
        column = "Mechanism";
        values = {{"Standard Attention", 0.0, "standard"}, {"Cyclic Attention", 0.0, "cyclic"}};
    } else if (axis == "window") {
        column = "Window Size";
        values = {{"1/2", 0.5, ""}, {"3/4", 0.75, ""}, {"Full", 1.0, ""}};
    } else {
        fail("usage", "unknown ablation axis '" + axis + "'");
    }

    Dataset data = dataset_from_synth(
        synth_dataset(cfg.seed, cfg.videos, cfg.frames, cfg.max_objects, cfg.d0, cfg.scenario));

    std::ostringstream table;
    table << "# Ablation over " << axis << " on the synthetic set; R@20 / mR@20 per type.\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-20s %-20s %8s %8s\n", column.c_str(), "Interactivity Type",
                  "R@20", "mR@20");
    table << buf;

    for (const AxisValue& value : values) {
        RunConfig run = cfg;
        if (axis == "factor") run.factor = value.number;
        else if (axis == "mechanism") run.attention = value.text;
        else run.window_frac = value.number;

        ThymeModel model(run.model_config(data.vocab), run.seed);
        model.set_vocab(data.vocab);
        train_loop(model, data, run.lr, run.steps, run.focal_config());
        EvalReport report = eval_model(model, data, {20});

        for (IType t : kAllTypes) {
            const TypeReport& tr = report.types[static_cast<int>(t)];
            std::snprintf(buf, sizeof(buf), "%-20s %-20s %8s %8s\n", value.label.c_str(),
                          type_label(t), fmt_pct(tr.recall.at(20)).c_str(),
                          fmt_pct(tr.mean_recall.at(20)).c_str());
            table << buf;
        }
    }
    return table.str();
}

} // namespace thyme
