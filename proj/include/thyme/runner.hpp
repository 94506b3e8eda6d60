#pragma once

#include <map>
#include <string>
#include <vector>

#include "thyme/config.hpp"
#include "thyme/frame_features.hpp"
#include "thyme/metrics.hpp"
#include "thyme/model.hpp"

namespace thyme {

// In-memory dataset: annotations plus per-video precomputed features.
struct Dataset {
    PredicateVocab vocab;
    std::vector<std::string> video_ids; // evaluation order
    std::map<std::string, FeatureVideo> features;
    std::map<std::string, std::vector<AnnotationRecord>> annotations;
};

Dataset dataset_from_synth(const SynthDataset& synth);

// data_dir/annotations.jsonl plus data_dir/features-<video>.jsonl per video.
Dataset load_dataset(const std::string& data_dir, long d0);

struct SynthSummary {
    long videos = 0;
    long frames = 0;
    long nodes = 0;
    long edges = 0;
};

// Generates the synthetic dataset and writes it under data_dir.
SynthSummary run_synth(const RunConfig& cfg, const std::string& data_dir);

// Full-batch SGD over all videos. Returns per-step losses (entry i is the
// loss before update i) with one trailing entry for the final loss. NaN loss
// aborts with a "divergence" error.
std::vector<double> train_loop(ThymeModel& model, const Dataset& data, double lr, long steps,
                               const FocalConfig& focal);

struct TrainOutput {
    std::vector<double> losses;
    std::string checkpoint_path;
};

// Trains per the config and writes model.ckpt, model.ckpt.meta.json and
// loss.csv under out_dir.
TrainOutput run_train(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir);

EvalReport eval_model(const ThymeModel& model, const Dataset& data, const std::vector<long>& ks,
                      std::vector<SampleEval>* samples_out = nullptr);

// Loads the checkpoint (validating the stored vocabulary against the data)
// and writes report.json, report.txt and predictions.jsonl under out_dir.
EvalReport run_eval(const RunConfig& cfg, const std::string& data_dir,
                    const std::string& checkpoint_path, const std::string& out_dir);

// ---- gradient verification ---------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries; // every parameter tensor, in store order
    double worst = 0.0;
    bool pass = false;
};

// Reverse-mode gradients of the full pipeline loss against central finite
// differences (h = 1e-5) on a 2-frame, 3-object, 2-level synthetic instance at
// reduced width. `corrupt_gradient` injects an error into the first tensor's
// reverse gradient (negative-control hook).
GradCheckReport run_gradcheck(const RunConfig& cfg, bool corrupt_gradient = false);

// ---- ablations ---------------------------------------------------------------

// axis: "factor" (1/4, 1/2, 3/4, Full), "mechanism" (Standard Attention,
// Cyclic Attention) or "window" (1/2, 3/4, Full). Trains and evaluates one
// run per axis value on the synthetic set; reports R@20 / mR@20 per type.
std::string run_ablate(const RunConfig& cfg, const std::string& axis);

} // namespace thyme
