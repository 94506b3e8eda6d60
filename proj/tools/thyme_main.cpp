// Operator surface: generate synthetic data, train, evaluate, gradient-check
// and run the ablation sweeps. Every command is deterministic given
// (config, seed); exit codes: 0 ok, 1 verification/data failure, 2 usage or
// config error, 3 I/O error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "thyme/error.hpp"
#include "thyme/runner.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool out_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory (overrides the config)")
        ->each([&args](const std::string&) { args.out_set = true; });
    cmd->add_option("--seed", args.seed, "RNG seed (overrides the config)")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

thyme::RunConfig resolve_config(const CommonArgs& args) {
    thyme::RunConfig cfg;
    if (!args.config_path.empty()) {
        cfg = thyme::RunConfig::from_file(args.config_path);
    } else if (const char* env = std::getenv("THYME_CONFIG"); env && *env) {
        cfg = thyme::RunConfig::from_file(env);
    }
    if (args.seed_set) cfg.seed = args.seed;
    if (args.out_set) cfg.out_dir = args.out_dir;
    return cfg;
}

int exit_code_for(const thyme::Error& err) {
    const std::string& code = err.code();
    if (code == "usage" || code == "unknown-config-key" || code == "invalid-config-value" ||
        code == "invalid-fractions")
        return 2;
    if (code == "missing-file" || code == "io-write") return 3;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"THYME video scene graph pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    bool corrupt_gradient = false;
    std::string ckpt_path;
    std::string axis;

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    add_common(synth, args);
    CLI::App* train = app.add_subcommand("train", "train a model on the dataset");
    add_common(train, args);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, args);
    eval->add_option("--ckpt", ckpt_path, "checkpoint path (default <out>/model.ckpt)");
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients by finite differences");
    add_common(gradcheck, args);
    gradcheck
        ->add_flag("--inject-grad-error", corrupt_gradient,
                   "corrupt one reverse gradient (negative-control test hook)")
        ->group("");
    CLI::App* ablate = app.add_subcommand("ablate", "train+eval one run per axis value");
    add_common(ablate, args);
    ablate->add_option("--axis", axis, "factor | mechanism | window")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        thyme::RunConfig cfg = resolve_config(args);

        if (synth->parsed()) {
            const std::string dir = args.out_set ? args.out_dir : cfg.data_dir;
            thyme::SynthSummary s = thyme::run_synth(cfg, dir);
            std::printf("wrote %ld videos, %ld frames, %ld nodes, %ld edges to %s\n", s.videos,
                        s.frames, s.nodes, s.edges, dir.c_str());
        } else if (train->parsed()) {
            thyme::TrainOutput out = thyme::run_train(cfg, cfg.data_dir, cfg.out_dir);
            std::printf("trained %ld steps: loss %.6f -> %.6f\n", cfg.steps, out.losses.front(),
                        out.losses.back());
            std::printf("checkpoint: %s\n", out.checkpoint_path.c_str());
        } else if (eval->parsed()) {
            if (ckpt_path.empty()) ckpt_path = cfg.out_dir + "/model.ckpt";
            thyme::EvalReport report = thyme::run_eval(cfg, cfg.data_dir, ckpt_path, cfg.out_dir);
            std::fputs(report.to_text().c_str(), stdout);
        } else if (gradcheck->parsed()) {
            thyme::GradCheckReport report = thyme::run_gradcheck(cfg, corrupt_gradient);
            for (const auto& e : report.entries)
                std::printf("%-28s max rel err %.3e\n", e.name.c_str(), e.max_rel_err);
            std::printf("gradcheck %s: %zu tensors, worst rel err %.3e (tolerance 1e-4)\n",
                        report.pass ? "PASS" : "FAIL", report.entries.size(), report.worst);
            if (!report.pass) return 1;
        } else if (ablate->parsed()) {
            const std::string table = thyme::run_ablate(cfg, axis);
            std::filesystem::create_directories(cfg.out_dir);
            const std::string path = cfg.out_dir + "/ablation_" + axis + ".txt";
            std::ofstream out_file(path, std::ios::trunc);
            if (!out_file) thyme::fail("io-write", "cannot open '" + path + "'");
            out_file << table;
            std::fputs(table.c_str(), stdout);
        }
    } catch (const thyme::Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return exit_code_for(err);
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 0;
}
