// Command-line front end: data gen / train / sample / eval / oracle trace /
// sweep-d / sweep-w over a single strict JSON config.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfjm/harness.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Config file (JSON)")->required();
    cmd->add_option("--out", opts.out_dir, "Output root directory");
    cmd->add_option("--set", opts.overrides, "Override config key, e.g. --set model.D=64");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&opts](std::uint64_t s) { opts.seed = s; opts.seed_set = true; },
        "Override the config seed");
}

pfjm::ExperimentConfig load_config(const CommonOpts& opts) {
    std::ifstream f(opts.config_path);
    if (!f) throw pfjm::ConfigError("config: cannot open " + opts.config_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw pfjm::ConfigError("config: JSON parse error in " + opts.config_path + ": " +
                                e.what());
    }
    for (const auto& ov : opts.overrides) pfjm::apply_override(j, ov);
    if (opts.seed_set) j["seed"] = opts.seed;
    return pfjm::ExperimentConfig::from_json(j);
}

void dump_config(const pfjm::ExperimentConfig& cfg, const std::string& dir) {
    std::ofstream(dir + "/config.json") << cfg.to_json().dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Poisson-flow joint denoising harness"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string checkpoint_path, recon_path, reference_path;
    bool force = false;

    auto* data = app.add_subcommand("data", "Dataset utilities");
    auto* data_gen = data->add_subcommand("gen", "Generate phantom train/test archives");
    add_common(data_gen, opts);

    auto* train_cmd = app.add_subcommand("train", "Train a denoiser");
    add_common(train_cmd, opts);

    auto* sample_cmd = app.add_subcommand("sample", "Sample reconstructions from a checkpoint");
    add_common(sample_cmd, opts);
    sample_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint archive")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate reconstructions against references");
    add_common(eval_cmd, opts);
    eval_cmd->add_option("--recon", recon_path, "Reconstruction archive")->required();
    eval_cmd->add_option("--reference", reference_path, "Routine-dose archive")->required();
    eval_cmd->add_flag("--force", force, "Allow mixed config fingerprints");

    auto* oracle = app.add_subcommand("oracle", "Exact-field utilities");
    auto* oracle_trace = oracle->add_subcommand("trace", "Dump field-line trajectories as CSV");
    add_common(oracle_trace, opts);

    auto* sweep_d_cmd = app.add_subcommand("sweep-d", "Train/evaluate across augmented dims");
    add_common(sweep_d_cmd, opts);

    auto* sweep_w_cmd =
        app.add_subcommand("sweep-w", "Conditional-sampling ablation over refinement weights");
    add_common(sweep_w_cmd, opts);

    CLI11_PARSE(app, argc, argv);

    pfjm::ExperimentConfig cfg;
    try {
        cfg = load_config(opts);
    } catch (const pfjm::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (data_gen->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "datagen", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::run_data_gen(cfg, dir);
        } else if (train_cmd->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "train", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::run_train(cfg, dir);
        } else if (sample_cmd->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "sample", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::run_sample(cfg, checkpoint_path, dir);
        } else if (eval_cmd->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "eval", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::run_eval(cfg, recon_path, reference_path, dir, force);
        } else if (oracle_trace->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "oracle", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::run_oracle_trace(cfg, dir);
        } else if (sweep_d_cmd->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "sweepd", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::run_sweep_d(cfg, cfg.d_sweep, dir);
        } else if (sweep_w_cmd->parsed()) {
            std::string dir = pfjm::make_run_dir(opts.out_dir, "sweepw", cfg.fingerprint());
            dump_config(cfg, dir);
            pfjm::PairedDataset trainset = pfjm::make_paired_dataset(cfg, "train");
            pfjm::DenoiserModel model = pfjm::build_model(cfg);
            pfjm::TrainConfig tc = cfg.train_config(trainset.front().first.pixels.size());
            pfjm::train(trainset, model, tc, cfg.fingerprint());
            pfjm::run_ablate(cfg, model, dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
