#include "ncd/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Novel class discovery on graphs: pre-train, discover, evaluate."};
    app.require_subcommand(1);
    app.footer(ncd::config_keys_help());

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;
    bool force = false;
    std::string checkpoint;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value or JSON config file");
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_option("--out", out, "overrides the output directory");
        sub->add_option("--set", overrides, "extra key=value override, repeatable");
    };
    auto* gen = app.add_subcommand("gen-data", "write an SBM dataset and its split to OUT/data");
    common(gen);
    gen->add_flag("--force", force, "overwrite existing files");
    auto* pre = app.add_subcommand("pretrain", "train encoder and old head, record prototypes (OUT/pretrain)");
    common(pre);
    auto* ncd_cmd = app.add_subcommand("ncd", "discover new classes from OUT/pretrain (OUT/ncd)");
    common(ncd_cmd);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint without training (OUT/eval)");
    common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate (default: latest under OUT)");
    auto* sweep = app.add_subcommand("sweep-depth", "full pipeline per encoder depth (OUT/sweep)");
    common(sweep);
    auto* run = app.add_subcommand("run", "pretrain, ncd and eval in sequence");
    common(run);

    CLI11_PARSE(app, argc, argv);

    try {
        ncd::RunConfig cfg = config_path.empty() ? ncd::RunConfig{} : ncd::load_config(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ncd::ConfigError("--set expects key=value, got '" + kv + "'");
            ncd::set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) cfg.seed = *seed;
        if (!out.empty()) cfg.out = out;

        if (gen->parsed()) ncd::cmd_gen_data(cfg, force);
        else if (pre->parsed()) ncd::cmd_pretrain(cfg);
        else if (ncd_cmd->parsed()) ncd::cmd_ncd(cfg);
        else if (eval->parsed()) ncd::cmd_eval(cfg, checkpoint);
        else if (sweep->parsed()) ncd::cmd_sweep_depth(cfg);
        else if (run->parsed()) ncd::cmd_run(cfg);
        return 0;
    } catch (const ncd::TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\n" << e.log() << "\n";
        return ncd::cli_exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ncd::cli_exit_code(e);
    }
}
