// SPDX-License-Identifier: Apache-2.0
//
// maediff — patch-wise diffusion anomaly detection on synthetic phantoms.
//
// Subcommands: gen-data, train, reconstruct, evaluate, plot.
// Exit codes: 0 success, 2 configuration/validation failure, 3 runtime
// numeric failure, 1 other errors.

#include <CLI11.hpp>

#include <iostream>

#include "maediff/cli.hpp"

using namespace maediff;

int main(int argc, char** argv) {
    CLI::App app{"patch-wise diffusion anomaly detection (synthetic phantom pipeline)"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.fallthrough();
    app.add_option("--config", config_path, "JSON config file (defaults used when omitted)");
    app.add_option("--set", overrides, "override config keys, e.g. --set diffusion.t_test=250");

    std::string out_dir = "out";
    std::string manifest_path, checkpoint_path, resume_path, split = kSplitTestUnhealthy, recon_dir;
    bool panels = false;

    CLI::App* gen = app.add_subcommand("gen-data", "generate phantom dataset + manifest");
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI::App* train = app.add_subcommand("train", "patch-wise training");
    train->add_option("--manifest", manifest_path, "manifest.json path")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--resume", resume_path, "resume from a saved checkpoint");

    CLI::App* rec = app.add_subcommand("reconstruct", "sequential patch-wise reconstruction of one split");
    rec->add_option("--manifest", manifest_path)->required();
    rec->add_option("--checkpoint", checkpoint_path)->required();
    rec->add_option("--split", split, "train|val-healthy|val-unhealthy|test-healthy|test-unhealthy");
    rec->add_option("--out", out_dir)->required();

    CLI::App* eval = app.add_subcommand("evaluate", "threshold search + DICE/AUPRC/l1 report");
    eval->add_option("--manifest", manifest_path)->required();
    eval->add_option("--checkpoint", checkpoint_path)->required();
    eval->add_option("--out", out_dir)->required();
    eval->add_flag("--panels", panels, "also write side-by-side PNG panels");

    CLI::App* plot = app.add_subcommand("plot", "PNG panels from saved reconstruction tensors");
    plot->add_option("--manifest", manifest_path)->required();
    plot->add_option("--recon-dir", recon_dir, "directory with <id>_rec/_score tensors")->required();
    plot->add_option("--out", out_dir)->required();

    // --config / --set live on the parent; let them appear after the
    // subcommand name as well
    for (CLI::App* sub : {gen, train, rec, eval, plot}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (plot->parsed()) {
            cli::cmd_plot(manifest_path, recon_dir, out_dir);
            return 0;
        }
        RunConfig cfg = load_run_config(config_path, overrides);
        if (gen->parsed()) {
            cli::cmd_gen_data(cfg, out_dir);
        } else if (train->parsed()) {
            cli::cmd_train(cfg, manifest_path, out_dir, resume_path);
        } else if (rec->parsed()) {
            cli::cmd_reconstruct(cfg, manifest_path, checkpoint_path, split, out_dir);
        } else if (eval->parsed()) {
            cli::cmd_evaluate(cfg, manifest_path, checkpoint_path, out_dir, panels);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
