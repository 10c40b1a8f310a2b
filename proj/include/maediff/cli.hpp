// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "maediff/config.hpp"
#include "maediff/evaluate.hpp"
#include "maediff/training.hpp"

namespace maediff::cli {

// Subcommand bodies, shared between the binary and in-process tests. Each
// writes the resolved config alongside its outputs and returns the path of
// its primary artifact. Errors are thrown (ConfigError -> exit 2,
// NumericError -> exit 3 in the binary).

// gen-data: phantoms + manifest.json
std::string cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);

// train: best/last checkpoints + train_log.jsonl; returns best checkpoint.
std::string cmd_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir,
                      const std::string& resume_checkpoint = "", FitResult* result_out = nullptr);

// reconstruct: per-image x0_rec/score tensors for one split.
std::string cmd_reconstruct(const RunConfig& cfg, const std::string& manifest_path,
                            const std::string& checkpoint_path, const std::string& split, const std::string& out_dir);

// evaluate: threshold fit + metrics; returns report.json path.
std::string cmd_evaluate(const RunConfig& cfg, const std::string& manifest_path, const std::string& checkpoint_path,
                         const std::string& out_dir, bool panels, EvalReport* report_out = nullptr);

// plot: Fig-style panels (input | reconstruction | score | ground truth) from
// reconstruction tensors saved by reconstruct/evaluate.
std::string cmd_plot(const std::string& manifest_path, const std::string& recon_dir, const std::string& out_dir);

// Builds the model from a config (init seeded from cfg.seed).
DenoiserModel build_model(const RunConfig& cfg);

// Loads checkpoint parameters into a freshly built model.
DenoiserModel load_model(const RunConfig& cfg, const std::string& checkpoint_path);

} // namespace maediff::cli
