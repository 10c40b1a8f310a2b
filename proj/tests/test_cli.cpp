// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "maediff/checkpoint.hpp"
#include "maediff/cli.hpp"

using namespace maediff;
namespace fs = std::filesystem;

namespace {

// tiny geometry + tiny model: every CLI invocation stays in the sub-second range
const char* kTinyOverrides =
    " --set data.H=32 --set data.W=32 --set plan.p=16 --set plan.s=8 --set plan.r=8"
    " --set data.n_train=2 --set data.n_val_healthy=2 --set data.n_val_unhealthy=2"
    " --set data.n_test_healthy=2 --set data.n_test_unhealthy=2"
    " --set unet.base_channels=8 --set unet.res_blocks_per_level=1 --set unet.use_global_attention=false"
    " --set mae.d1=16 --set mae.enc_blocks=1 --set mae.enc_heads=4"
    " --set mae.d2=16 --set mae.dec_blocks=1 --set mae.dec_heads=4"
    " --set diffusion.T=100 --set diffusion.t_test=50 --set train.t_max=100"
    " --set simplex.octaves=2 --set postprocess.threshold_candidates=20";

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MAEDIFF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

struct TempTree {
    fs::path root;
    explicit TempTree(const char* name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
    std::string operator/(const char* sub) const { return (root / sub).string(); }
};

} // namespace

TEST_CASE("gen-data produces the manifest and is seed-reproducible") {
    TempTree tmp("maediff_cli_gen");
    CHECK(run_cli("gen-data --out " + (tmp / "a") + kTinyOverrides) == 0);
    CHECK(fs::exists(tmp / "a/manifest.json"));
    CHECK(fs::exists(tmp / "a/config.resolved.json"));
    CHECK(run_cli("gen-data --out " + (tmp / "b") + kTinyOverrides) == 0);
    CHECK(slurp(tmp / "a/manifest.json") == slurp(tmp / "b/manifest.json"));
    DatasetManifest m = load_manifest(tmp / "a/manifest.json");
    CHECK(slurp((fs::path(tmp / "a") / m.entries[0].image).string()) ==
          slurp((fs::path(tmp / "b") / m.entries[0].image).string()));
}

TEST_CASE("invalid geometry exits with code 2 and names the invariant") {
    TempTree tmp("maediff_cli_bad");
    CHECK(run_cli("gen-data --out " + (tmp / "x") + kTinyOverrides + " --set plan.p=15") == 2);
    CHECK(run_cli("gen-data --out " + (tmp / "x") + " --set postprocess.median_kernel=4") == 2);
    CHECK(run_cli("definitely-not-a-command") == 2);
}

TEST_CASE("train with a zero step budget writes the initialized checkpoint") {
    TempTree tmp("maediff_cli_train0");
    REQUIRE(run_cli("gen-data --out " + (tmp / "data") + kTinyOverrides) == 0);
    CHECK(run_cli("train --manifest " + (tmp / "data/manifest.json") + " --out " + (tmp / "run") + kTinyOverrides +
                  " --set train.epochs=0") == 0);
    CHECK(fs::exists(tmp / "run/checkpoint_best.maeckpt"));
    CHECK(fs::exists(tmp / "run/checkpoint_last.maeckpt"));
    Checkpoint ckpt = load_checkpoint(tmp / "run/checkpoint_best.maeckpt");
    CHECK(!ckpt.tensors.empty());
    CHECK(ckpt.meta_json.find("\"step\":0") != std::string::npos);
}

TEST_CASE("evaluate and plot close the loop end to end") {
    TempTree tmp("maediff_cli_eval");
    REQUIRE(run_cli("gen-data --out " + (tmp / "data") + kTinyOverrides) == 0);
    REQUIRE(run_cli("train --manifest " + (tmp / "data/manifest.json") + " --out " + (tmp / "run") + kTinyOverrides +
                    " --set train.max_steps=2 --set train.batch_size=2") == 0);
    CHECK(run_cli("evaluate --manifest " + (tmp / "data/manifest.json") + " --checkpoint " +
                  (tmp / "run/checkpoint_best.maeckpt") + " --out " + (tmp / "eval") + " --panels" +
                  kTinyOverrides) == 0);
    CHECK(fs::exists(tmp / "eval/report.json"));
    const std::string report = slurp(tmp / "eval/report.json");
    CHECK(report.find("threshold") != std::string::npos);
    CHECK(report.find("dice_mean") != std::string::npos);
    CHECK(report.find("auprc") != std::string::npos);
    CHECK(report.find("l1_mean") != std::string::npos);

    // a PNG panel exists and carries the PNG signature
    bool found_png = false;
    for (const auto& entry : fs::directory_iterator(tmp / "eval/panels")) {
        const std::string bytes = slurp(entry.path().string());
        REQUIRE(bytes.size() > 8);
        CHECK(static_cast<unsigned char>(bytes[0]) == 0x89);
        CHECK(bytes.substr(1, 3) == "PNG");
        found_png = true;
    }
    CHECK(found_png);

    CHECK(run_cli("reconstruct --manifest " + (tmp / "data/manifest.json") + " --checkpoint " +
                  (tmp / "run/checkpoint_best.maeckpt") + " --split test-unhealthy --out " + (tmp / "rec") +
                  kTinyOverrides) == 0);
    CHECK(run_cli("plot --manifest " + (tmp / "data/manifest.json") + " --recon-dir " + (tmp / "rec/recon") +
                  " --out " + (tmp / "plots")) == 0);
    CHECK(!fs::is_empty(tmp / "plots"));
}

TEST_CASE("a poisoned checkpoint fails evaluation with exit code 3") {
    TempTree tmp("maediff_cli_nan");
    REQUIRE(run_cli("gen-data --out " + (tmp / "data") + kTinyOverrides) == 0);
    REQUIRE(run_cli("train --manifest " + (tmp / "data/manifest.json") + " --out " + (tmp / "run") + kTinyOverrides +
                    " --set train.epochs=0") == 0);
    Checkpoint ckpt = load_checkpoint(tmp / "run/checkpoint_best.maeckpt");
    for (auto& [name, tensor] : ckpt.tensors) {
        for (int64_t i = 0; i < tensor.numel(); ++i) {
            tensor[i] = std::numeric_limits<float>::quiet_NaN();
        }
    }
    save_checkpoint(tmp / "run/poisoned.maeckpt", ckpt);
    CHECK(run_cli("evaluate --manifest " + (tmp / "data/manifest.json") + " --checkpoint " +
                  (tmp / "run/poisoned.maeckpt") + " --out " + (tmp / "eval") + kTinyOverrides) == 3);
}
