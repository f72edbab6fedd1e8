#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cadaseg/core/png_io.hpp"

#ifndef CADASEG_CLI_PATH
#define CADASEG_CLI_PATH "cadaseg"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(CADASEG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path sandbox() {
    const fs::path dir = fs::temp_directory_path() / "cadaseg_cli_test";
    return dir;
}

void write_config(const fs::path& path, const std::string& extra = "") {
    std::ofstream f(path);
    f << "method = cs_cada\n"
         "seed = 3\n"
         "iters = 15\n"
         "validate_every = 5\n"
         "batch.source = 4\n"
         "batch.target_labeled = 2\n"
         "batch.target_unlabeled = 2\n"
         "arch.widths = 4,8,16\n"
         "arch.proj_hidden = 16\n"
         "arch.proj_dim = 8\n"
         "data.kind = circular\n"
         "data.image_size = 32\n"
         "data.counts = 20,4,16,4,10\n"
         "data.seed = 9\n"
      << extra;
}

size_t count_pngs(const fs::path& dir) {
    if (!fs::exists(dir)) return 0;
    size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.path().extension() == ".png") ++n;
    return n;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("cli end-to-end") {
    const fs::path root = sandbox();
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "run.cfg";
    write_config(cfg);

    SUBCASE("missing config file exits with code 2") {
        CHECK(run_cli("train --config /nonexistent.cfg --out " +
                      (root / "x").string()) == 2);
        CHECK(run_cli("train --out " + (root / "x").string()) == 2);
    }

    SUBCASE("generate writes the dataset layout and refuses to overwrite") {
        const fs::path ds = root / "dataset";
        CHECK(run_cli("generate --config " + cfg.string() + " --out " + ds.string()) == 0);
        // counts (20,4,16,4,10): 54 images across splits
        CHECK(count_pngs(ds / "source" / "images") == 20);
        CHECK(count_pngs(ds / "target" / "images") == 34);
        CHECK(count_pngs(ds / "source" / "images") +
                  count_pngs(ds / "target" / "images") ==
              54);
        // labeled target + validation + test carry masks, unlabeled do not
        CHECK(count_pngs(ds / "target" / "masks") == 18);
        CHECK(fs::exists(ds / "splits.json"));

        const std::string hash1 =
            slurp(ds / "manifest.json");
        CHECK(run_cli("generate --config " + cfg.string() + " --out " + ds.string()) == 3);
        CHECK(run_cli("generate --config " + cfg.string() + " --out " + ds.string() +
                      " --force") == 0);
        const std::string hash2 = slurp(ds / "manifest.json");
        // identical content hash on regeneration
        CHECK(hash1.substr(hash1.find("dataset_hash")) ==
              hash2.substr(hash2.find("dataset_hash")));
    }

    SUBCASE("train produces a complete, reproducible run directory") {
        const fs::path run1 = root / "run1";
        const fs::path run2 = root / "run2";
        CHECK(run_cli("train --config " + cfg.string() + " --out " + run1.string()) == 0);
        CHECK(fs::exists(run1 / "manifest.json"));
        CHECK(fs::exists(run1 / "config.resolved"));
        CHECK(fs::exists(run1 / "history.csv"));
        CHECK(fs::exists(run1 / "checkpoint_best.bin"));
        CHECK(fs::exists(run1 / "checkpoint_final.bin"));
        CHECK(fs::exists(run1 / "metrics.csv"));

        // 15 iterations -> header + 15 rows
        std::ifstream h(run1 / "history.csv");
        int lines = 0;
        std::string line;
        while (std::getline(h, line)) ++lines;
        CHECK(lines == 16);

        CHECK(run_cli("train --config " + cfg.string() + " --out " + run2.string()) == 0);
        CHECK(slurp(run1 / "history.csv") == slurp(run2 / "history.csv"));

        // refuses to clobber without --force
        CHECK(run_cli("train --config " + cfg.string() + " --out " + run1.string()) == 3);
    }

    SUBCASE("semantic config errors exit with code 3 before training") {
        const fs::path bad = root / "bad.cfg";
        write_config(bad, "batch.target_unlabeled = 0\n");
        CHECK(run_cli("train --config " + bad.string() + " --out " +
                      (root / "badrun").string()) == 3);
        const fs::path bad2 = root / "bad2.cfg";
        write_config(bad2, "method = no_such_method\n");
        CHECK(run_cli("train --config " + bad2.string() + " --out " +
                      (root / "badrun2").string()) == 3);
    }

    SUBCASE("pretrain-then-finetune chains through the checkpoint path") {
        const fs::path pre = root / "pretrain";
        CHECK(run_cli("train --config " + cfg.string() +
                      " --method baseline_source --iters 10 --out " + pre.string()) == 0);
        const fs::path tuned = root / "tuned";
        CHECK(run_cli("finetune --config " + cfg.string() + " --pretrained " +
                      (pre / "checkpoint_best.bin").string() +
                      " --scope all --iters 5 --out " + tuned.string()) == 0);
        CHECK(fs::exists(tuned / "metrics.csv"));
        std::string resolved = slurp(tuned / "config.resolved");
        CHECK(resolved.find("method = finetune_all") != std::string::npos);
    }

    SUBCASE("report merges runs, draws plots and renders overlays") {
        const fs::path run1 = root / "repa";
        const fs::path run2 = root / "repb";
        CHECK(run_cli("train --config " + cfg.string() + " --method baseline_target "
                      "--out " + run1.string()) == 0);
        CHECK(run_cli("train --config " + cfg.string() + " --method dsbn_only --out " +
                      run2.string()) == 0);
        const fs::path rep = root / "report";
        CHECK(run_cli("report " + run1.string() + " " + run2.string() + " --out " +
                      rep.string()) == 0);
        CHECK(fs::exists(rep / "merged.csv"));
        CHECK(fs::exists(rep / "table.txt"));
        CHECK(fs::exists(rep / ("loss_" + run1.filename().string() + ".png")));
        // overlays match the input image dimensions (32x32 here)
        const fs::path overlays = rep / ("overlays_" + run1.filename().string());
        CHECK(fs::exists(overlays));
        size_t n_overlays = count_pngs(overlays);
        CHECK(n_overlays == 10);  // test split size
        const auto png = cadaseg::read_png((overlays / "test_0000.png").string());
        CHECK(png.width == 32);  // overlay dims equal the input image dims
        CHECK(png.height == 32);
    }

    fs::remove_all(root);
}
