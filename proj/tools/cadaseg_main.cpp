// cadaseg: config-driven training and evaluation toolkit for two-domain
// semi-supervised segmentation. Subcommands: generate, train, finetune,
// ablation, sweep, report.
//
// Exit codes: 0 success, 2 config-file errors, 3 semantic config errors,
// 4 runtime training/IO failures.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cadaseg/checkpoint.hpp"
#include "cadaseg/config.hpp"
#include "cadaseg/harness.hpp"
#include "cadaseg/manifest.hpp"
#include "cadaseg/plot.hpp"
#include "cadaseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace cadaseg;

using Scalar = float;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigFile = 2;
constexpr int kExitConfigSemantic = 3;
constexpr int kExitRuntime = 4;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string method_override;
    long seed_override = -1;
    long iters_override = -1;
    bool force = false;
};

std::string out_root() {
    const char* env = std::getenv("CADASEG_OUT_ROOT");
    return env && *env ? env : "runs";
}

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
    return buf;
}

RunSpec load_spec(const CommonFlags& flags) {
    if (flags.config_path.empty())
        throw ConfigFileError("missing --config");
    ConfigFile cfg = ConfigFile::load(flags.config_path);
    RunSpec spec = parse_run_spec(cfg);
    if (!flags.method_override.empty())
        spec.train.method = parse_method(flags.method_override);
    if (flags.seed_override >= 0)
        spec.train.seed = static_cast<uint64_t>(flags.seed_override);
    if (flags.iters_override >= 0) spec.train.max_iterations = flags.iters_override;
    return spec;
}

// Refuses to overwrite an existing non-empty directory unless --force.
void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force)
            throw ConfigError("output directory exists: " + dir.string() +
                              " (use --force to overwrite)");
        fs::remove_all(dir);
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::exists(dir)) throw IoError("cannot create " + dir.string());
}

fs::path default_run_dir(const RunSpec& spec) {
    return fs::path(out_root()) /
           (std::string(method_name(spec.train.method)) + "_" +
            std::to_string(spec.train.seed) + "_" + timestamp());
}

// Executes one training (or fine-tuning) run and writes the full run
// directory: manifest, resolved config, history, checkpoints, test metrics.
MetricsRow run_one_training(const RunSpec& spec, const Dataset& dataset,
                            const fs::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();

    const bool is_finetune = spec.train.method == Method::FinetuneLast ||
                             spec.train.method == Method::FinetuneAll;
    RunManifest manifest;
    manifest.command = is_finetune ? "finetune" : "train";
    manifest.method = method_name(spec.train.method);
    manifest.seed = spec.train.seed;
    manifest.iterations = is_finetune ? spec.train.finetune_iterations
                                      : spec.train.max_iterations;
    manifest.dataset_hash = dataset_content_hash(dataset);
    manifest.test_hash = test_set_hash(dataset);
    manifest.out_dir = dir.string();
    write_manifest((dir / "manifest.json").string(), manifest);
    {
        std::ofstream f(dir / "config.resolved", std::ios::binary);
        f << resolve_config(spec).dump();
    }

    TrainResult<Scalar> result;
    const Method m = spec.train.method;
    if (is_finetune) {
        if (spec.finetune_pretrained.empty())
            throw ConfigError("fine-tuning needs finetune.pretrained (a checkpoint path)");
        auto ckpt = load_checkpoint<Scalar>(spec.finetune_pretrained);
        const FinetuneScope scope = m == Method::FinetuneLast
                                        ? FinetuneScope::LastBlock
                                        : FinetuneScope::All;
        result = finetune(ckpt.student, scope, dataset, spec.train);
    } else {
        result = train<Scalar>(spec.train, dataset);
    }

    write_history_csv((dir / "history.csv").string(), result.history);
    write_validation_csv((dir / "validation.csv").string(), result.history);
    save_checkpoint((dir / "checkpoint_final.bin").string(), result.student,
                    &result.teacher.params, manifest.iterations);
    save_checkpoint((dir / "checkpoint_best.bin").string(), result.best_student,
                    result.history.best_iteration);

    MetricsRow row = evaluate_model(result.best_student, dataset.test,
                                    method_traits(m).eval_domain,
                                    spec.train.spacing, method_name(m));
    row.test_hash = manifest.test_hash;
    write_metrics_csv((dir / "metrics.csv").string(), {row});
    {
        std::ofstream f(dir / "table.txt", std::ios::binary);
        f << metrics_table({row});
    }

    manifest.status = "complete";
    manifest.best_val_dice = result.history.best_dice;
    manifest.best_iteration = result.history.best_iteration;
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest((dir / "manifest.json").string(), manifest);
    return row;
}

int cmd_generate(const CommonFlags& flags) {
    RunSpec spec = load_spec(flags);
    const fs::path dir = flags.out_dir.empty()
                             ? fs::path(out_root()) /
                                   ("dataset_" + std::string(kind_name(spec.data.kind)) +
                                    "_" + std::to_string(spec.data.seed))
                             : fs::path(flags.out_dir);
    prepare_out_dir(dir, flags.force);

    Dataset ds = load_dataset(spec.data);
    export_dataset(ds, dir);

    RunManifest manifest;
    manifest.command = "generate";
    manifest.method = kind_name(spec.data.kind);
    manifest.seed = spec.data.seed;
    manifest.dataset_hash = dataset_content_hash(ds);
    manifest.test_hash = test_set_hash(ds);
    manifest.out_dir = dir.string();
    manifest.status = "complete";
    write_manifest((dir / "manifest.json").string(), manifest);
    {
        std::ofstream f(dir / "config.resolved", std::ios::binary);
        f << resolve_config(spec).dump();
    }

    std::cout << "dataset written to " << dir.string() << "\n"
              << "  source labeled    " << ds.source_labeled.size() << "\n"
              << "  target labeled    " << ds.target_labeled.size() << "\n"
              << "  target unlabeled  " << ds.target_unlabeled.size() << "\n"
              << "  validation        " << ds.validation.size() << "\n"
              << "  test              " << ds.test.size() << "\n"
              << "  classes           " << ds.num_classes << "\n"
              << "  content hash      " << manifest.dataset_hash << "\n";
    return kExitOk;
}

int cmd_train(const CommonFlags& flags) {
    RunSpec spec = load_spec(flags);
    const fs::path dir = flags.out_dir.empty() ? default_run_dir(spec)
                                               : fs::path(flags.out_dir);
    prepare_out_dir(dir, flags.force);
    Dataset dataset = load_dataset(spec.data);
    MetricsRow row = run_one_training(spec, dataset, dir);
    std::cout << "run directory: " << dir.string() << "\n"
              << metrics_table({row});
    return kExitOk;
}

int cmd_finetune(const CommonFlags& flags, const std::string& pretrained,
                 const std::string& scope) {
    RunSpec spec = load_spec(flags);
    if (!pretrained.empty()) spec.finetune_pretrained = pretrained;
    if (!scope.empty()) spec.finetune_scope = scope;
    spec.train.method = parse_scope(spec.finetune_scope) == FinetuneScope::LastBlock
                            ? Method::FinetuneLast
                            : Method::FinetuneAll;
    if (flags.iters_override >= 0)
        spec.train.finetune_iterations = flags.iters_override;

    const fs::path dir = flags.out_dir.empty() ? default_run_dir(spec)
                                               : fs::path(flags.out_dir);
    prepare_out_dir(dir, flags.force);
    Dataset dataset = load_dataset(spec.data);
    MetricsRow row = run_one_training(spec, dataset, dir);
    std::cout << "run directory: " << dir.string() << "\n"
              << metrics_table({row});
    return kExitOk;
}

int cmd_ablation(const CommonFlags& flags) {
    RunSpec spec = load_spec(flags);
    const fs::path dir = flags.out_dir.empty()
                             ? fs::path(out_root()) /
                                   ("ablation_" + std::to_string(spec.train.seed) +
                                    "_" + timestamp())
                             : fs::path(flags.out_dir);
    prepare_out_dir(dir, flags.force);
    Dataset dataset = load_dataset(spec.data);

    std::vector<MetricsRow> rows;
    for (Method m : ablation_methods()) {
        RunSpec one = spec;
        one.train.method = m;
        const fs::path sub =
            dir / (std::string(method_name(m)) + "_" + std::to_string(one.train.seed));
        prepare_out_dir(sub, true);
        rows.push_back(run_one_training(one, dataset, sub));
        std::cout << method_name(m) << ": mean dice "
                  << rows.back().average.dice_mean << "\n";
    }
    write_metrics_csv((dir / "ablation.csv").string(), rows);
    {
        std::ofstream f(dir / "table.txt", std::ios::binary);
        f << metrics_table(rows);
    }
    std::cout << metrics_table(rows);
    return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::string& ratios_flag,
              const std::string& methods_flag) {
    RunSpec spec = load_spec(flags);
    std::vector<double> ratios = spec.sweep_ratios;
    if (!ratios_flag.empty()) {
        ratios.clear();
        std::stringstream ss(ratios_flag);
        std::string tok;
        while (std::getline(ss, tok, ',')) ratios.push_back(std::stod(tok));
    }
    std::vector<Method> methods = {Method::CsCada};
    if (!methods_flag.empty()) {
        methods.clear();
        std::stringstream ss(methods_flag);
        std::string tok;
        while (std::getline(ss, tok, ',')) methods.push_back(parse_method(tok));
    }

    const fs::path dir = flags.out_dir.empty()
                             ? fs::path(out_root()) /
                                   ("sweep_" + std::to_string(spec.train.seed) + "_" +
                                    timestamp())
                             : fs::path(flags.out_dir);
    prepare_out_dir(dir, flags.force);
    Dataset dataset = load_dataset(spec.data);

    auto rows = run_ratio_sweep<Scalar>(spec.train, dataset, ratios, methods);
    write_sweep_csv((dir / "sweep.csv").string(), rows);

    // Dice-vs-ratio curves, one series per method plus the upper bound.
    std::vector<PlotSeries> series;
    for (const auto& row : rows) {
        auto it = std::find_if(series.begin(), series.end(), [&](const PlotSeries& s) {
            return s.label == row.method;
        });
        if (it == series.end()) {
            series.push_back(PlotSeries{row.method, {}, {}});
            it = series.end() - 1;
        }
        it->xs.push_back(row.ratio);
        it->ys.push_back(row.dice_mean);
    }
    line_plot((dir / "dice_vs_ratio.png").string(), "dice vs annotation ratio",
              "ratio", "dice", series);

    for (const auto& r : rows)
        std::cout << r.method << " @ ratio " << r.ratio << ": dice " << r.dice_mean
                  << " +- " << r.dice_sd << " (labeled " << r.n_labeled << ")\n";
    std::cout << "sweep directory: " << dir.string() << "\n";
    return kExitOk;
}

void report_overlays(const fs::path& run_dir, const fs::path& out_dir) {
    const fs::path ckpt_path = run_dir / "checkpoint_best.bin";
    const fs::path cfg_path = run_dir / "config.resolved";
    if (!fs::exists(ckpt_path) || !fs::exists(cfg_path)) return;

    RunSpec spec = parse_run_spec(ConfigFile::load(cfg_path.string()));
    Dataset dataset = load_dataset(spec.data);
    auto ckpt = load_checkpoint<Scalar>(ckpt_path.string());
    const Domain eval_domain = method_traits(spec.train.method).eval_domain;

    const fs::path dst = out_dir / ("overlays_" + run_dir.filename().string());
    fs::create_directories(dst);
    const size_t limit = std::min<size_t>(dataset.test.size(), 12);
    for (size_t i = 0; i < limit; ++i) {
        const LabeledSample& s = dataset.test[i];
        MaskImage pred = predict_mask(ckpt.student, s.image, eval_domain);
        render_overlay((dst / (s.id + ".png")).string(), s.image, pred, s.mask);
    }
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const CommonFlags& flags) {
    if (run_dirs.empty()) throw ConfigError("report: no run directories given");
    const fs::path dir = flags.out_dir.empty()
                             ? fs::path(out_root()) / ("report_" + timestamp())
                             : fs::path(flags.out_dir);
    prepare_out_dir(dir, flags.force);

    std::vector<MetricsRow> rows;
    std::vector<std::string> hashes;
    for (const auto& rd : run_dirs) {
        const fs::path run(rd);
        if (fs::exists(run / "metrics.csv")) {
            auto r = read_metrics_csv((run / "metrics.csv").string());
            rows.insert(rows.end(), r.begin(), r.end());
            for (const auto& row : r) hashes.push_back(row.test_hash);
        } else if (fs::exists(run / "ablation.csv")) {
            auto r = read_metrics_csv((run / "ablation.csv").string());
            rows.insert(rows.end(), r.begin(), r.end());
            for (const auto& row : r) hashes.push_back(row.test_hash);
        }

        if (fs::exists(run / "history.csv")) {
            std::ifstream f(run / "history.csv");
            std::string line;
            std::getline(f, line);
            PlotSeries sup{"l_sup", {}, {}}, unsup{"l_unsup", {}, {}},
                ct{"l_ct", {}, {}}, total{"total", {}, {}};
            while (std::getline(f, line)) {
                std::stringstream ss(line);
                std::string tok;
                std::vector<double> cols;
                while (std::getline(ss, tok, ',')) cols.push_back(std::stod(tok));
                if (cols.size() < 8) continue;
                sup.xs.push_back(cols[0]);
                sup.ys.push_back(cols[1]);
                unsup.xs.push_back(cols[0]);
                unsup.ys.push_back(cols[2]);
                ct.xs.push_back(cols[0]);
                ct.ys.push_back(cols[3]);
                total.xs.push_back(cols[0]);
                total.ys.push_back(cols[4]);
            }
            if (!total.xs.empty())
                line_plot((dir / ("loss_" + run.filename().string() + ".png")).string(),
                          "training loss " + run.filename().string(), "iteration",
                          "loss", {total, sup, unsup, ct});
        }
        if (fs::exists(run / "sweep.csv")) {
            auto sweep_rows = read_sweep_csv((run / "sweep.csv").string());
            std::vector<PlotSeries> series;
            for (const auto& row : sweep_rows) {
                auto it = std::find_if(series.begin(), series.end(),
                                       [&](const PlotSeries& s) {
                                           return s.label == row.method;
                                       });
                if (it == series.end()) {
                    series.push_back(PlotSeries{row.method, {}, {}});
                    it = series.end() - 1;
                }
                it->xs.push_back(row.ratio);
                it->ys.push_back(row.dice_mean);
            }
            line_plot((dir / ("ratio_" + run.filename().string() + ".png")).string(),
                      "dice vs annotation ratio", "ratio", "dice", series);
        }
        report_overlays(run, dir);
    }

    std::string banner;
    for (size_t i = 1; i < hashes.size(); ++i)
        if (!hashes[i].empty() && !hashes[0].empty() && hashes[i] != hashes[0]) {
            banner = "WARNING: runs were evaluated on different test sets "
                     "(test-set hashes differ)\n";
            break;
        }

    write_metrics_csv((dir / "merged.csv").string(), rows);
    const std::string table = banner + metrics_table(rows);
    {
        std::ofstream f(dir / "table.txt", std::ios::binary);
        f << table;
    }
    std::cout << table << "report directory: " << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-anatomy semi-supervised segmentation toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string pretrained, scope, ratios_flag, methods_flag;
    std::vector<std::string> report_dirs;

    auto add_common = [&](CLI::App* cmd, bool with_config = true) {
        if (with_config) cmd->add_option("--config", flags.config_path, "config file");
        cmd->add_option("--out", flags.out_dir, "output directory");
        cmd->add_flag("--force", flags.force, "overwrite existing outputs");
        cmd->add_option("--seed", flags.seed_override, "override the seed");
        cmd->add_option("--iters", flags.iters_override, "override the iteration count");
        cmd->add_option("--method", flags.method_override, "override the method");
    };

    CLI::App* generate = app.add_subcommand("generate", "write a dataset directory");
    add_common(generate);
    CLI::App* train_cmd = app.add_subcommand("train", "train one configuration");
    add_common(train_cmd);
    CLI::App* finetune_cmd =
        app.add_subcommand("finetune", "adapt a source-pretrained checkpoint");
    add_common(finetune_cmd);
    finetune_cmd->add_option("--pretrained", pretrained, "pretrained checkpoint");
    finetune_cmd->add_option("--scope", scope, "last|all");
    CLI::App* ablation = app.add_subcommand("ablation", "run the variant ladder");
    add_common(ablation);
    CLI::App* sweep = app.add_subcommand("sweep", "annotation-ratio sweep");
    add_common(sweep);
    sweep->add_option("--ratios", ratios_flag, "comma-separated ratios");
    sweep->add_option("--methods", methods_flag, "comma-separated methods");
    CLI::App* report = app.add_subcommand("report", "tables, plots and overlays");
    add_common(report, false);
    report->add_option("runs", report_dirs, "run directories");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(flags);
        if (train_cmd->parsed()) return cmd_train(flags);
        if (finetune_cmd->parsed()) return cmd_finetune(flags, pretrained, scope);
        if (ablation->parsed()) return cmd_ablation(flags);
        if (sweep->parsed()) return cmd_sweep(flags, ratios_flag, methods_flag);
        if (report->parsed()) return cmd_report(report_dirs, flags);
    } catch (const ConfigFileError& e) {
        std::cerr << "config file error: " << e.what() << "\n";
        return kExitConfigFile;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigSemantic;
    } catch (const ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return kExitConfigSemantic;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
