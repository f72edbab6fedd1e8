#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "cadaseg/core/error.hpp"

namespace cadaseg {

// Written into every run directory before training starts and finalized
// afterwards; together with the resolved config snapshot it is sufficient
// to re-run the experiment exactly.
struct RunManifest {
    std::string command;
    std::string method;
    uint64_t seed = 0;
    long iterations = 0;
    std::string dataset_hash;
    std::string test_hash;
    std::string out_dir;
    std::string config_file = "config.resolved";
    std::string status = "running";
    double wall_seconds = 0.0;
    double best_val_dice = -1.0;
    long best_iteration = -1;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["method"] = m.method;
    j["seed"] = m.seed;
    j["iterations"] = m.iterations;
    j["dataset_hash"] = m.dataset_hash;
    j["test_hash"] = m.test_hash;
    j["out_dir"] = m.out_dir;
    j["config_file"] = m.config_file;
    j["status"] = m.status;
    j["wall_seconds"] = m.wall_seconds;
    j["best_val_dice"] = m.best_val_dice;
    j["best_iteration"] = m.best_iteration;
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest: " + path);
    f << j.dump(2) << "\n";
}

inline RunManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    RunManifest m;
    m.command = j.value("command", "");
    m.method = j.value("method", "");
    m.seed = j.value("seed", 0ull);
    m.iterations = j.value("iterations", 0l);
    m.dataset_hash = j.value("dataset_hash", "");
    m.test_hash = j.value("test_hash", "");
    m.out_dir = j.value("out_dir", "");
    m.config_file = j.value("config_file", "config.resolved");
    m.status = j.value("status", "");
    m.wall_seconds = j.value("wall_seconds", 0.0);
    m.best_val_dice = j.value("best_val_dice", -1.0);
    m.best_iteration = j.value("best_iteration", -1l);
    return m;
}

}  // namespace cadaseg
