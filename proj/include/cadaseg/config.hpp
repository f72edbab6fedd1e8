#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/data/dataset.hpp"
#include "cadaseg/trainer.hpp"

namespace cadaseg {

// Flat key-value configuration with dotted section names:
//   method = cs_cada
//   data.counts = 32,2,18,6,16
// Lines starting with '#' are comments.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigFileError("cannot open config file: " + path);
        ConfigFile cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigFileError("config " + path + ": line " +
                                      std::to_string(lineno) + " has no '='");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigFileError("config " + path + ": empty key at line " +
                                      std::to_string(lineno));
            cfg.values_[key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) {
        values_[key] = value;
    }

    std::string get_string(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    double get_double(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            size_t consumed = 0;
            const double v = std::stod(it->second, &consumed);
            if (consumed != it->second.size())
                throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: " +
                              it->second);
        }
    }

    long get_long(const std::string& key, long dflt) const {
        const double v = get_double(key, static_cast<double>(dflt));
        return static_cast<long>(v);
    }

    uint64_t get_u64(const std::string& key, uint64_t dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not an integer: " +
                              it->second);
        }
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second == "true" || it->second == "1" || it->second == "on")
            return true;
        if (it->second == "false" || it->second == "0" || it->second == "off")
            return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: " +
                          it->second);
    }

    std::vector<int> get_ints(const std::string& key,
                              const std::vector<int>& dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::vector<int> out;
        std::stringstream ss(it->second);
        std::string token;
        while (std::getline(ss, token, ',')) {
            try {
                out.push_back(std::stoi(trim(token)));
            } catch (const std::exception&) {
                throw ConfigError("config: key '" + key +
                                  "' is not an integer list: " + it->second);
            }
        }
        if (out.empty())
            throw ConfigError("config: key '" + key + "' is empty");
        return out;
    }

    // Full serialization, sorted keys: the resolved-config snapshot format.
    std::string dump() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
        return out.str();
    }

private:
    static std::string trim(const std::string& s) {
        const size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

// Everything one run needs, bound from the config file.
struct RunSpec {
    ExperimentConfig train;
    DataSpec data;
    std::string finetune_pretrained;
    std::string finetune_scope = "all";
    std::vector<double> sweep_ratios = {0.05, 0.5};
};

namespace configdetail {

inline void bind_style(const ConfigFile& cfg, const std::string& prefix,
                       SyntheticStyle& style) {
    style.background_level =
        cfg.get_double(prefix + ".background_level", style.background_level);
    style.foreground_contrast =
        cfg.get_double(prefix + ".foreground_contrast", style.foreground_contrast);
    style.noise_sigma = cfg.get_double(prefix + ".noise_sigma", style.noise_sigma);
    style.blur_radius = cfg.get_double(prefix + ".blur_radius", style.blur_radius);
    style.texture_seed = cfg.get_u64(prefix + ".texture_seed", style.texture_seed);
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace configdetail

inline RunSpec parse_run_spec(const ConfigFile& cfg) {
    RunSpec spec;
    ExperimentConfig& t = spec.train;
    t.method = parse_method(cfg.get_string("method", method_name(t.method)));
    t.max_iterations = cfg.get_long("iters", t.max_iterations);
    t.lr0 = cfg.get_double("lr0", t.lr0);
    t.lr_decay = cfg.get_double("lr_decay", t.lr_decay);
    t.lr_step = cfg.get_long("lr_step", t.lr_step);
    t.lambda1 = cfg.get_double("lambda1", t.lambda1);
    t.lambda2 = cfg.get_double("lambda2", t.lambda2);
    t.tau = cfg.get_double("tau", t.tau);
    t.ema_decay = cfg.get_double("ema_decay", t.ema_decay);
    t.perturb_sigma = cfg.get_double("perturb_sigma", t.perturb_sigma);
    t.validate_every = cfg.get_long("validate_every", t.validate_every);
    t.seed = cfg.get_u64("seed", t.seed);
    t.layout.source_labeled = static_cast<int>(
        cfg.get_long("batch.source", t.layout.source_labeled));
    t.layout.target_labeled = static_cast<int>(
        cfg.get_long("batch.target_labeled", t.layout.target_labeled));
    t.layout.target_unlabeled = static_cast<int>(
        cfg.get_long("batch.target_unlabeled", t.layout.target_unlabeled));
    t.augment_enabled = cfg.get_bool("augment.enabled", t.augment_enabled);
    t.min_crop_frac = cfg.get_double("augment.min_crop_frac", t.min_crop_frac);
    t.crop_out = static_cast<int>(cfg.get_long("augment.crop_out", t.crop_out));
    t.finetune_iterations = cfg.get_long("finetune.iters", t.finetune_iterations);

    // desk-scale architecture default
    t.arch.widths = cfg.get_ints("arch.widths", {4, 8, 16, 32});
    t.arch.proj_hidden = static_cast<int>(
        cfg.get_long("arch.proj_hidden", 64));
    t.arch.proj_dim = static_cast<int>(cfg.get_long("arch.proj_dim", 32));

    DataSpec& d = spec.data;
    d.kind = parse_kind(cfg.get_string("data.kind", kind_name(d.kind)));
    d.image_size = static_cast<int>(cfg.get_long("data.image_size", d.image_size));
    const std::vector<int> counts =
        cfg.get_ints("data.counts", {d.counts.source_labeled, d.counts.target_labeled,
                                     d.counts.target_unlabeled, d.counts.validation,
                                     d.counts.test});
    if (counts.size() != 5)
        throw ConfigError("config: data.counts needs 5 values (Ns,Nt1,Nt2,Nval,Ntest)");
    d.counts = DatasetCounts{counts[0], counts[1], counts[2], counts[3], counts[4]};
    d.seed = cfg.get_u64("data.seed", d.seed);
    d.dir = cfg.get_string("data.dir", d.dir);
    d.spacing = cfg.get_double("data.spacing", d.spacing);
    d.green_channel = cfg.get_bool("data.green_channel", d.green_channel);
    d.preprocess.enable_clahe =
        cfg.get_bool("data.preprocess.clahe", d.preprocess.enable_clahe);
    d.preprocess.gamma = cfg.get_double("data.preprocess.gamma", d.preprocess.gamma);
    d.preprocess.out_size = static_cast<int>(
        cfg.get_long("data.preprocess.out_size", d.preprocess.out_size));
    d.preprocess.clahe_tiles = static_cast<int>(
        cfg.get_long("data.preprocess.clahe_tiles", d.preprocess.clahe_tiles));
    d.preprocess.clahe_clip =
        cfg.get_double("data.preprocess.clahe_clip", d.preprocess.clahe_clip);
    configdetail::bind_style(cfg, "data.style.source", d.style_source);
    configdetail::bind_style(cfg, "data.style.target", d.style_target);
    t.spacing = d.spacing;

    const int classes = static_cast<int>(
        cfg.get_long("arch.classes", kind_classes(d.kind)));
    t.arch.num_classes = classes;

    spec.finetune_pretrained =
        cfg.get_string("finetune.pretrained", spec.finetune_pretrained);
    spec.finetune_scope = cfg.get_string("finetune.scope", spec.finetune_scope);
    if (cfg.has("sweep.ratios")) {
        spec.sweep_ratios.clear();
        std::stringstream ss(cfg.get_string("sweep.ratios", ""));
        std::string token;
        while (std::getline(ss, token, ','))
            spec.sweep_ratios.push_back(std::stod(token));
    }
    return spec;
}

// The fully-resolved snapshot written into every run directory; feeding it
// back through parse_run_spec reproduces the run.
inline ConfigFile resolve_config(const RunSpec& spec) {
    using configdetail::fmt_double;
    ConfigFile out;
    const ExperimentConfig& t = spec.train;
    out.set("method", method_name(t.method));
    out.set("iters", std::to_string(t.max_iterations));
    out.set("lr0", fmt_double(t.lr0));
    out.set("lr_decay", fmt_double(t.lr_decay));
    out.set("lr_step", std::to_string(t.lr_step));
    out.set("lambda1", fmt_double(t.lambda1));
    out.set("lambda2", fmt_double(t.lambda2));
    out.set("tau", fmt_double(t.tau));
    out.set("ema_decay", fmt_double(t.ema_decay));
    out.set("perturb_sigma", fmt_double(t.perturb_sigma));
    out.set("validate_every", std::to_string(t.validate_every));
    out.set("seed", std::to_string(t.seed));
    out.set("batch.source", std::to_string(t.layout.source_labeled));
    out.set("batch.target_labeled", std::to_string(t.layout.target_labeled));
    out.set("batch.target_unlabeled", std::to_string(t.layout.target_unlabeled));
    out.set("augment.enabled", t.augment_enabled ? "true" : "false");
    out.set("augment.min_crop_frac", fmt_double(t.min_crop_frac));
    out.set("augment.crop_out", std::to_string(t.crop_out));
    out.set("finetune.iters", std::to_string(t.finetune_iterations));
    std::string widths;
    for (size_t i = 0; i < t.arch.widths.size(); ++i)
        widths += (i ? "," : "") + std::to_string(t.arch.widths[i]);
    out.set("arch.widths", widths);
    out.set("arch.classes", std::to_string(t.arch.num_classes));
    out.set("arch.proj_hidden", std::to_string(t.arch.proj_hidden));
    out.set("arch.proj_dim", std::to_string(t.arch.proj_dim));

    const DataSpec& d = spec.data;
    out.set("data.kind", kind_name(d.kind));
    out.set("data.image_size", std::to_string(d.image_size));
    out.set("data.counts", std::to_string(d.counts.source_labeled) + "," +
                               std::to_string(d.counts.target_labeled) + "," +
                               std::to_string(d.counts.target_unlabeled) + "," +
                               std::to_string(d.counts.validation) + "," +
                               std::to_string(d.counts.test));
    out.set("data.seed", std::to_string(d.seed));
    if (!d.dir.empty()) out.set("data.dir", d.dir);
    out.set("data.spacing", fmt_double(d.spacing));
    out.set("data.green_channel", d.green_channel ? "true" : "false");
    out.set("data.preprocess.clahe", d.preprocess.enable_clahe ? "true" : "false");
    out.set("data.preprocess.gamma", fmt_double(d.preprocess.gamma));
    out.set("data.preprocess.out_size", std::to_string(d.preprocess.out_size));
    out.set("data.preprocess.clahe_tiles", std::to_string(d.preprocess.clahe_tiles));
    out.set("data.preprocess.clahe_clip", fmt_double(d.preprocess.clahe_clip));
    auto put_style = [&](const std::string& prefix, const SyntheticStyle& s) {
        out.set(prefix + ".background_level", fmt_double(s.background_level));
        out.set(prefix + ".foreground_contrast", fmt_double(s.foreground_contrast));
        out.set(prefix + ".noise_sigma", fmt_double(s.noise_sigma));
        out.set(prefix + ".blur_radius", fmt_double(s.blur_radius));
        out.set(prefix + ".texture_seed", std::to_string(s.texture_seed));
    };
    put_style("data.style.source", d.style_source);
    put_style("data.style.target", d.style_target);

    if (!spec.finetune_pretrained.empty())
        out.set("finetune.pretrained", spec.finetune_pretrained);
    out.set("finetune.scope", spec.finetune_scope);
    std::string ratios;
    for (size_t i = 0; i < spec.sweep_ratios.size(); ++i)
        ratios += (i ? "," : "") + configdetail::fmt_double(spec.sweep_ratios[i]);
    out.set("sweep.ratios", ratios);
    return out;
}

}  // namespace cadaseg
