#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cadaseg/data/dataset.hpp"
#include "cadaseg/metrics.hpp"
#include "cadaseg/trainer.hpp"

namespace cadaseg {

// ---------------------------------------------------------------------------
// CSV / table formatting
// ---------------------------------------------------------------------------

namespace csvdetail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string fmt2(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace csvdetail

inline std::string history_csv_header() {
    return "iter,l_sup,l_unsup,l_ct,total,lr,consistency_weight,raw_unsup";
}

inline std::string history_csv_line(const HistoryRow& r) {
    using csvdetail::fmt;
    std::ostringstream out;
    out << r.iter << ',' << fmt(r.l_sup) << ',' << fmt(r.l_unsup) << ','
        << fmt(r.l_ct) << ',' << fmt(r.total) << ',' << fmt(r.lr) << ','
        << fmt(r.consistency_weight) << ',' << fmt(r.raw_unsup);
    return out.str();
}

inline void write_history_csv(const std::string& path, const TrainHistory& h) {
    std::ofstream f(path, std::ios::binary);  // binary: byte-stable newlines
    if (!f) throw IoError("cannot write " + path);
    f << history_csv_header() << "\n";
    for (const auto& row : h.rows) f << history_csv_line(row) << "\n";
}

inline void write_validation_csv(const std::string& path, const TrainHistory& h) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "iter,mean_dice,is_best\n";
    for (const auto& v : h.validations)
        f << v.iter << ',' << csvdetail::fmt(v.mean_dice) << ','
          << (v.is_best ? 1 : 0) << "\n";
}

inline std::string metrics_csv_header() {
    return "method,class,n_cases,dice_mean,dice_sd,recall_mean,recall_sd,"
           "precision_mean,precision_sd,assd_mean,assd_sd,assd_excluded,test_hash";
}

inline void metrics_csv_rows(const MetricsRow& row, std::ostream& out) {
    using csvdetail::fmt;
    auto line = [&](const ClassStats& s) {
        out << row.method << ','
            << (s.class_id < 0 ? std::string("average") : std::to_string(s.class_id))
            << ',' << row.n_cases << ',' << fmt(s.dice_mean) << ','
            << fmt(s.dice_sd) << ',' << fmt(s.recall_mean) << ','
            << fmt(s.recall_sd) << ',' << fmt(s.precision_mean) << ','
            << fmt(s.precision_sd) << ',';
        if (s.has_assd)
            out << fmt(s.assd_mean) << ',' << fmt(s.assd_sd);
        else
            out << ',';
        out << ',' << s.assd_excluded << ',' << row.test_hash << "\n";
    };
    for (const auto& s : row.per_class) line(s);
    line(row.average);
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << metrics_csv_header() << "\n";
    for (const auto& row : rows) metrics_csv_rows(row, f);
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string line;
    std::getline(f, line);  // header
    std::vector<MetricsRow> rows;
    bool block_open = false;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        cols.resize(13);
        ClassStats s;
        s.class_id = cols[1] == "average" ? -1 : std::stoi(cols[1]);
        s.dice_mean = std::stod(cols[3]);
        s.dice_sd = std::stod(cols[4]);
        s.recall_mean = std::stod(cols[5]);
        s.recall_sd = std::stod(cols[6]);
        s.precision_mean = std::stod(cols[7]);
        s.precision_sd = std::stod(cols[8]);
        s.has_assd = !cols[9].empty();
        if (s.has_assd) {
            s.assd_mean = std::stod(cols[9]);
            s.assd_sd = std::stod(cols[10]);
        }
        s.assd_excluded = cols[11].empty() ? 0 : std::stoi(cols[11]);

        // a method block is a run of per-class lines closed by "average"
        if (!block_open) {
            MetricsRow r;
            r.method = cols[0];
            r.n_cases = std::stoi(cols[2]);
            r.test_hash = cols[12];
            rows.push_back(r);
            block_open = true;
        }
        if (s.class_id < 0) {
            rows.back().average = s;
            block_open = false;
        } else {
            rows.back().per_class.push_back(s);
        }
    }
    return rows;
}

// Aligned plain-text comparison table (Dice/Recall/Precision/ASSD, average
// over foreground classes).
inline std::string metrics_table(const std::vector<MetricsRow>& rows) {
    using csvdetail::fmt2;
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %-18s %-18s %-18s %-14s\n", "method",
                  "dice(%)", "recall(%)", "precision(%)", "assd");
    out << line;
    out << std::string(88, '-') << "\n";
    for (const auto& r : rows) {
        const ClassStats& s = r.average;
        const std::string assd_str =
            s.has_assd ? fmt2(s.assd_mean) + "+-" + fmt2(s.assd_sd) : "n/a";
        std::snprintf(line, sizeof(line), "%-18s %-18s %-18s %-18s %-14s\n",
                      r.method.c_str(),
                      (fmt2(s.dice_mean) + "+-" + fmt2(s.dice_sd)).c_str(),
                      (fmt2(s.recall_mean) + "+-" + fmt2(s.recall_sd)).c_str(),
                      (fmt2(s.precision_mean) + "+-" + fmt2(s.precision_sd)).c_str(),
                      assd_str.c_str());
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Ablation harness: trains the Table-II variant ladder with one seed and
// one architecture, evaluates every variant on the same test split.
// ---------------------------------------------------------------------------

inline const std::vector<Method>& ablation_methods() {
    static const std::vector<Method> methods = {
        Method::BaselineTarget, Method::SemtOnly, Method::DsbnOnly,
        Method::SsCada, Method::CsCada};
    return methods;
}

template <typename T>
std::vector<MetricsRow> run_ablation(const ExperimentConfig& base_config,
                                     const Dataset& dataset) {
    std::vector<MetricsRow> rows;
    const std::string hash = test_set_hash(dataset);
    for (Method m : ablation_methods()) {
        ExperimentConfig cfg = base_config;
        cfg.method = m;
        TrainResult<T> result = train<T>(cfg, dataset);
        MetricsRow row =
            evaluate_model(result.best_student, dataset.test,
                           method_traits(m).eval_domain, cfg.spacing, method_name(m));
        row.test_hash = hash;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Annotation-ratio sweep: per ratio, re-partition the target training pool,
// train each method, and record the mean Dice; plus the fully-supervised
// upper bound (every target training image labeled, no unlabeled pool).
// ---------------------------------------------------------------------------

struct SweepRow {
    double ratio = 0.0;
    std::string method;
    int n_labeled = 0;
    double dice_mean = 0.0;
    double dice_sd = 0.0;
};

inline void write_sweep_csv(const std::string& path,
                            const std::vector<SweepRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "ratio,method,n_labeled,dice_mean,dice_sd\n";
    for (const auto& r : rows)
        f << csvdetail::fmt(r.ratio) << ',' << r.method << ',' << r.n_labeled
          << ',' << csvdetail::fmt(r.dice_mean) << ',' << csvdetail::fmt(r.dice_sd)
          << "\n";
}

inline std::vector<SweepRow> read_sweep_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string line;
    std::getline(f, line);
    std::vector<SweepRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        SweepRow r;
        std::getline(ss, tok, ',');
        r.ratio = std::stod(tok);
        std::getline(ss, r.method, ',');
        std::getline(ss, tok, ',');
        r.n_labeled = std::stoi(tok);
        std::getline(ss, tok, ',');
        r.dice_mean = std::stod(tok);
        std::getline(ss, tok, ',');
        r.dice_sd = std::stod(tok);
        rows.push_back(r);
    }
    return rows;
}

template <typename T>
std::vector<SweepRow> run_ratio_sweep(const ExperimentConfig& base_config,
                                      const Dataset& dataset,
                                      const std::vector<double>& ratios,
                                      const std::vector<Method>& methods) {
    for (double r : ratios)
        if (!(r > 0.0 && r <= 1.0))
            throw ConfigError("sweep: ratios must lie in (0,1]");

    std::vector<SweepRow> rows;
    auto eval_one = [&](Method m, const Dataset& ds, double ratio) {
        ExperimentConfig cfg = base_config;
        cfg.method = m;
        TrainResult<T> result = train<T>(cfg, ds);
        MetricsRow mr = evaluate_model(result.best_student, ds.test,
                                       method_traits(m).eval_domain, cfg.spacing,
                                       method_name(m));
        SweepRow row;
        row.ratio = ratio;
        row.method = method_name(m);
        row.n_labeled = static_cast<int>(ds.target_labeled.size());
        row.dice_mean = mr.average.dice_mean;
        row.dice_sd = mr.average.dice_sd;
        return row;
    };

    for (double ratio : ratios) {
        Dataset part = repartition_target(dataset, ratio, base_config.seed);
        for (Method m : methods) rows.push_back(eval_one(m, part, ratio));
    }

    // fully-supervised upper bound: all target labels, supervised only
    Dataset full = repartition_target(dataset, 1.0, base_config.seed);
    SweepRow ub = eval_one(Method::BaselineTarget, full, 1.0);
    ub.method = "upper_bound";
    rows.push_back(ub);
    return rows;
}

}  // namespace cadaseg
