#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/nn/model.hpp"

namespace cadaseg {

// Single-archive checkpoint: named f64 tensors. Contains the architecture
// descriptor, every weight, both domains' DSBN statistics and the training
// iteration counter. Teacher tensors live under a "teacher/" prefix.
// float <-> f64 round-trips are exact, so reloading reproduces forwards
// bit-identically.

namespace ckptdetail {

constexpr char kMagic[8] = {'C', 'A', 'D', 'A', 'C', 'K', 'P', '1'};

inline void write_u64(std::ofstream& f, uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline uint64_t read_u64(std::ifstream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

inline void write_entry(std::ofstream& f, const std::string& name,
                        const std::vector<double>& data) {
    write_u64(f, name.size());
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(f, data.size());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

template <typename T>
std::vector<double> widen(const std::vector<T>& v) {
    return std::vector<double>(v.begin(), v.end());
}

}  // namespace ckptdetail

using CheckpointMap = std::map<std::string, std::vector<double>>;

template <typename T>
void collect_tensors(ModelParams<T>& params, const std::string& prefix,
                     CheckpointMap& out) {
    visit_trainable(params, [&](const std::string& name, std::vector<T>& v) {
        out[prefix + name] = ckptdetail::widen(v);
    });
    visit_stats(params, [&](const std::string& name, std::vector<T>& v) {
        out[prefix + name] = ckptdetail::widen(v);
    });
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& student,
                     const ModelParams<T>* teacher, long iteration) {
    CheckpointMap entries;
    collect_tensors(const_cast<ModelParams<T>&>(student), "", entries);
    if (teacher)
        collect_tensors(const_cast<ModelParams<T>&>(*teacher), "teacher/", entries);

    const ArchDescriptor& a = student.arch;
    entries["meta.iteration"] = {static_cast<double>(iteration)};
    entries["meta.arch.widths"] =
        std::vector<double>(a.widths.begin(), a.widths.end());
    entries["meta.arch.in_channels"] = {static_cast<double>(a.in_channels)};
    entries["meta.arch.classes"] = {static_cast<double>(a.num_classes)};
    entries["meta.arch.proj_hidden"] = {static_cast<double>(a.proj_hidden)};
    entries["meta.arch.proj_dim"] = {static_cast<double>(a.proj_dim)};
    entries["meta.arch.bn_epsilon"] = {a.bn_epsilon};
    entries["meta.arch.bn_momentum"] = {a.bn_momentum};
    entries["meta.has_teacher"] = {teacher ? 1.0 : 0.0};

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot write " + path);
    f.write(ckptdetail::kMagic, sizeof(ckptdetail::kMagic));
    ckptdetail::write_u64(f, entries.size());
    for (const auto& [name, data] : entries) ckptdetail::write_entry(f, name, data);
    if (!f) throw IoError("checkpoint: write failed for " + path);
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& student,
                     long iteration) {
    save_checkpoint(path, student, static_cast<const ModelParams<T>*>(nullptr),
                    iteration);
}

inline CheckpointMap read_checkpoint_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, ckptdetail::kMagic, sizeof(magic)) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    const uint64_t count = ckptdetail::read_u64(f);
    CheckpointMap entries;
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = ckptdetail::read_u64(f);
        std::string name(name_len, '\0');
        f.read(name.data(), static_cast<std::streamsize>(name_len));
        const uint64_t n = ckptdetail::read_u64(f);
        std::vector<double> data(n);
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(n * sizeof(double)));
        if (!f) throw IoError("checkpoint: truncated file " + path);
        entries[name] = std::move(data);
    }
    return entries;
}

template <typename T>
struct Checkpoint {
    ModelParams<T> student;
    ModelParams<T> teacher;  // valid when has_teacher
    bool has_teacher = false;
    long iteration = 0;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    CheckpointMap entries = read_checkpoint_map(path);
    auto need = [&](const std::string& name) -> const std::vector<double>& {
        auto it = entries.find(name);
        if (it == entries.end())
            throw IoError("checkpoint: missing entry " + name + " in " + path);
        return it->second;
    };

    ArchDescriptor arch;
    arch.widths.clear();
    for (double w : need("meta.arch.widths"))
        arch.widths.push_back(static_cast<int>(w));
    arch.in_channels = static_cast<int>(need("meta.arch.in_channels")[0]);
    arch.num_classes = static_cast<int>(need("meta.arch.classes")[0]);
    arch.proj_hidden = static_cast<int>(need("meta.arch.proj_hidden")[0]);
    arch.proj_dim = static_cast<int>(need("meta.arch.proj_dim")[0]);
    arch.bn_epsilon = need("meta.arch.bn_epsilon")[0];
    arch.bn_momentum = need("meta.arch.bn_momentum")[0];

    Checkpoint<T> ckpt;
    ckpt.iteration = static_cast<long>(need("meta.iteration")[0]);
    ckpt.has_teacher = need("meta.has_teacher")[0] != 0.0;

    auto fill = [&](ModelParams<T>& params, const std::string& prefix) {
        auto assign = [&](const std::string& name, std::vector<T>& v) {
            const std::vector<double>& src = need(prefix + name);
            if (src.size() != v.size())
                throw IoError("checkpoint: tensor size mismatch for " + prefix + name);
            for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(src[i]);
        };
        visit_trainable(params, assign);
        visit_stats(params, assign);
    };

    ckpt.student = build_model<T>(arch, 0);
    fill(ckpt.student, "");
    if (ckpt.has_teacher) {
        ckpt.teacher = build_model<T>(arch, 0);
        fill(ckpt.teacher, "teacher/");
    }
    return ckpt;
}

}  // namespace cadaseg
