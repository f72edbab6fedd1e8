#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadaseg/core/png_io.hpp"
#include "cadaseg/core/rng.hpp"
#include "cadaseg/core/sha1.hpp"
#include "cadaseg/data/preprocess.hpp"
#include "cadaseg/data/synthetic.hpp"
#include "cadaseg/domain.hpp"

namespace cadaseg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Batch composition
// ---------------------------------------------------------------------------

namespace datadetail {

// Distinct draw when the pool is large enough, with replacement otherwise.
inline std::vector<size_t> draw_indices(size_t pool, int quota, Rng& rng) {
    std::vector<size_t> out;
    out.reserve(quota);
    if (static_cast<size_t>(quota) <= pool) {
        std::vector<size_t> idx(pool);
        std::iota(idx.begin(), idx.end(), size_t(0));
        rng.shuffle(idx);
        out.assign(idx.begin(), idx.begin() + quota);
    } else {
        for (int i = 0; i < quota; ++i)
            out.push_back(static_cast<size_t>(
                rng.uniform_int(0, static_cast<int>(pool) - 1)));
    }
    return out;
}

}  // namespace datadetail

inline SampleBatch compose_batch(const Dataset& ds, const BatchLayout& layout,
                                 Rng& rng) {
    if (layout.source_labeled < 0 || layout.target_labeled < 0 ||
        layout.target_unlabeled < 0)
        throw ParameterError("compose_batch: negative quota");
    SampleBatch batch;
    if (layout.source_labeled > 0) {
        if (ds.source_labeled.empty())
            throw ConfigError("compose_batch: source pool required but empty");
        for (size_t i : datadetail::draw_indices(ds.source_labeled.size(),
                                                 layout.source_labeled, rng))
            batch.source_labeled.push_back(ds.source_labeled[i]);
        ds.reads_source += layout.source_labeled;
    }
    if (layout.target_labeled > 0) {
        if (ds.target_labeled.empty())
            throw ConfigError("compose_batch: labeled target pool required but empty");
        for (size_t i : datadetail::draw_indices(ds.target_labeled.size(),
                                                 layout.target_labeled, rng))
            batch.target_labeled.push_back(ds.target_labeled[i]);
        ds.reads_target_labeled += layout.target_labeled;
    }
    if (layout.target_unlabeled > 0) {
        if (ds.target_unlabeled.empty())
            throw ConfigError("compose_batch: unlabeled target pool required but empty");
        for (size_t i : datadetail::draw_indices(ds.target_unlabeled.size(),
                                                 layout.target_unlabeled, rng))
            batch.target_unlabeled.push_back(ds.target_unlabeled[i]);
        ds.reads_target_unlabeled += layout.target_unlabeled;
    }
    return batch;
}

// Deterministically re-splits the full target training pool into labeled /
// unlabeled parts. Used by the annotation-ratio sweep.
inline Dataset repartition_target(const Dataset& ds, double ratio,
                                  uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw ConfigError("repartition: ratio must lie in (0,1]");
    if (ds.target_train_full.empty())
        throw ConfigError("repartition: no fully-annotated target pool available");
    const size_t n = ds.target_train_full.size();
    const size_t n_labeled = static_cast<size_t>(ratio * static_cast<double>(n));
    if (n_labeled == 0)
        throw ConfigError("repartition: ratio yields zero labeled images");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    Rng rng(derive_seed(seed, 0x5EED));
    rng.shuffle(idx);

    Dataset out = ds;
    out.target_labeled.clear();
    out.target_unlabeled.clear();
    for (size_t k = 0; k < n; ++k) {
        const LabeledSample& s = ds.target_train_full[idx[k]];
        if (k < n_labeled) {
            out.target_labeled.push_back(s);
        } else {
            UnlabeledSample u;
            u.image = s.image;
            u.domain = Domain::Target;
            u.id = s.id;
            out.target_unlabeled.push_back(std::move(u));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Content hash: deterministic digest of every pixel and mask the dataset
// holds, in a fixed pool order.
// ---------------------------------------------------------------------------

inline std::string dataset_content_hash(const Dataset& ds) {
    Sha1 h;
    auto add_labeled = [&](const std::vector<LabeledSample>& pool) {
        for (const auto& s : pool) {
            h.update(s.id);
            h.update_vector(s.image.data);
            h.update_vector(s.mask.data);
        }
    };
    add_labeled(ds.source_labeled);
    add_labeled(ds.target_labeled);
    for (const auto& s : ds.target_unlabeled) {
        h.update(s.id);
        h.update_vector(s.image.data);
    }
    add_labeled(ds.validation);
    add_labeled(ds.test);
    return h.hex_digest();
}

inline std::string test_set_hash(const Dataset& ds) {
    Sha1 h;
    for (const auto& s : ds.test) {
        h.update(s.id);
        h.update_vector(s.image.data);
        h.update_vector(s.mask.data);
    }
    return h.hex_digest();
}

// ---------------------------------------------------------------------------
// Disk layout: <root>/<domain>/{images,masks}/<id>.png plus splits.json.
// ---------------------------------------------------------------------------

namespace datadetail {

inline void write_gray_png(const fs::path& path, const GrayImage& img) {
    std::vector<uint8_t> px(img.data.size());
    for (size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<uint8_t>(
            std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    write_png(path.string(), px, img.cols, img.rows, 1);
}

inline void write_mask_png(const fs::path& path, const MaskImage& mask) {
    write_png(path.string(), mask.data, mask.cols, mask.rows, 1);
}

inline GrayImage load_gray(const fs::path& path, bool green_channel) {
    PngImage png = read_png(path.string(), green_channel
                                               ? ChannelCollapse::Green
                                               : ChannelCollapse::Luma);
    GrayImage img(png.height, png.width);
    for (size_t i = 0; i < png.gray.size(); ++i)
        img.data[i] = png.gray[i] / 255.0;
    return img;
}

inline MaskImage load_mask(const fs::path& path) {
    PngImage png = read_png(path.string());
    MaskImage mask(png.height, png.width);
    mask.data = png.gray;
    return mask;
}

}  // namespace datadetail

inline void export_dataset(const Dataset& ds, const fs::path& root) {
    using namespace datadetail;
    std::error_code ec;
    fs::create_directories(root / "source" / "images", ec);
    fs::create_directories(root / "source" / "masks", ec);
    fs::create_directories(root / "target" / "images", ec);
    fs::create_directories(root / "target" / "masks", ec);
    if (!fs::exists(root / "target" / "masks"))
        throw IoError("export_dataset: cannot create " + root.string());

    nlohmann::json splits;
    splits["classes"] = ds.num_classes;
    auto put_labeled = [&](const std::vector<LabeledSample>& pool,
                           const char* split, const char* dom, bool masks) {
        std::vector<std::string> ids;
        for (const auto& s : pool) {
            write_gray_png(root / dom / "images" / (s.id + ".png"), s.image);
            if (masks) write_mask_png(root / dom / "masks" / (s.id + ".png"), s.mask);
            ids.push_back(s.id);
        }
        splits[split] = ids;
    };
    put_labeled(ds.source_labeled, "source", "source", true);
    put_labeled(ds.target_labeled, "target_labeled", "target", true);
    put_labeled(ds.validation, "validation", "target", true);
    put_labeled(ds.test, "test", "target", true);
    std::vector<std::string> uids;
    for (const auto& s : ds.target_unlabeled) {
        write_gray_png(root / "target" / "images" / (s.id + ".png"), s.image);
        uids.push_back(s.id);
    }
    splits["target_unlabeled"] = uids;

    std::ofstream f(root / "splits.json");
    if (!f) throw IoError("export_dataset: cannot write splits.json");
    f << splits.dump(2) << "\n";
}

struct IngestOptions {
    PreprocessOptions preprocess;
    bool green_channel = false;
    // counts used only when no splits.json is present
    DatasetCounts counts{1, 1, 1, 1, 1};
};

inline Dataset ingest_dataset(const fs::path& root, const IngestOptions& opt) {
    using namespace datadetail;
    if (!fs::exists(root / "target" / "images"))
        throw IoError("ingest: no dataset at " + root.string());

    auto load_sample = [&](const std::string& dom, const std::string& id,
                           bool with_mask) {
        LabeledSample s;
        s.id = id;
        s.domain = dom == "source" ? Domain::Source : Domain::Target;
        GrayImage raw = load_gray(root / dom / "images" / (id + ".png"),
                                  opt.green_channel && dom == "source");
        s.image = preprocess(raw, opt.preprocess);
        if (with_mask) {
            s.mask = load_mask(root / dom / "masks" / (id + ".png"));
            if (s.mask.rows != s.image.rows || s.mask.cols != s.image.cols)
                s.mask = resize_nearest(s.mask, s.image.rows, s.image.cols);
        }
        return s;
    };

    Dataset ds;
    const fs::path splits_path = root / "splits.json";
    if (fs::exists(splits_path)) {
        std::ifstream f(splits_path);
        nlohmann::json splits = nlohmann::json::parse(f, nullptr, true, true);
        ds.num_classes = splits.value("classes", 2);
        for (const auto& id : splits["source"])
            ds.source_labeled.push_back(load_sample("source", id, true));
        for (const auto& id : splits["target_labeled"])
            ds.target_labeled.push_back(load_sample("target", id, true));
        for (const auto& id : splits["target_unlabeled"]) {
            LabeledSample s = load_sample("target", id, false);
            UnlabeledSample u;
            u.image = std::move(s.image);
            u.id = id;
            ds.target_unlabeled.push_back(std::move(u));
        }
        for (const auto& id : splits["validation"])
            ds.validation.push_back(load_sample("target", id, true));
        for (const auto& id : splits["test"])
            ds.test.push_back(load_sample("target", id, true));
    } else {
        // No manifest: masked target images are split T_L / val / test in
        // sorted-id order using the configured counts; unmasked ones are T_U.
        auto list_ids = [&](const fs::path& dir) {
            std::vector<std::string> ids;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.path().extension() == ".png")
                    ids.push_back(e.path().stem().string());
            std::sort(ids.begin(), ids.end());
            return ids;
        };
        for (const auto& id : list_ids(root / "source" / "images"))
            ds.source_labeled.push_back(load_sample("source", id, true));
        std::vector<std::string> masked, unmasked;
        for (const auto& id : list_ids(root / "target" / "images")) {
            if (fs::exists(root / "target" / "masks" / (id + ".png")))
                masked.push_back(id);
            else
                unmasked.push_back(id);
        }
        const DatasetCounts& c = opt.counts;
        if (static_cast<int>(masked.size()) < c.target_labeled + c.validation + c.test)
            throw ConfigError("ingest: not enough annotated target images for the counts");
        size_t k = 0;
        for (int i = 0; i < c.target_labeled; ++i)
            ds.target_labeled.push_back(load_sample("target", masked[k++], true));
        for (int i = 0; i < c.validation; ++i)
            ds.validation.push_back(load_sample("target", masked[k++], true));
        for (int i = 0; i < c.test; ++i)
            ds.test.push_back(load_sample("target", masked[k++], true));
        for (const auto& id : unmasked) {
            LabeledSample s = load_sample("target", id, false);
            UnlabeledSample u;
            u.image = std::move(s.image);
            u.id = id;
            ds.target_unlabeled.push_back(std::move(u));
        }
        int max_class = 1;
        for (const auto& pool : {&ds.source_labeled, &ds.target_labeled})
            for (const auto& s : *pool)
                for (uint8_t v : s.mask.data) max_class = std::max<int>(max_class, v);
        ds.num_classes = max_class + 1;
    }
    ds.target_train_full = ds.target_labeled;  // only known annotations
    return ds;
}

// ---------------------------------------------------------------------------
// Declarative data source: synthetic generation or directory ingestion.
// ---------------------------------------------------------------------------

struct DataSpec {
    StructureKind kind = StructureKind::Circular;
    int image_size = 64;
    DatasetCounts counts{32, 2, 18, 10, 24};
    uint64_t seed = 1;
    SyntheticStyle style_source;
    SyntheticStyle style_target;
    std::string dir;  // non-empty: ingest this directory instead of generating
    double spacing = 1.0;
    bool green_channel = false;
    PreprocessOptions preprocess;

    DataSpec() {
        style_source.background_level = 0.20;
        style_source.foreground_contrast = 0.60;
        style_source.noise_sigma = 0.03;
        style_source.blur_radius = 0.5;
        style_source.texture_seed = 11;
        style_target.background_level = 0.45;
        style_target.foreground_contrast = 0.30;
        style_target.noise_sigma = 0.10;
        style_target.blur_radius = 1.2;
        style_target.texture_seed = 22;
    }
};

inline Dataset load_dataset(const DataSpec& spec) {
    if (!spec.dir.empty()) {
        IngestOptions opt;
        opt.preprocess = spec.preprocess;
        opt.green_channel = spec.green_channel;
        opt.counts = spec.counts;
        return ingest_dataset(spec.dir, opt);
    }
    return generate_synthetic_domains(spec.kind, spec.style_source,
                                      spec.style_target, spec.counts, spec.seed,
                                      spec.image_size);
}

}  // namespace cadaseg
