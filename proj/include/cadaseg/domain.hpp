#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

// Discriminates the two anatomical domains. Every sample and every
// normalization call carries exactly one.
enum class Domain : int { Source = 0, Target = 1 };

inline const char* domain_name(Domain d) {
    return d == Domain::Source ? "source" : "target";
}
inline Domain other_domain(Domain d) {
    return d == Domain::Source ? Domain::Target : Domain::Source;
}
constexpr int kNumDomains = 2;

struct LabeledSample {
    GrayImage image;   // [0,1] intensities
    MaskImage mask;    // class ids < num_classes
    Domain domain = Domain::Source;
    std::string id;
};

struct UnlabeledSample {
    GrayImage image;
    Domain domain = Domain::Target;  // always Target
    std::string id;
};

// Per-batch quotas for the three training pools.
struct BatchLayout {
    int source_labeled = 0;
    int target_labeled = 0;
    int target_unlabeled = 0;

    int total() const {
        return source_labeled + target_labeled + target_unlabeled;
    }
};

// Rendering style of one synthetic domain. The sign of foreground_contrast
// selects bright-on-dark vs dark-on-bright structures.
struct SyntheticStyle {
    double background_level = 0.2;
    double foreground_contrast = 0.6;
    double noise_sigma = 0.03;
    double blur_radius = 0.8;
    uint64_t texture_seed = 0;

    void validate() const {
        if (noise_sigma < 0.0)
            throw ParameterError("style: noise_sigma must be >= 0");
        if (blur_radius < 0.0)
            throw ParameterError("style: blur_radius must be >= 0");
    }
    bool operator==(const SyntheticStyle&) const = default;
};

enum class StructureKind { Tubular, Circular };

inline StructureKind parse_kind(const std::string& s) {
    if (s == "tubular") return StructureKind::Tubular;
    if (s == "circular") return StructureKind::Circular;
    throw ParameterError("unknown structure kind: " + s);
}

inline const char* kind_name(StructureKind k) {
    return k == StructureKind::Tubular ? "tubular" : "circular";
}

inline int kind_classes(StructureKind k) {
    return k == StructureKind::Tubular ? 2 : 3;
}

struct DatasetCounts {
    int source_labeled = 0;    // N_s
    int target_labeled = 0;    // N_t1
    int target_unlabeled = 0;  // N_t2
    int validation = 0;
    int test = 0;

    void validate() const {
        if (source_labeled <= 0 || target_labeled <= 0 ||
            target_unlabeled <= 0 || validation <= 0 || test <= 0)
            throw ParameterError("dataset counts must all be positive");
    }
    int total() const {
        return source_labeled + target_labeled + target_unlabeled +
               validation + test;
    }
};

// The two-domain dataset bundle used by training and evaluation.
// target_train_full keeps masks for every target training image so the
// annotation-ratio harness can re-partition labeled/unlabeled splits.
struct Dataset {
    std::vector<LabeledSample> source_labeled;     // S_L
    std::vector<LabeledSample> target_labeled;     // T_L
    std::vector<UnlabeledSample> target_unlabeled; // T_U
    std::vector<LabeledSample> target_train_full;  // T_L + masked T_U (when known)
    std::vector<LabeledSample> validation;         // target domain
    std::vector<LabeledSample> test;               // target domain
    int num_classes = 2;

    // Instrumentation: how many samples each pool has handed out. Gating
    // tests assert the forbidden pools of a method variant stay at zero.
    mutable size_t reads_source = 0;
    mutable size_t reads_target_labeled = 0;
    mutable size_t reads_target_unlabeled = 0;
};

// A composed mini-batch; quotas match the layout that produced it.
struct SampleBatch {
    std::vector<LabeledSample> source_labeled;
    std::vector<LabeledSample> target_labeled;
    std::vector<UnlabeledSample> target_unlabeled;

    int total() const {
        return static_cast<int>(source_labeled.size() + target_labeled.size() +
                                target_unlabeled.size());
    }
};

}  // namespace cadaseg
