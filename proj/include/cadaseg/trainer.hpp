#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cadaseg/data/augment.hpp"
#include "cadaseg/data/dataset.hpp"
#include "cadaseg/losses.hpp"
#include "cadaseg/mean_teacher.hpp"
#include "cadaseg/metrics.hpp"
#include "cadaseg/nn/model.hpp"
#include "cadaseg/nn/optim.hpp"

namespace cadaseg {

// ---------------------------------------------------------------------------
// Method variants
// ---------------------------------------------------------------------------

enum class Method {
    BaselineSource,
    BaselineTarget,
    JointTraining,
    FinetuneLast,
    FinetuneAll,
    DsbnOnly,
    SemtOnly,
    SsCada,
    CsCada
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::BaselineSource: return "baseline_source";
        case Method::BaselineTarget: return "baseline_target";
        case Method::JointTraining: return "joint_training";
        case Method::FinetuneLast: return "finetune_last";
        case Method::FinetuneAll: return "finetune_all";
        case Method::DsbnOnly: return "dsbn_only";
        case Method::SemtOnly: return "semt_only";
        case Method::SsCada: return "ss_cada";
        case Method::CsCada: return "cs_cada";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::BaselineSource, Method::BaselineTarget,
                     Method::JointTraining, Method::FinetuneLast,
                     Method::FinetuneAll, Method::DsbnOnly, Method::SemtOnly,
                     Method::SsCada, Method::CsCada})
        if (s == method_name(m)) return m;
    throw ConfigError("unknown method: " + s);
}

// Which pools a variant reads and which loss terms it activates.
struct MethodTraits {
    bool use_source = false;
    bool use_target_labeled = false;
    bool use_target_unlabeled = false;
    bool use_consistency = false;
    bool use_contrastive = false;
    bool single_bn = false;  // joint training: one normalization set for all
    Domain eval_domain = Domain::Target;
};

inline MethodTraits method_traits(Method m) {
    MethodTraits t;
    switch (m) {
        case Method::BaselineSource:
            t.use_source = true;
            t.eval_domain = Domain::Source;
            break;
        case Method::BaselineTarget:
        case Method::FinetuneLast:
        case Method::FinetuneAll:
            t.use_target_labeled = true;
            break;
        case Method::JointTraining:
            t.use_source = t.use_target_labeled = true;
            t.single_bn = true;
            break;
        case Method::DsbnOnly:
            t.use_source = t.use_target_labeled = true;
            break;
        case Method::SemtOnly:
            t.use_target_labeled = t.use_target_unlabeled = true;
            t.use_consistency = true;
            break;
        case Method::SsCada:
            t.use_source = t.use_target_labeled = t.use_target_unlabeled = true;
            t.use_consistency = true;
            break;
        case Method::CsCada:
            t.use_source = t.use_target_labeled = t.use_target_unlabeled = true;
            t.use_consistency = t.use_contrastive = true;
            break;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    Method method = Method::CsCada;
    long max_iterations = 20000;
    double lr0 = 5e-4;
    double lr_decay = 0.95;
    long lr_step = 1000;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double tau = 0.1;
    double ema_decay = 0.99;
    double perturb_sigma = 0.05;
    long validate_every = 100;
    BatchLayout layout{4, 2, 2};
    ArchDescriptor arch;
    uint64_t seed = 1;
    bool augment_enabled = true;
    double min_crop_frac = 0.8;
    int crop_out = 0;  // 0 keeps the native image size
    double spacing = 1.0;
    long finetune_iterations = 2000;

    void validate() const {
        arch.validate();
        if (max_iterations < 0) throw ConfigError("config: negative iteration count");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw ConfigError("config: lr_decay must lie in (0,1]");
        if (lr_step <= 0) throw ConfigError("config: lr_step must be positive");
        if (lambda1 < 0.0 || lambda2 < 0.0)
            throw ConfigError("config: loss weights must be non-negative");
        if (tau <= 0.0) throw ConfigError("config: tau must be positive");
        if (ema_decay < 0.0 || ema_decay > 1.0)
            throw ConfigError("config: ema_decay must lie in [0,1]");
        if (perturb_sigma < 0.0) throw ConfigError("config: negative noise sigma");
        if (validate_every <= 0) throw ConfigError("config: validate_every must be positive");
    }
};

// lr0 * decay^floor(k / step)
inline double lr_schedule(long k, double lr0, double decay, long step) {
    return lr0 * std::pow(decay, static_cast<double>(k / step));
}

// ---------------------------------------------------------------------------
// History
// ---------------------------------------------------------------------------

struct HistoryRow {
    long iter = 0;
    double l_sup = 0.0;
    double l_unsup = 0.0;     // ramp * raw_unsup
    double l_ct = 0.0;
    double total = 0.0;
    double lr = 0.0;
    double consistency_weight = 0.0;
    double raw_unsup = 0.0;
};

struct ValidationRow {
    long iter = 0;
    double mean_dice = 0.0;
    bool is_best = false;
};

struct TrainHistory {
    std::vector<HistoryRow> rows;
    std::vector<ValidationRow> validations;
    long best_iteration = -1;
    double best_dice = -1.0;
};

template <typename T>
struct TrainResult {
    ModelParams<T> student;
    TeacherState<T> teacher;
    ModelParams<T> best_student;  // best validation mean Dice (final if never validated)
    TrainHistory history;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

template <typename T>
class Trainer {
public:
    Trainer(const ExperimentConfig& cfg, const Dataset& dataset)
        : cfg_(cfg),
          traits_(method_traits(cfg.method)),
          dataset_(dataset),
          student_(build_model<T>(cfg.arch, cfg.seed)),
          teacher_(make_teacher(student_, cfg.ema_decay)),
          data_rng_(derive_seed(cfg.seed, 0xDA7A)),
          perturb_rng_(derive_seed(cfg.seed, 0x0152)) {
        cfg_.validate();
        check_pools();
    }

    const ExperimentConfig& config() const { return cfg_; }
    const MethodTraits& traits() const { return traits_; }
    ModelParams<T>& student() { return student_; }
    TeacherState<T>& teacher() { return teacher_; }
    long iteration() const { return iter_; }

    BatchLayout effective_layout() const {
        BatchLayout l = cfg_.layout;
        if (!traits_.use_source) l.source_labeled = 0;
        if (!traits_.use_target_labeled) l.target_labeled = 0;
        if (!traits_.use_target_unlabeled) l.target_unlabeled = 0;
        return l;
    }

    SampleBatch next_batch() {
        SampleBatch batch = compose_batch(dataset_, effective_layout(), data_rng_);
        if (cfg_.augment_enabled) augment_batch(batch);
        return batch;
    }

    // One optimization step at iteration counter k (Fig. 2 assembly):
    // supervised forwards per domain, perturbed student/teacher consistency
    // on unlabeled target images, paired cross-domain embeddings, one Adam
    // step on the student, then the EMA teacher update.
    HistoryRow train_step(const SampleBatch& batch, long k) {
        if (!grads_) grads_ = std::make_unique<ModelGrads<T>>(student_);
        grads_->zero();

        double l_sup = 0.0, raw_unsup = 0.0, l_ct = 0.0;
        const double ramp =
            traits_.use_consistency
                ? consistency_weight(std::min(k, cfg_.max_iterations),
                                     std::max<long>(cfg_.max_iterations, 1))
                : 0.0;

        std::vector<const GrayImage*> src_images, tgt_images;
        std::vector<const MaskImage*> src_masks, tgt_masks;
        for (const auto& s : batch.source_labeled) {
            src_images.push_back(&s.image);
            src_masks.push_back(&s.mask);
        }
        for (const auto& s : batch.target_labeled) {
            tgt_images.push_back(&s.image);
            tgt_masks.push_back(&s.mask);
        }

        if (traits_.use_source && !src_images.empty()) {
            const Domain dom = traits_.single_bn ? Domain::Target : Domain::Source;
            FeatureMap<T> x = images_to_input<T>(src_images);
            SegTape<T> tape;
            FeatureMap<T> probs =
                forward_segment(x, dom, student_, ForwardMode::TrainUpdate, &tape);
            FeatureMap<T> dprobs(probs.channels, probs.batch, probs.height, probs.width);
            l_sup += seg_loss(probs, src_masks, &dprobs, 1.0);
            backward_segment(dprobs, tape, student_, *grads_);
        }
        if (traits_.use_target_labeled && !tgt_images.empty()) {
            FeatureMap<T> x = images_to_input<T>(tgt_images);
            SegTape<T> tape;
            FeatureMap<T> probs = forward_segment(x, Domain::Target, student_,
                                                  ForwardMode::TrainUpdate, &tape);
            FeatureMap<T> dprobs(probs.channels, probs.batch, probs.height, probs.width);
            l_sup += seg_loss(probs, tgt_masks, &dprobs, 1.0);
            backward_segment(dprobs, tape, student_, *grads_);
        }

        if (traits_.use_consistency && cfg_.lambda1 > 0.0 &&
            !batch.target_unlabeled.empty()) {
            std::vector<const GrayImage*> unl_images;
            for (const auto& s : batch.target_unlabeled) unl_images.push_back(&s.image);
            FeatureMap<T> x = images_to_input<T>(unl_images);
            FeatureMap<T> x_student = perturb(x, perturb_rng_, cfg_.perturb_sigma);
            FeatureMap<T> x_teacher = perturb(x, perturb_rng_, cfg_.perturb_sigma);
            FeatureMap<T> p_teacher = forward_segment(
                x_teacher, Domain::Target, teacher_.params, ForwardMode::TrainFrozen);
            SegTape<T> tape;
            FeatureMap<T> p_student = forward_segment(
                x_student, Domain::Target, student_, ForwardMode::TrainUpdate, &tape);
            FeatureMap<T> dprobs(p_student.channels, p_student.batch,
                                 p_student.height, p_student.width);
            raw_unsup = consistency_loss(p_student, p_teacher, &dprobs,
                                         cfg_.lambda1 * ramp);
            backward_segment(dprobs, tape, student_, *grads_);
        }

        if (traits_.use_contrastive && cfg_.lambda2 > 0.0 && !src_images.empty() &&
            !tgt_images.empty()) {
            const int pairs = static_cast<int>(
                std::min(src_images.size(), tgt_images.size()));
            std::vector<const GrayImage*> src_pair(src_images.begin(),
                                                   src_images.begin() + pairs);
            std::vector<const GrayImage*> tgt_pair(tgt_images.begin(),
                                                   tgt_images.begin() + pairs);
            FeatureMap<T> xs = images_to_input<T>(src_pair);
            FeatureMap<T> xt = images_to_input<T>(tgt_pair);

            ProjTape<T> tsi, tti, tsj, ttj;
            Matrix<T> g_s_i = forward_project(xs, Domain::Source, student_,
                                              ForwardMode::TrainFrozen, &tsi);
            Matrix<T> g_t_i = forward_project(xs, Domain::Target, student_,
                                              ForwardMode::TrainFrozen, &tti);
            Matrix<T> g_s_j = forward_project(xt, Domain::Source, student_,
                                              ForwardMode::TrainFrozen, &tsj);
            Matrix<T> g_t_j = forward_project(xt, Domain::Target, student_,
                                              ForwardMode::TrainFrozen, &ttj);
            Matrix<T> dsi(pairs, g_s_i.cols), dti(pairs, g_s_i.cols),
                dsj(pairs, g_s_i.cols), dtj(pairs, g_s_i.cols);
            l_ct = contrastive_loss(g_s_i, g_t_i, g_s_j, g_t_j, cfg_.tau, &dsi,
                                    &dti, &dsj, &dtj, cfg_.lambda2);
            backward_project(dsi, tsi, student_, *grads_);
            backward_project(dti, tti, student_, *grads_);
            backward_project(dsj, tsj, student_, *grads_);
            backward_project(dtj, ttj, student_, *grads_);
        }

        HistoryRow row;
        row.iter = k;
        row.l_sup = l_sup;
        row.raw_unsup = raw_unsup;
        row.consistency_weight = ramp;
        row.l_unsup = ramp * raw_unsup;
        row.l_ct = l_ct;
        row.total = l_sup + cfg_.lambda1 * row.l_unsup + cfg_.lambda2 * l_ct;
        row.lr = lr_schedule(k, cfg_.lr0, cfg_.lr_decay, cfg_.lr_step);
        if (!std::isfinite(row.total)) {
            std::ostringstream msg;
            msg << "train_step: non-finite loss at iteration " << k
                << " (l_sup=" << l_sup << " raw_unsup=" << raw_unsup
                << " l_ct=" << l_ct << ")";
            throw NumericError(msg.str());
        }

        if (freeze_mask_) freeze_mask_(*grads_);
        opt_.step(student_, *grads_, row.lr);
        if (traits_.use_consistency)
            ema_update(teacher_, student_, cfg_.ema_decay);
        iter_ = k + 1;
        return row;
    }

    // Full loop with validation-based model selection.
    TrainResult<T> train() {
        TrainResult<T> result{student_, teacher_, student_, {}};
        const long k_max = cfg_.max_iterations;
        for (long k = 0; k < k_max; ++k) {
            SampleBatch batch = next_batch();
            result.history.rows.push_back(train_step(batch, k));
            if ((k + 1) % cfg_.validate_every == 0 || k + 1 == k_max)
                validate(result, k + 1);
        }
        if (result.history.best_iteration < 0) result.best_student = student_;
        result.student = student_;
        result.teacher = teacher_;
        return result;
    }

    // Restrict updates to a parameter subset (fine-tuning scopes).
    void set_freeze_mask(std::function<void(ModelGrads<T>&)> mask) {
        freeze_mask_ = std::move(mask);
    }

private:
    void check_pools() const {
        const BatchLayout l = effective_layout();
        if (l.total() <= 0)
            throw ConfigError("config: method uses no pools with this layout");
        auto need = [&](bool used, int quota, size_t pool, const char* name) {
            if (!used) return;
            if (quota <= 0)
                throw ConfigError(std::string("config: method needs a positive ") +
                                  name + " quota");
            if (pool == 0)
                throw ConfigError(std::string("config: method requires the ") + name +
                                  " pool but the dataset has none");
            if (quota < 2)
                throw ConfigError(std::string("config: ") + name +
                                  " quota must be >= 2 for batch statistics");
        };
        need(traits_.use_source, l.source_labeled, dataset_.source_labeled.size(),
             "source");
        need(traits_.use_target_labeled, l.target_labeled,
             dataset_.target_labeled.size(), "labeled-target");
        need(traits_.use_target_unlabeled, l.target_unlabeled,
             dataset_.target_unlabeled.size(), "unlabeled-target");
        if (cfg_.arch.num_classes != dataset_.num_classes)
            throw ConfigError("config: class count differs from the dataset");
    }

    void augment_batch(SampleBatch& batch) {
        auto out_size = [&](const GrayImage& img) {
            return cfg_.crop_out > 0 ? cfg_.crop_out
                                     : std::min(img.rows, img.cols);
        };
        for (auto& s : batch.source_labeled) {
            auto [img, mask] = augment(s.image, &s.mask, data_rng_,
                                       out_size(s.image), cfg_.min_crop_frac);
            s.image = std::move(img);
            s.mask = std::move(*mask);
        }
        for (auto& s : batch.target_labeled) {
            auto [img, mask] = augment(s.image, &s.mask, data_rng_,
                                       out_size(s.image), cfg_.min_crop_frac);
            s.image = std::move(img);
            s.mask = std::move(*mask);
        }
        for (auto& s : batch.target_unlabeled) {
            auto [img, mask] = augment(s.image, nullptr, data_rng_,
                                       out_size(s.image), cfg_.min_crop_frac);
            (void)mask;
            s.image = std::move(img);
        }
    }

    void validate(TrainResult<T>& result, long iter_now) {
        if (dataset_.validation.empty()) return;
        MetricsRow row = evaluate_model(student_, dataset_.validation,
                                        traits_.eval_domain, cfg_.spacing);
        ValidationRow v;
        v.iter = iter_now;
        v.mean_dice = row.average.dice_mean;
        v.is_best = v.mean_dice > result.history.best_dice;
        if (v.is_best) {
            result.history.best_dice = v.mean_dice;
            result.history.best_iteration = iter_now;
            result.best_student = student_;
        }
        result.history.validations.push_back(v);
    }

    ExperimentConfig cfg_;
    MethodTraits traits_;
    const Dataset& dataset_;
    ModelParams<T> student_;
    TeacherState<T> teacher_;
    Adam<T> opt_;
    Rng data_rng_, perturb_rng_;
    long iter_ = 0;
    std::unique_ptr<ModelGrads<T>> grads_;
    std::function<void(ModelGrads<T>&)> freeze_mask_;
};

// Convenience: build, run, return.
template <typename T>
TrainResult<T> train(const ExperimentConfig& cfg, const Dataset& dataset) {
    if (cfg.method == Method::FinetuneLast || cfg.method == Method::FinetuneAll)
        throw ConfigError("train: fine-tuning needs a pretrained model; use finetune()");
    Trainer<T> trainer(cfg, dataset);
    return trainer.train();
}

enum class FinetuneScope { LastBlock, All };

inline FinetuneScope parse_scope(const std::string& s) {
    if (s == "last" || s == "last_block") return FinetuneScope::LastBlock;
    if (s == "all") return FinetuneScope::All;
    throw ParameterError("unknown fine-tuning scope: " + s);
}

// Adapts a source-pretrained model on the labeled target pool. The target
// normalization state starts as a copy of the trained source state; for the
// last-block scope only the top decoder block and the classifier head move.
template <typename T>
TrainResult<T> finetune(const ModelParams<T>& pretrained, FinetuneScope scope,
                        const Dataset& dataset, const ExperimentConfig& base_cfg) {
    ExperimentConfig cfg = base_cfg;
    cfg.method = scope == FinetuneScope::LastBlock ? Method::FinetuneLast
                                                   : Method::FinetuneAll;
    cfg.max_iterations = cfg.finetune_iterations;

    Trainer<T> trainer(cfg, dataset);
    trainer.student() = pretrained;
    trainer.student().copy_domain_states(Domain::Source, Domain::Target);
    trainer.teacher() = make_teacher(trainer.student(), cfg.ema_decay);

    if (scope == FinetuneScope::LastBlock) {
        // Freeze everything but the top decoder block and the classifier
        // head. Clearing the touched flags is enough: the optimizer leaves
        // untouched tensors bit-identical.
        trainer.set_freeze_mask([](ModelGrads<T>& g) {
            auto off_bn = [](DsbnGrads<T>& b) {
                b.touched[0] = b.touched[1] = false;
            };
            auto off_enc = [&](EncBlockGrads<T>& e) {
                e.conv1.touched = e.conv2.touched = false;
                off_bn(e.bn1);
                off_bn(e.bn2);
            };
            for (auto& e : g.encoder) off_enc(e);
            off_enc(g.bottleneck);
            for (size_t i = 1; i < g.decoder.size(); ++i) {
                auto& d = g.decoder[i];
                d.upconv.touched = d.conv1.touched = d.conv2.touched = false;
                off_bn(d.bnu);
                off_bn(d.bn1);
                off_bn(d.bn2);
            }
            g.proj_fc1.touched = false;
            g.proj_fc2.touched = false;
        });
    }
    return trainer.train();
}

}  // namespace cadaseg
