#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xrf/dataset.h"
#include "xrf/models.h"

namespace xrf {

/// Fraction of entries where (p >= threshold) agrees with the 0/1 target.
double binary_accuracy(std::span<const double> probs, std::span<const double> targets, double threshold = 0.5);
double binary_accuracy(const Tensor& probs, const Tensor& targets, double threshold = 0.5);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::int64_t class_index = -1;
    std::vector<RocPoint> points;  // (0,0) first, (1,1) last
    double auc = 0.0;
    std::int64_t n_pos = 0;
    std::int64_t n_neg = 0;
};

/// One point per distinct score, swept from the highest score down; AUC by
/// the trapezoid rule. Throws DegenerateClassError when labels hold a single
/// class, DimensionError on length mismatch.
RocCurve roc_curve(std::span<const double> scores, std::span<const double> labels);

struct ClassResult {
    std::size_t class_index = 0;
    std::int64_t n_pos = 0;
    std::int64_t n_neg = 0;
    bool skipped = false;  // degenerate: no ROC curve
    RocCurve curve;
};

struct EvalReport {
    std::vector<ClassResult> classes;
    /// Mean AUC over non-skipped classes; NaN when every class is skipped.
    double macro_auc = 0.0;
    double accuracy = 0.0;
    std::size_t n_samples = 0;
    std::size_t scored_classes() const;
};

/// Scores laid out [N,K] row-major.
EvalReport evaluate_scores(std::span<const double> probs, std::span<const double> targets, std::size_t num_classes,
                           double threshold = 0.5);

struct Predictions {
    std::vector<double> outputs;  // raw head outputs (logits for the hybrid)
    std::vector<double> probs;
    std::vector<double> targets;
    std::size_t n = 0;
    std::size_t k = 0;
};

/// Evaluation-mode pass over a dataset in batches of `batch`.
Predictions predict_dataset(Model& model, const Dataset& dataset, std::int64_t batch = 16);

/// Throws DataError when the dataset is empty.
EvalReport evaluate(Model& model, const Dataset& dataset, std::int64_t batch = 16);

/// `fpr,tpr` per point.
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
/// `class,auc,n_pos,n_neg`, one row per class; skipped classes have an empty auc.
void write_roc_summary_csv(const std::filesystem::path& path, const EvalReport& report);
/// `model,split,accuracy,macro_auc,n_samples` plus one data row.
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report, const std::string& model,
                    const std::string& split);

}  // namespace xrf
