#include "xrf/metrics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "xrf/error.h"
#include "xrf/kvconfig.h"
#include "xrf/ops.h"

namespace xrf {

double binary_accuracy(std::span<const double> probs, std::span<const double> targets, double threshold) {
    if (probs.size() != targets.size()) throw DimensionError("binary_accuracy: length mismatch");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("binary_accuracy: threshold outside (0,1)");
    if (probs.empty()) throw DimensionError("binary_accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool predicted = probs[i] >= threshold;
        const bool actual = targets[i] >= 0.5;
        hits += predicted == actual ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.size());
}

double binary_accuracy(const Tensor& probs, const Tensor& targets, double threshold) {
    if (probs.shape() != targets.shape()) {
        throw DimensionError("binary_accuracy: " + shape_str(probs.shape()) + " vs " + shape_str(targets.shape()));
    }
    return binary_accuracy(probs.data(), targets.data(), threshold);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw DimensionError("roc_curve: scores and labels differ in length");
    std::int64_t pos = 0;
    for (double y : labels) pos += y >= 0.5 ? 1 : 0;
    const auto neg = static_cast<std::int64_t>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw DegenerateClassError("roc_curve: labels contain a single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.n_pos = pos;
    curve.n_neg = neg;
    curve.points.push_back({0.0, 0.0});
    // Twice the area in units of one (positive, negative) pair.
    std::int64_t area2 = 0;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        const std::int64_t tp_prev = tp, fp_prev = fp;
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]] >= 0.5) ++tp;
            else ++fp;
            ++i;
        }
        area2 += (fp - fp_prev) * (tp + tp_prev);
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos)});
    }
    curve.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return curve;
}

std::size_t EvalReport::scored_classes() const {
    return static_cast<std::size_t>(std::count_if(classes.begin(), classes.end(), [](const auto& c) {
        return !c.skipped;
    }));
}

EvalReport evaluate_scores(std::span<const double> probs, std::span<const double> targets, std::size_t num_classes,
                           double threshold) {
    if (num_classes == 0 || probs.size() % num_classes != 0) throw DimensionError("evaluate: bad class count");
    if (probs.size() != targets.size()) throw DimensionError("evaluate: scores and targets differ in length");
    if (probs.empty()) throw DataError("evaluate: empty split");
    EvalReport report;
    report.n_samples = probs.size() / num_classes;
    report.accuracy = binary_accuracy(probs, targets, threshold);
    double sum = 0.0;
    std::size_t scored = 0;
    std::vector<double> col_scores(report.n_samples), col_labels(report.n_samples);
    for (std::size_t k = 0; k < num_classes; ++k) {
        ClassResult r;
        r.class_index = k;
        for (std::size_t i = 0; i < report.n_samples; ++i) {
            col_scores[i] = probs[i * num_classes + k];
            col_labels[i] = targets[i * num_classes + k];
            if (col_labels[i] >= 0.5) ++r.n_pos;
            else ++r.n_neg;
        }
        if (r.n_pos == 0 || r.n_neg == 0) {
            r.skipped = true;
        } else {
            r.curve = roc_curve(col_scores, col_labels);
            r.curve.class_index = static_cast<std::int64_t>(k);
            sum += r.curve.auc;
            ++scored;
        }
        report.classes.push_back(std::move(r));
    }
    report.macro_auc = scored > 0 ? sum / static_cast<double>(scored) : std::numeric_limits<double>::quiet_NaN();
    return report;
}

Predictions predict_dataset(Model& model, const Dataset& dataset, std::int64_t batch) {
    if (dataset.empty()) throw DataError("evaluate: empty split");
    if (batch < 1) throw ConfigError("batch must be at least 1");
    const auto& spec = model.spec();
    Predictions out;
    out.n = dataset.size();
    out.k = static_cast<std::size_t>(spec.num_classes);
    NoGradGuard no_grad;
    ForwardContext ctx;
    ctx.training = false;
    for (std::size_t start = 0; start < dataset.size(); start += static_cast<std::size_t>(batch)) {
        const auto end = std::min(dataset.size(), start + static_cast<std::size_t>(batch));
        std::vector<LabeledSample> samples;
        samples.reserve(end - start);
        for (auto i = start; i < end; ++i) samples.push_back(dataset.load(i, spec.height, spec.width));
        const Tensor raw = model.forward(stack_images(samples), ctx);
        const Tensor probs = model.emits_logits() ? sigmoid(raw) : raw;
        out.outputs.insert(out.outputs.end(), raw.data().begin(), raw.data().end());
        out.probs.insert(out.probs.end(), probs.data().begin(), probs.data().end());
        const Tensor labels = stack_labels(samples);
        out.targets.insert(out.targets.end(), labels.data().begin(), labels.data().end());
    }
    return out;
}

EvalReport evaluate(Model& model, const Dataset& dataset, std::int64_t batch) {
    const auto pred = predict_dataset(model, dataset, batch);
    return evaluate_scores(pred.probs, pred.targets, pred.k);
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

}  // namespace

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
    auto out = open_csv(path);
    out << "fpr,tpr\n";
    for (const auto& p : curve.points) out << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
}

void write_roc_summary_csv(const std::filesystem::path& path, const EvalReport& report) {
    auto out = open_csv(path);
    out << "class,auc,n_pos,n_neg\n";
    for (const auto& c : report.classes) {
        out << kClassNames.at(c.class_index) << ',' << (c.skipped ? std::string() : format_double(c.curve.auc)) << ','
            << c.n_pos << ',' << c.n_neg << '\n';
    }
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report, const std::string& model,
                    const std::string& split) {
    auto out = open_csv(path);
    out << "model,split,accuracy,macro_auc,n_samples\n";
    out << model << ',' << split << ',' << format_double(report.accuracy) << ','
        << (std::isnan(report.macro_auc) ? std::string() : format_double(report.macro_auc)) << ','
        << report.n_samples << '\n';
}

}  // namespace xrf
