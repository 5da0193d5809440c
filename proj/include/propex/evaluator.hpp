#pragma once

// Target, explanation and joint metrics, the faithfulness / data-consistency /
// confidence-indication property measurements, and the query-only probe.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "propex/confidence_head.hpp"
#include "propex/corpus.hpp"
#include "propex/errors.hpp"
#include "propex/joint_model.hpp"
#include "propex/objectives.hpp"
#include "propex/optimizer.hpp"
#include "propex/rng.hpp"

namespace propex {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; ///< population form

    friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

[[nodiscard]] inline MeanStd mean_std(std::span<const double> xs)
{
    if (xs.empty()) {
        return {};
    }
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    const double mu = s / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) {
        sq += (x - mu) * (x - mu);
    }
    return {mu, std::sqrt(sq / static_cast<double>(xs.size()))};
}

// ---------------------------------------------------------------- target

struct TargetMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

[[nodiscard]] inline double f1_from_counts(double tp, double fp, double fn)
{
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

/// Accuracy and macro-F1 over N classes. A class with no predictions and no gold scores 0.
[[nodiscard]] inline TargetMetrics target_metrics(std::span<const int> pred, std::span<const int> gold, int num_classes)
{
    if (pred.size() != gold.size() || pred.empty()) {
        throw ValidationError("target_metrics: predictions and gold must be equal-length and nonempty");
    }
    std::vector<double> tp(static_cast<std::size_t>(num_classes)), fp(tp), fn(tp);
    double correct = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (int v : {pred[i], gold[i]}) {
            if (v < 0 || v >= num_classes) {
                throw ValidationError("target_metrics: label " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
            }
        }
        const auto p = static_cast<std::size_t>(pred[i]);
        const auto g = static_cast<std::size_t>(gold[i]);
        if (p == g) {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn[g] += 1;
        }
    }
    TargetMetrics m;
    m.accuracy = correct / static_cast<double>(pred.size());
    double f1 = 0.0;
    for (std::size_t c = 0; c < tp.size(); ++c) {
        f1 += f1_from_counts(tp[c], fp[c], fn[c]);
    }
    m.macro_f1 = f1 / static_cast<double>(num_classes);
    return m;
}

// ---------------------------------------------------------------- explanations

struct ExplanationMetrics {
    double precision = 0.0;   ///< explanation-class precision
    double recall = 0.0;      ///< explanation-class recall
    double macro_f1 = 0.0;    ///< mean F1 of the explanation and non-explanation classes
    double positive_f1 = 0.0; ///< explanation-class F1
    std::size_t instances = 0;
    std::size_t skipped = 0;
};

/// Index of the gold mask sharing the most selected sentences with `pred`; first on ties.
[[nodiscard]] inline std::size_t best_gold(const Mask& pred, const std::vector<Mask>& golds)
{
    std::size_t best = 0;
    long best_overlap = -1;
    for (std::size_t g = 0; g < golds.size(); ++g) {
        if (golds[g].size() != pred.size()) {
            throw ValidationError("explanation_metrics: gold and prediction lengths differ");
        }
        long overlap = 0;
        for (std::size_t j = 0; j < pred.size(); ++j) {
            overlap += (pred[j] == 1 && golds[g][j] == 1) ? 1 : 0;
        }
        if (overlap > best_overlap) {
            best_overlap = overlap;
            best = g;
        }
    }
    return best;
}

/// Micro-counted sentence-level metrics against the best-overlapping gold per instance.
/// Instances without gold masks are skipped with a warning.
[[nodiscard]] inline ExplanationMetrics explanation_metrics(const std::vector<Mask>& preds, const std::vector<std::vector<Mask>>& golds)
{
    if (preds.size() != golds.size()) {
        throw ValidationError("explanation_metrics: predictions and gold lists differ in length");
    }
    double tp = 0, fp = 0, fn = 0, tn = 0;
    ExplanationMetrics m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (golds[i].empty()) {
            warn("explanation_metrics: instance " + std::to_string(i) + " has no gold rationale; skipped");
            ++m.skipped;
            continue;
        }
        const Mask& gold = golds[i][best_gold(preds[i], golds[i])];
        for (std::size_t j = 0; j < gold.size(); ++j) {
            const bool p = preds[i][j] == 1;
            const bool g = gold[j] == 1;
            tp += (p && g) ? 1 : 0;
            fp += (p && !g) ? 1 : 0;
            fn += (!p && g) ? 1 : 0;
            tn += (!p && !g) ? 1 : 0;
        }
        ++m.instances;
    }
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.positive_f1 = f1_from_counts(tp, fp, fn);
    m.macro_f1 = (m.positive_f1 + f1_from_counts(tn, fn, fp)) / 2.0;
    return m;
}

/// Fraction of instances whose label is right and whose explanation equals one of the gold masks.
[[nodiscard]] inline double joint_accuracy(std::span<const int> pred_labels, const std::vector<Mask>& pred_expl,
                                           std::span<const int> gold_labels, const std::vector<std::vector<Mask>>& gold_expl)
{
    const std::size_t n = pred_labels.size();
    if (n == 0 || pred_expl.size() != n || gold_labels.size() != n || gold_expl.size() != n) {
        throw ValidationError("joint_accuracy: inputs must be aligned and nonempty");
    }
    double correct = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pred_labels[i] != gold_labels[i]) {
            continue;
        }
        if (std::find(gold_expl[i].begin(), gold_expl[i].end(), pred_expl[i]) != gold_expl[i].end()) {
            correct += 1.0;
        }
    }
    return correct / static_cast<double>(n);
}

// ---------------------------------------------------------------- predictions

struct Prediction {
    std::string id;
    int label = 0;
    Eigen::VectorXd p_c;
    Eigen::VectorXd sentence_probs;
    Mask explanation;
    ModelOutput output;
};

[[nodiscard]] inline Prediction predict(JointModel& model, const Instance& inst, DecodePolicy policy)
{
    Prediction p;
    p.id = inst.id;
    p.output = model.infer(inst);
    p.label = p.output.predicted_class;
    p.p_c = p.output.conditioned;
    p.sentence_probs = p.output.sentence_probs;
    p.explanation = decode_explanation(p.output, policy);
    return p;
}

[[nodiscard]] inline std::vector<Prediction> predict_all(JointModel& model, const std::vector<Instance>& instances, DecodePolicy policy)
{
    std::vector<Prediction> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        out.push_back(predict(model, inst, policy));
    }
    return out;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const Prediction& p)
{
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["predicted_label"] = p.label;
    j["p_C"] = std::vector<double>(p.p_c.data(), p.p_c.data() + p.p_c.size());
    j["sentence_probs"] = std::vector<double>(p.sentence_probs.data(), p.sentence_probs.data() + p.sentence_probs.size());
    j["explanation"] = p.explanation;
    return j;
}

struct CoreMetrics {
    TargetMetrics target;
    ExplanationMetrics explanation;
    double joint_accuracy = 0.0;
};

[[nodiscard]] inline CoreMetrics core_metrics(const std::vector<Prediction>& preds, const std::vector<Instance>& instances, int num_classes)
{
    std::vector<int> pl, gl;
    std::vector<Mask> pe;
    std::vector<std::vector<Mask>> ge;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        pl.push_back(preds[i].label);
        gl.push_back(instances[i].label);
        pe.push_back(preds[i].explanation);
        ge.push_back(instances[i].rationales);
    }
    CoreMetrics m;
    m.target = target_metrics(pl, gl, num_classes);
    m.explanation = explanation_metrics(pe, ge);
    m.joint_accuracy = joint_accuracy(pl, pe, gl, ge);
    return m;
}

// ---------------------------------------------------------------- faithfulness

struct FaithfulnessMetrics {
    double sufficiency = 0.0;  ///< percent of predictions preserved on the selected sentences
    double completeness = 0.0; ///< percent preserved on the unselected sentences (lower is better)
};

[[nodiscard]] inline FaithfulnessMetrics sufficiency_completeness(std::span<const int> full, std::span<const int> selected,
                                                                  std::span<const int> unselected)
{
    if (full.empty() || selected.size() != full.size() || unselected.size() != full.size()) {
        throw ValidationError("sufficiency_completeness: inputs must be aligned and nonempty");
    }
    double s = 0.0;
    double c = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        s += selected[i] == full[i] ? 1.0 : 0.0;
        c += unselected[i] == full[i] ? 1.0 : 0.0;
    }
    const auto n = static_cast<double>(full.size());
    return {100.0 * s / n, 100.0 * c / n};
}

[[nodiscard]] inline FaithfulnessMetrics sufficiency_completeness(JointModel& model, const std::vector<Instance>& instances, DecodePolicy policy)
{
    std::vector<int> full, sel, unsel;
    for (const auto& inst : instances) {
        const Prediction p = predict(model, inst, policy);
        full.push_back(p.label);
        sel.push_back(model.infer(mask_sentences(inst, p.explanation)).predicted_class);
        unsel.push_back(model.infer(mask_sentences(inst, complement(p.explanation))).predicted_class);
    }
    return sufficiency_completeness(full, sel, unsel);
}

// ---------------------------------------------------------------- data consistency

struct DataConsistencyMetrics {
    MeanStd pred_diff;
    MeanStd expl_diff;
};

/// |p_C[c] - p_CM[c]| and the unnormalised sum over sentences of |sigmoid(p_E[:,c]) - sigmoid(p_EM[:,c])|,
/// both at the original predicted class c.
[[nodiscard]] inline std::pair<double, double> consistency_diffs(const ModelOutput& full, const ModelOutput& masked)
{
    const int c = full.predicted_class;
    const double pred = std::abs(full.conditioned(c) - masked.conditioned(c));
    const double expl = (full.sentence_probs_for(c) - masked.sentence_probs_for(c)).cwiseAbs().sum();
    return {pred, expl};
}

[[nodiscard]] inline DataConsistencyMetrics data_consistency_metric(JointModel& model, const std::vector<Instance>& instances,
                                                                    std::size_t k, int repeats, std::uint64_t seed)
{
    if (repeats < 1) {
        throw ConfigError("data_consistency_metric: repeats must be >= 1");
    }
    Rng rng = Rng(seed).derive(0xdc);
    std::vector<double> pred, expl;
    for (const auto& inst : instances) {
        const ModelOutput full = model.infer(inst);
        for (int r = 0; r < repeats; ++r) {
            const ModelOutput masked = model.infer(mask_random_words(inst, k, rng));
            auto [p, e] = consistency_diffs(full, masked);
            pred.push_back(p);
            expl.push_back(e);
        }
    }
    return {mean_std(pred), mean_std(expl)};
}

// ---------------------------------------------------------------- confidence indication

[[nodiscard]] inline double confidence_estimate(const ModelOutput& out, ParameterStore& head_params, const ConfidenceHead& head = {})
{
    ad::Tape tape(false);
    return head.estimate(tape, tape.constant(out.sentence_probs), head_params).item();
}

[[nodiscard]] inline MeanStd confidence_indication_metric(JointModel& model, ParameterStore& head_params, const std::vector<Instance>& instances,
                                                          const ConfidenceHead& head = {})
{
    if (!head_params.contains(head.prefix + ".weight")) {
        throw ConfigError("confidence_indication_metric: missing confidence head parameters");
    }
    std::vector<double> diffs;
    for (const auto& inst : instances) {
        const ModelOutput out = model.infer(inst);
        diffs.push_back(std::abs(out.conditioned(out.predicted_class) - confidence_estimate(out, head_params, head)));
    }
    return mean_std(diffs);
}

struct ProbeConfig {
    int steps = 500;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
};

/// Fits a fresh confidence head to a frozen model by full-batch Adam on the same L1 objective.
[[nodiscard]] inline ParameterStore fit_confidence_probe(JointModel& model, const std::vector<Instance>& instances, const ProbeConfig& cfg = {},
                                                         const ConfidenceHead& head = {})
{
    ParameterStore probe;
    Rng rng(cfg.seed);
    head.init_parameters(probe, rng, 0.1);
    std::vector<ModelOutput> outs;
    outs.reserve(instances.size());
    for (const auto& inst : instances) {
        outs.push_back(model.infer(inst));
    }
    if (outs.empty()) {
        return probe;
    }
    Adam adam(AdamConfig{cfg.learning_rate});
    for (int step = 0; step < cfg.steps; ++step) {
        probe.zero_grad();
        for (const auto& out : outs) {
            ad::Tape tape;
            ad::Var est = head.estimate(tape, tape.constant(out.sentence_probs), probe);
            ad::Var target = tape.scalar(out.conditioned(out.predicted_class));
            tape.backward(ad::abs(ad::sub(target, est)), 1.0 / static_cast<double>(outs.size()));
        }
        adam.step(probe);
    }
    return probe;
}

// ---------------------------------------------------------------- query-only probe

struct QueryOnlyMetrics {
    TargetMetrics model;
    TargetMetrics random;
};

/// Target metrics with every sentence masked, plus a seeded uniform-random baseline.
[[nodiscard]] inline QueryOnlyMetrics query_only_eval(JointModel& model, const std::vector<Instance>& instances, std::uint64_t seed)
{
    std::vector<int> pred, rand, gold;
    Rng rng = Rng(seed).derive(0x90);
    for (const auto& inst : instances) {
        pred.push_back(model.infer(mask_sentences(inst, Mask(inst.num_sentences(), 0))).predicted_class);
        rand.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(model.num_classes()))));
        gold.push_back(inst.label);
    }
    return {target_metrics(pred, gold, model.num_classes()), target_metrics(rand, gold, model.num_classes())};
}

// ---------------------------------------------------------------- report

struct EvalOptions {
    DecodePolicy policy = DecodePolicy::threshold;
    bool properties = false;
    bool query_only = false;
    int mask_words = 2;
    int repeats = 5;
    std::uint64_t seed = 0;
    ProbeConfig probe;
};

struct EvalReport {
    std::size_t instances = 0;
    CoreMetrics core;
    std::optional<FaithfulnessMetrics> faithfulness;
    std::optional<DataConsistencyMetrics> data_consistency;
    std::optional<MeanStd> confidence;
    std::string confidence_source; ///< "trained" or "probe"
    std::optional<QueryOnlyMetrics> query_only;
};

/// Evaluates `instances`. Property metrics run only when requested. The confidence metric
/// uses the model's own head when `trained_confidence_head` is set, otherwise a probe
/// fitted on `probe_instances`.
[[nodiscard]] inline EvalReport evaluate(JointModel& model, const std::vector<Instance>& instances, const EvalOptions& opts,
                                         bool trained_confidence_head = false, const std::vector<Instance>* probe_instances = nullptr)
{
    EvalReport r;
    r.instances = instances.size();
    const auto preds = predict_all(model, instances, opts.policy);
    r.core = core_metrics(preds, instances, model.num_classes());
    if (opts.properties) {
        r.faithfulness = sufficiency_completeness(model, instances, opts.policy);
        r.data_consistency = data_consistency_metric(model, instances, static_cast<std::size_t>(opts.mask_words), opts.repeats, opts.seed);
        if (trained_confidence_head) {
            r.confidence = confidence_indication_metric(model, model.params(), instances);
            r.confidence_source = "trained";
        } else {
            if (probe_instances == nullptr) {
                throw ConfigError("confidence probe requires a validation split");
            }
            ParameterStore probe = fit_confidence_probe(model, *probe_instances, opts.probe);
            r.confidence = confidence_indication_metric(model, probe, instances);
            r.confidence_source = "probe";
        }
    }
    if (opts.query_only) {
        r.query_only = query_only_eval(model, instances, opts.seed);
    }
    return r;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const EvalReport& r)
{
    nlohmann::ordered_json j;
    j["instances"] = r.instances;
    j["target"] = {{"accuracy", r.core.target.accuracy}, {"macro_f1", r.core.target.macro_f1}};
    j["explanation"] = {{"precision", r.core.explanation.precision},
                        {"recall", r.core.explanation.recall},
                        {"macro_f1", r.core.explanation.macro_f1},
                        {"positive_f1", r.core.explanation.positive_f1},
                        {"skipped", r.core.explanation.skipped}};
    j["joint_accuracy"] = r.core.joint_accuracy;
    if (r.faithfulness) {
        j["faithfulness"] = {{"sufficiency", r.faithfulness->sufficiency}, {"completeness", r.faithfulness->completeness}};
    }
    if (r.data_consistency) {
        j["data_consistency"] = {{"pred_diff", {{"mean", r.data_consistency->pred_diff.mean}, {"std", r.data_consistency->pred_diff.std}}},
                                 {"expl_diff", {{"mean", r.data_consistency->expl_diff.mean}, {"std", r.data_consistency->expl_diff.std}}}};
    }
    if (r.confidence) {
        j["confidence"] = {{"diff", {{"mean", r.confidence->mean}, {"std", r.confidence->std}}}, {"source", r.confidence_source}};
    }
    if (r.query_only) {
        j["query_only"] = {{"accuracy", r.query_only->model.accuracy},
                           {"macro_f1", r.query_only->model.macro_f1},
                           {"random_accuracy", r.query_only->random.accuracy},
                           {"random_macro_f1", r.query_only->random.macro_f1}};
    }
    return j;
}

/// Markdown tables: target/explanation/joint scores, then one table per requested property.
[[nodiscard]] inline std::string to_markdown(const EvalReport& r, const std::string& title = "Evaluation")
{
    std::ostringstream md;
    md << std::fixed << std::setprecision(2);
    auto pct = [](double x) { return 100.0 * x; };
    md << "## " << title << "\n\n";
    md << "| F1-C | Acc-C | P-E | R-E | F1-E | Acc-Joint |\n";
    md << "|---|---|---|---|---|---|\n";
    md << "| " << pct(r.core.target.macro_f1) << " | " << pct(r.core.target.accuracy) << " | " << pct(r.core.explanation.precision) << " | "
       << pct(r.core.explanation.recall) << " | " << pct(r.core.explanation.macro_f1) << " | " << pct(r.core.joint_accuracy) << " |\n";
    if (r.faithfulness) {
        md << "\n### Faithfulness\n\n| Suff. | Compl. |\n|---|---|\n";
        md << "| " << r.faithfulness->sufficiency << " | " << r.faithfulness->completeness << " |\n";
    }
    md << std::setprecision(4);
    if (r.data_consistency) {
        md << "\n### Data consistency\n\n| Pred. | Expl. |\n|---|---|\n";
        md << "| " << r.data_consistency->pred_diff.mean << " (" << r.data_consistency->pred_diff.std << ") | " << r.data_consistency->expl_diff.mean
           << " (" << r.data_consistency->expl_diff.std << ") |\n";
    }
    if (r.confidence) {
        md << "\n### Confidence indication (" << r.confidence_source << " head)\n\n| Diff. |\n|---|\n";
        md << "| " << r.confidence->mean << " (" << r.confidence->std << ") |\n";
    }
    md << std::setprecision(2);
    if (r.query_only) {
        md << "\n### Query only\n\n| Model | F1-C | Acc-C |\n|---|---|---|\n";
        md << "| Random | " << pct(r.query_only->random.macro_f1) << " | " << pct(r.query_only->random.accuracy) << " |\n";
        md << "| Query only | " << pct(r.query_only->model.macro_f1) << " | " << pct(r.query_only->model.accuracy) << " |\n";
    }
    return md.str();
}

} // namespace propex
