#pragma once

// Training loop: seeded shuffling, mini-batch gradient accumulation of the summed
// objectives, global-norm clipping, Adam, per-epoch validation and checkpoint selection.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "propex/corpus.hpp"
#include "propex/encoder.hpp"
#include "propex/errors.hpp"
#include "propex/evaluator.hpp"
#include "propex/joint_model.hpp"
#include "propex/objectives.hpp"
#include "propex/optimizer.hpp"
#include "propex/rng.hpp"

namespace propex {

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 20;
    int batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0; ///< 0 disables clipping
    std::uint64_t seed = 1;
    std::string selection_metric = "mean_f1";
    DecodePolicy decode = DecodePolicy::threshold;
    ObjectiveConfig objectives;
    EncoderConfig encoder;

    void validate() const
    {
        if (epochs < 1) {
            throw ConfigError("train: epochs must be >= 1");
        }
        if (batch_size < 1) {
            throw ConfigError("train: batch_size must be >= 1");
        }
        if (learning_rate < 0.0) {
            throw ConfigError("train: learning_rate must be >= 0");
        }
        objectives.validate();
        encoder.validate();
    }
};

/// Hyperparameters for a pretrained BERT-base-sized encoder: lr 2e-5, 10 epochs, batch 8, lambda 0.5.
[[nodiscard]] inline TrainConfig large_scale_preset(int mask_words)
{
    TrainConfig c;
    c.learning_rate = 2e-5;
    c.epochs = 10;
    c.batch_size = 8;
    c.objectives.lambda = 0.5;
    c.objectives.mask_words = mask_words;
    return c;
}

struct StepLog {
    long step = 0;
    int epoch = 0;
    LossParts parts;
    double total = 0.0;
};

[[nodiscard]] inline nlohmann::ordered_json to_json(const StepLog& s)
{
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["epoch"] = s.epoch;
    j["L_C"] = s.parts.target;
    if (s.parts.explanation) {
        j["L_E"] = *s.parts.explanation;
    }
    if (s.parts.faithfulness) {
        j["L_F"] = *s.parts.faithfulness;
    }
    if (s.parts.data_consistency) {
        j["L_DC"] = *s.parts.data_consistency;
    }
    if (s.parts.confidence) {
        j["L_CI"] = *s.parts.confidence;
    }
    j["total"] = s.total;
    return j;
}

/// Validation metrics of one epoch, keyed by selection-metric name.
struct EpochRecord {
    int epoch = 0;
    std::map<std::string, double> metrics;
};

[[nodiscard]] inline const std::vector<std::string>& selection_metric_names()
{
    static const std::vector<std::string> names{"mean_f1", "f1_c", "acc_c", "f1_e", "acc_joint"};
    return names;
}

[[nodiscard]] inline std::map<std::string, double> selection_metrics(const CoreMetrics& m)
{
    return {{"mean_f1", (m.target.macro_f1 + m.explanation.macro_f1) / 2.0},
            {"f1_c", m.target.macro_f1},
            {"acc_c", m.target.accuracy},
            {"f1_e", m.explanation.macro_f1},
            {"acc_joint", m.joint_accuracy}};
}

inline void validate_selection_metric(const std::string& metric)
{
    if (std::find(selection_metric_names().begin(), selection_metric_names().end(), metric) == selection_metric_names().end()) {
        throw ConfigError("unknown selection metric '" + metric + "'");
    }
}

/// Epoch with the largest value of `metric`; the earliest epoch wins ties.
[[nodiscard]] inline std::size_t select_checkpoint(const std::vector<EpochRecord>& history, const std::string& metric)
{
    validate_selection_metric(metric);
    if (history.empty()) {
        throw std::invalid_argument("select_checkpoint: empty history");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i].metrics.at(metric) > history[best].metrics.at(metric)) {
            best = i;
        }
    }
    return best;
}

struct TrainResult {
    JointModel best;
    JointModel final;
    std::vector<StepLog> steps;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

/// Per-instance losses of one training step. Gradients are accumulated into the model's
/// parameters scaled by `grad_scale`.
class StepContext {
public:
    StepContext(JointModel& model, const ObjectiveConfig& objectives, std::uint64_t seed)
        : model_(model),
          objectives_(objectives),
          dropout_rng_(Rng(seed).derive(0xd0)),
          faithfulness_rng_(Rng(seed).derive(0xf0)),
          mask_rng_(Rng(seed).derive(0xdc)),
          baseline_(objectives.baseline_momentum, objectives.reward_baseline)
    {
    }

    LossParts accumulate(const Instance& inst, double grad_scale)
    {
        const bool use_dropout = model_.config().encoder.dropout > 0.0;
        ForwardOptions opts;
        opts.explain_class = inst.label;
        opts.dropout_rng = use_dropout ? &dropout_rng_ : nullptr;

        ad::Tape tape;
        ModelGraph g = model_.forward(tape, inst, opts);
        LossParts parts;
        std::vector<ad::Var> terms;

        ad::Var lc = target_loss(g.conditioned, inst.label);
        parts.target = lc.item();
        terms.push_back(lc);

        if (objectives_.supervised_explanations) {
            double value = 0.0;
            if (!inst.rationales.empty()) {
                ad::Var le = explanation_loss(g.sentence_probs, inst.rationales.front());
                value = le.item();
                terms.push_back(le);
            }
            parts.explanation = value;
        }
        if (objectives_.faithfulness) {
            const FaithfulnessSample s = faithfulness_sample(model_, inst, g.output(), objectives_.lambda, faithfulness_rng_);
            ad::Var lf = faithfulness_loss(g.sentence_probs, {s}, baseline_.value());
            baseline_.update(s.reward);
            parts.faithfulness = lf.item();
            terms.push_back(lf);
        }
        if (objectives_.data_consistency) {
            ForwardOptions masked_opts = opts;
            ad::Var ldc = data_consistency_loss(model_, tape, inst, g, static_cast<std::size_t>(objectives_.mask_words), mask_rng_, masked_opts);
            parts.data_consistency = ldc.item();
            terms.push_back(ldc);
        }
        if (objectives_.confidence_indication) {
            ad::Var est = ConfidenceHead{}.estimate(tape, g.sentence_probs, model_.params());
            ad::Var lci = confidence_indication_loss(g.conditioned, g.predicted_class, est);
            parts.confidence = lci.item();
            terms.push_back(lci);
        }
        tape.backward(total_loss(terms), grad_scale);
        return parts;
    }

private:
    JointModel& model_;
    ObjectiveConfig objectives_;
    Rng dropout_rng_;
    Rng faithfulness_rng_;
    Rng mask_rng_;
    RewardBaseline baseline_;
};

[[nodiscard]] inline LossParts average_parts(const std::vector<LossParts>& parts)
{
    LossParts avg;
    const auto n = static_cast<double>(parts.size());
    auto avg_opt = [&](auto member) -> std::optional<double> {
        if (!(parts.front().*member)) {
            return std::nullopt;
        }
        double s = 0.0;
        for (const auto& p : parts) {
            s += *(p.*member);
        }
        return s / n;
    };
    double t = 0.0;
    for (const auto& p : parts) {
        t += p.target;
    }
    avg.target = t / n;
    avg.explanation = avg_opt(&LossParts::explanation);
    avg.faithfulness = avg_opt(&LossParts::faithfulness);
    avg.data_consistency = avg_opt(&LossParts::data_consistency);
    avg.confidence = avg_opt(&LossParts::confidence);
    return avg;
}

/// Trains on data.split("train"), validating on data.split("validation") after each epoch.
[[nodiscard]] inline TrainResult train(const TrainConfig& config, const Dataset& data, const std::function<void(const StepLog&)>& on_step = {},
                                       std::optional<JointModel> initial = std::nullopt)
{
    config.validate();
    validate_selection_metric(config.selection_metric);
    const auto& train_set = data.split("train");
    const auto& validation = data.split("validation");
    if (train_set.empty()) {
        throw ValidationError("train: empty training split");
    }
    for (const auto& [_, items] : data.splits) {
        for (const auto& inst : items) {
            validate(inst, data.num_classes);
        }
    }

    JointModel model = initial ? std::move(*initial)
                               : JointModel(ModelConfig{data.num_classes, config.encoder}, Vocabulary::from_instances(train_set), config.seed);
    Adam adam(AdamConfig{config.learning_rate, config.beta1, config.beta2, config.adam_eps});
    StepContext ctx(model, config.objectives, config.seed);
    Rng shuffle_rng = Rng(config.seed).derive(0x5f);

    TrainResult result;
    std::optional<ParameterStore> best_params;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(end - start);
            model.params().zero_grad();
            std::vector<LossParts> parts;
            std::vector<std::string> ids;
            for (std::size_t b = start; b < end; ++b) {
                const auto& inst = train_set[order[b]];
                ids.push_back(inst.id);
                parts.push_back(ctx.accumulate(inst, scale));
            }
            StepLog log;
            log.step = step++;
            log.epoch = epoch;
            log.parts = average_parts(parts);
            log.total = log.parts.total();
            if (!std::isfinite(log.total) || !std::isfinite(model.params().grad_norm())) {
                throw TrainingDiverged("non-finite loss at step " + std::to_string(log.step), ids);
            }
            model.params().clip_grad_norm(config.clip_norm);
            adam.step(model.params());
            if (on_step) {
                on_step(log);
            }
            result.steps.push_back(std::move(log));
        }

        EpochRecord rec;
        rec.epoch = epoch;
        if (!validation.empty()) {
            rec.metrics = selection_metrics(core_metrics(predict_all(model, validation, config.decode), validation, data.num_classes));
        } else {
            rec.metrics = selection_metrics(CoreMetrics{});
        }
        result.history.push_back(rec);
        if (select_checkpoint(result.history, config.selection_metric) == result.history.size() - 1) {
            best_params = model.params();
        }
    }
    result.best_epoch = select_checkpoint(result.history, config.selection_metric);
    result.final = model;
    result.best = model;
    result.best.params().assign_values(*best_params);
    return result;
}

} // namespace propex
