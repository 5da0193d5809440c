#pragma once

// Training losses: target and explanation cross-entropy, the REINFORCE surrogate for the
// faithfulness reward, the data-consistency L1 term and the confidence-indication L1 term.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "propex/autograd.hpp"
#include "propex/confidence_head.hpp"
#include "propex/corpus.hpp"
#include "propex/errors.hpp"
#include "propex/joint_model.hpp"
#include "propex/rng.hpp"

namespace propex {

struct ObjectiveConfig {
    bool supervised_explanations = true;
    bool faithfulness = false;
    bool data_consistency = false;
    bool confidence_indication = false;
    double lambda = 0.5;          ///< target fraction of selected sentences
    int mask_words = 2;           ///< K words masked for data consistency
    bool reward_baseline = true;  ///< subtract an EMA of the reward
    double baseline_momentum = 0.9;

    void validate() const
    {
        if (!(lambda >= 0.0 && lambda <= 1.0)) {
            throw ConfigError("objectives: lambda must be in [0, 1]");
        }
        if (mask_words < 0) {
            throw ConfigError("objectives: mask_words must be >= 0");
        }
        if (!(baseline_momentum >= 0.0 && baseline_momentum < 1.0)) {
            throw ConfigError("objectives: baseline_momentum must be in [0, 1)");
        }
    }

    friend bool operator==(const ObjectiveConfig&, const ObjectiveConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ObjectiveConfig& c)
{
    j = {{"supervised_explanations", c.supervised_explanations},
         {"faithfulness", c.faithfulness},
         {"data_consistency", c.data_consistency},
         {"confidence_indication", c.confidence_indication},
         {"lambda", c.lambda},
         {"mask_words", c.mask_words},
         {"reward_baseline", c.reward_baseline},
         {"baseline_momentum", c.baseline_momentum}};
}

inline void from_json(const nlohmann::json& j, ObjectiveConfig& c)
{
    c.supervised_explanations = j.value("supervised_explanations", c.supervised_explanations);
    c.faithfulness = j.value("faithfulness", c.faithfulness);
    c.data_consistency = j.value("data_consistency", c.data_consistency);
    c.confidence_indication = j.value("confidence_indication", c.confidence_indication);
    c.lambda = j.value("lambda", c.lambda);
    c.mask_words = j.value("mask_words", c.mask_words);
    c.reward_baseline = j.value("reward_baseline", c.reward_baseline);
    c.baseline_momentum = j.value("baseline_momentum", c.baseline_momentum);
}

/// Objective switches for a named configuration: sup, sup+f, sup+dc, sup+ci, sup+all and the
/// unsup variants, which drop the supervised explanation loss. Names are case-insensitive.
[[nodiscard]] inline ObjectiveConfig objective_preset(const std::string& preset, ObjectiveConfig base = {})
{
    std::string name = preset;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::string rest;
    if (name.rfind("unsup", 0) == 0) {
        base.supervised_explanations = false;
        rest = name.substr(5);
    } else if (name.rfind("sup", 0) == 0) {
        base.supervised_explanations = true;
        rest = name.substr(3);
    } else {
        throw ConfigError("unknown objectives preset '" + preset + "'");
    }
    base.faithfulness = base.data_consistency = base.confidence_indication = false;
    if (rest.empty()) {
        return base;
    }
    if (rest == "+f") {
        base.faithfulness = true;
    } else if (rest == "+dc") {
        base.data_consistency = true;
    } else if (rest == "+ci") {
        base.confidence_indication = true;
    } else if (rest == "+all") {
        base.faithfulness = base.data_consistency = base.confidence_indication = true;
    } else {
        throw ConfigError("unknown objectives preset '" + preset + "'");
    }
    return base;
}

[[nodiscard]] inline const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names{"sup", "sup+f", "sup+dc", "sup+ci", "sup+all",
                                                "unsup", "unsup+f", "unsup+dc", "unsup+ci", "unsup+all"};
    return names;
}

inline constexpr double probability_floor = 1e-12;

// ---------------------------------------------------------------- supervised terms

/// -log p_C[y], with p_C[y] floored at 1e-12.
[[nodiscard]] inline ad::Var target_loss(ad::Var p_c, int y)
{
    return ad::scale(ad::log(ad::pick(p_c, 0, y), probability_floor), -1.0);
}

[[nodiscard]] inline double target_loss(const Eigen::VectorXd& p_c, int y)
{
    ad::Tape tape(false);
    return target_loss(tape.constant(p_c.transpose()), y).item();
}

[[nodiscard]] inline ad::Matrix mask_column(const Mask& m)
{
    ad::Matrix out(static_cast<ad::Index>(m.size()), 1);
    for (std::size_t j = 0; j < m.size(); ++j) {
        out(static_cast<ad::Index>(j), 0) = static_cast<double>(m[j]);
    }
    return out;
}

/// Mean binary cross-entropy between S x 1 sentence probabilities and a gold mask.
[[nodiscard]] inline ad::Var explanation_loss(ad::Var sentence_probs, const Mask& gold)
{
    if (static_cast<std::size_t>(sentence_probs.rows()) != gold.size()) {
        throw ValidationError("explanation_loss: gold mask length differs from sentence count");
    }
    return ad::scale(ad::bernoulli_log_prob(sentence_probs, mask_column(gold), probability_floor), -1.0 / static_cast<double>(gold.size()));
}

[[nodiscard]] inline double explanation_loss(const Eigen::VectorXd& sentence_probs, const Mask& gold)
{
    ad::Tape tape(false);
    return explanation_loss(tape.constant(sentence_probs), gold).item();
}

// ---------------------------------------------------------------- faithfulness

struct FaithfulnessSample {
    Mask mask;             ///< sampled selection c^E
    double log_prob = 0.0; ///< log-density of `mask` under the sentence probabilities
    double reward = 0.0;
    int sufficient_class = 0; ///< prediction with only the selected sentences visible
    int complement_class = 0; ///< prediction with only the unselected sentences visible
};

/// 1[l_S = c] - 1[l_Co = c] - |fraction selected - lambda|.
[[nodiscard]] inline double faithfulness_reward(int predicted, int sufficient, int complement, const Mask& mask, double lambda)
{
    const double selected = static_cast<double>(std::count(mask.begin(), mask.end(), 1)) / static_cast<double>(mask.size());
    return (sufficient == predicted ? 1.0 : 0.0) - (complement == predicted ? 1.0 : 0.0) - std::abs(selected - lambda);
}

[[nodiscard]] inline double mask_log_prob(const Eigen::VectorXd& probs, const Mask& mask)
{
    ad::Tape tape(false);
    return ad::bernoulli_log_prob(tape.constant(probs), mask_column(mask), probability_floor).item();
}

/// Draws c^E ~ Bern(sentence_probs) and scores it with two gradient-free forwards on the
/// selected-only and complement-only inputs.
[[nodiscard]] inline FaithfulnessSample faithfulness_sample(JointModel& model, const Instance& inst, const ModelOutput& output,
                                                            double lambda, Rng& rng)
{
    FaithfulnessSample s;
    s.mask.resize(output.num_sentences());
    for (std::size_t j = 0; j < s.mask.size(); ++j) {
        s.mask[j] = rng.bernoulli(output.sentence_probs(static_cast<Eigen::Index>(j))) ? 1 : 0;
    }
    s.log_prob = mask_log_prob(output.sentence_probs, s.mask);
    s.sufficient_class = model.infer(mask_sentences(inst, s.mask)).predicted_class;
    s.complement_class = model.infer(mask_sentences(inst, complement(s.mask))).predicted_class;
    s.reward = faithfulness_reward(output.predicted_class, s.sufficient_class, s.complement_class, s.mask, lambda);
    return s;
}

/// Exponential moving average of the reward, used as a constant baseline.
class RewardBaseline {
public:
    explicit RewardBaseline(double momentum = 0.9, bool enabled = true) : momentum_(momentum), enabled_(enabled) {}

    [[nodiscard]] double value() const noexcept { return enabled_ ? value_ : 0.0; }

    void update(double reward) { value_ = momentum_ * value_ + (1.0 - momentum_) * reward; }

private:
    double momentum_;
    bool enabled_;
    double value_ = 0.0;
};

/// REINFORCE surrogate: mean over samples of -(R - baseline) * log p(mask). Its gradient
/// with respect to the sentence probabilities is an unbiased estimate of -dE[R].
[[nodiscard]] inline ad::Var faithfulness_loss(ad::Var sentence_probs, const std::vector<FaithfulnessSample>& samples, double baseline)
{
    if (samples.empty()) {
        throw std::invalid_argument("faithfulness_loss: no samples");
    }
    std::vector<ad::Var> terms;
    terms.reserve(samples.size());
    for (const auto& s : samples) {
        terms.push_back(ad::scale(ad::bernoulli_log_prob(sentence_probs, mask_column(s.mask), probability_floor), -(s.reward - baseline)));
    }
    ad::Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        total = ad::add(total, terms[i]);
    }
    return ad::scale(total, 1.0 / static_cast<double>(samples.size()));
}

// ---------------------------------------------------------------- data consistency

/// Mean absolute difference of two S x N sigmoid score matrices.
[[nodiscard]] inline ad::Var data_consistency_loss(ad::Var score_probs, ad::Var masked_score_probs)
{
    return ad::mean(ad::abs(ad::sub(score_probs, masked_score_probs)));
}

/// Runs a second forward (with gradients) on a copy of the instance with K random sentence
/// words masked and compares the full sigmoid score matrices.
[[nodiscard]] inline ad::Var data_consistency_loss(JointModel& model, ad::Tape& tape, const Instance& inst, const ModelGraph& full,
                                                   std::size_t k, Rng& rng, const ForwardOptions& opts = {})
{
    ModelGraph masked = model.forward(tape, mask_random_words(inst, k, rng), opts);
    return data_consistency_loss(full.score_probs, masked.score_probs);
}

// ---------------------------------------------------------------- confidence indication

/// |p_C[c] - estimated confidence|.
[[nodiscard]] inline ad::Var confidence_indication_loss(ad::Var conditioned, int predicted_class, ad::Var estimate)
{
    return ad::abs(ad::sub(ad::pick(conditioned, 0, predicted_class), estimate));
}

// ---------------------------------------------------------------- total

/// Loss values of one step. Inactive terms are empty.
struct LossParts {
    double target = 0.0;
    std::optional<double> explanation;
    std::optional<double> faithfulness;
    std::optional<double> data_consistency;
    std::optional<double> confidence;

    /// Plain sum of the active terms, always in the order C, E, F, DC, CI.
    [[nodiscard]] double total() const
    {
        double t = target;
        for (const auto& part : {explanation, faithfulness, data_consistency, confidence}) {
            if (part) {
                t += *part;
            }
        }
        return t;
    }
};

/// Unweighted sum of loss terms.
[[nodiscard]] inline ad::Var total_loss(const std::vector<ad::Var>& terms)
{
    if (terms.empty()) {
        throw std::invalid_argument("total_loss: no active terms");
    }
    ad::Var t = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        t = ad::add(t, terms[i]);
    }
    return t;
}

} // namespace propex
