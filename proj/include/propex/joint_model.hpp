#pragma once

// Joint explanation-and-prediction model. The query-marker representation feeds the
// target head, every sentence-marker representation feeds the explanation head, and the
// prior class distribution is conditioned on the class-wise sentence evidence.

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "propex/autograd.hpp"
#include "propex/confidence_head.hpp"
#include "propex/corpus.hpp"
#include "propex/encoder.hpp"
#include "propex/errors.hpp"
#include "propex/parameters.hpp"
#include "propex/rng.hpp"

namespace propex {

struct ModelConfig {
    int num_classes = 2;
    EncoderConfig encoder;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Values of one forward pass.
struct ModelOutput {
    Eigen::VectorXd prior;             ///< class distribution before conditioning
    ad::Matrix sentence_class_scores;  ///< S x N raw explanation scores
    Eigen::VectorXd conditioned;       ///< final class distribution
    int predicted_class = 0;           ///< argmax of `conditioned`
    int explained_class = 0;           ///< column used for `sentence_probs`
    Eigen::VectorXd sentence_probs;    ///< sigmoid of the explained column

    [[nodiscard]] std::size_t num_sentences() const { return static_cast<std::size_t>(sentence_probs.size()); }

    /// Sigmoid of column c of the raw scores.
    [[nodiscard]] Eigen::VectorXd sentence_probs_for(int c) const
    {
        return sentence_class_scores.col(c).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    }
};

/// Graph handles of one forward pass on a tape.
struct ModelGraph {
    ad::Var prior;          ///< 1 x N
    ad::Var scores;         ///< S x N
    ad::Var score_probs;    ///< S x N, sigmoid(scores)
    ad::Var conditioned;    ///< 1 x N
    ad::Var sentence_logits;///< S x 1
    ad::Var sentence_probs; ///< S x 1
    int predicted_class = 0;
    int explained_class = 0;

    [[nodiscard]] ModelOutput output() const
    {
        ModelOutput out;
        out.prior = prior.value().row(0).transpose();
        out.sentence_class_scores = scores.value();
        out.conditioned = conditioned.value().row(0).transpose();
        out.predicted_class = predicted_class;
        out.explained_class = explained_class;
        out.sentence_probs = sentence_probs.value().col(0);
        return out;
    }
};

struct ForwardOptions {
    std::optional<int> explain_class; ///< teacher-forced column; defaults to the predicted class
    Rng* dropout_rng = nullptr;       ///< null runs without dropout
};

[[nodiscard]] inline int argmax(const Eigen::VectorXd& v)
{
    int best = 0;
    for (int i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) {
            best = i;
        }
    }
    return best;
}

/// Multiplies the prior by the per-class mean sentence evidence and renormalises.
/// prior: 1 x N distribution; scores: S x N raw scores.
[[nodiscard]] inline ad::Var condition(ad::Var prior, ad::Var scores)
{
    return ad::normalize(ad::mul(prior, ad::mean_rows(ad::sigmoid(scores))));
}

[[nodiscard]] inline Eigen::VectorXd condition(const Eigen::VectorXd& prior, const ad::Matrix& scores)
{
    ad::Tape tape(false);
    ad::Var p = tape.constant(prior.transpose());
    ad::Var s = tape.constant(scores);
    return condition(p, s).value().row(0).transpose();
}

enum class DecodePolicy { threshold, top1 };

[[nodiscard]] inline DecodePolicy parse_decode_policy(const std::string& s)
{
    if (s == "threshold") {
        return DecodePolicy::threshold;
    }
    if (s == "top1") {
        return DecodePolicy::top1;
    }
    throw ConfigError("unknown decode policy '" + s + "' (expected threshold or top1)");
}

[[nodiscard]] inline std::string to_string(DecodePolicy p) { return p == DecodePolicy::threshold ? "threshold" : "top1"; }

/// threshold: sentences with probability >= 0.5, falling back to top1 when none qualifies.
/// top1: the single highest-probability sentence, lowest index on ties.
[[nodiscard]] inline Mask decode_explanation(const Eigen::VectorXd& sentence_probs, DecodePolicy policy)
{
    Mask out(static_cast<std::size_t>(sentence_probs.size()), 0);
    if (out.empty()) {
        return out;
    }
    if (policy == DecodePolicy::threshold) {
        bool any = false;
        for (Eigen::Index j = 0; j < sentence_probs.size(); ++j) {
            if (sentence_probs(j) >= 0.5) {
                out[static_cast<std::size_t>(j)] = 1;
                any = true;
            }
        }
        if (any) {
            return out;
        }
    }
    out[static_cast<std::size_t>(argmax(sentence_probs))] = 1;
    return out;
}

[[nodiscard]] inline Mask decode_explanation(const ModelOutput& output, DecodePolicy policy)
{
    return decode_explanation(output.sentence_probs, policy);
}

class JointModel {
public:
    JointModel() = default;

    /// Fresh model with parameters drawn from `seed`.
    JointModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed)
        : config_(std::move(config)), vocab_(std::move(vocab)), encoder_(config_.encoder, vocab_.size())
    {
        if (config_.num_classes < 1) {
            throw ConfigError("model: num_classes must be positive");
        }
        Rng rng = Rng(seed).derive(0x1417);
        encoder_.init_parameters(params_, rng);
        const int d = config_.encoder.hidden;
        const double sd = config_.encoder.init_std;
        for (const char* head : {"target", "explain"}) {
            const std::string p = std::string("head.") + head;
            params_.add_normal(p + ".hidden.weight", d, d, sd, rng);
            params_.add_constant(p + ".hidden.bias", 1, d, 0.0);
            params_.add_normal(p + ".out.weight", d, config_.num_classes, sd, rng);
            params_.add_constant(p + ".out.bias", 1, config_.num_classes, 0.0);
        }
        ConfidenceHead{}.init_parameters(params_, rng, 0.1);
        if (!config_.encoder.pretrained.empty()) {
            load_pretrained_encoder(config_.encoder.pretrained);
        }
    }

    /// Model around existing parameters (e.g. from a checkpoint).
    JointModel(ModelConfig config, Vocabulary vocab, ParameterStore params)
        : config_(std::move(config)), vocab_(std::move(vocab)), encoder_(config_.encoder, vocab_.size()), params_(std::move(params))
    {
        JointModel reference(config_, vocab_, 0);
        for (const auto& [name, p] : reference.params_) {
            if (!params_.contains(name)) {
                throw CheckpointError("checkpoint lacks parameter " + name);
            }
            const auto& got = params_.at(name).value;
            if (got.rows() != p.value.rows() || got.cols() != p.value.cols()) {
                throw CheckpointError("dimension mismatch for " + name + ": checkpoint " + std::to_string(got.rows()) + "x" +
                                      std::to_string(got.cols()) + ", config " + std::to_string(p.value.rows()) + "x" +
                                      std::to_string(p.value.cols()));
            }
        }
    }

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] const Vocabulary& vocab() const noexcept { return vocab_; }
    [[nodiscard]] const TransformerEncoder& encoder() const noexcept { return encoder_; }
    [[nodiscard]] ParameterStore& params() noexcept { return params_; }
    [[nodiscard]] const ParameterStore& params() const noexcept { return params_; }
    [[nodiscard]] int num_classes() const noexcept { return config_.num_classes; }

    [[nodiscard]] EncoderInput layout(const Instance& inst) const { return propex::layout(inst, vocab_, config_.encoder); }

    ModelGraph forward(ad::Tape& tape, const Instance& inst, const ForwardOptions& opts = {})
    {
        return forward(tape, layout(inst), opts);
    }

    ModelGraph forward(ad::Tape& tape, const EncoderInput& input, const ForwardOptions& opts = {})
    {
        ad::Var h = encoder_.encode(tape, input, params_, opts.dropout_rng);
        ad::Var query = ad::gather_rows(h, {static_cast<ad::Index>(input.query_marker_pos)});
        std::vector<ad::Index> rows(input.sentence_marker_pos.begin(), input.sentence_marker_pos.end());
        ad::Var sentences = ad::gather_rows(h, std::move(rows));

        ModelGraph g;
        g.prior = ad::softmax_rows(linear(tape, linear(tape, query, "head.target.hidden"), "head.target.out"));
        g.scores = linear(tape, linear(tape, sentences, "head.explain.hidden"), "head.explain.out");
        g.score_probs = ad::sigmoid(g.scores);
        g.conditioned = ad::normalize(ad::mul(g.prior, ad::mean_rows(g.score_probs)));
        g.predicted_class = argmax(g.conditioned.value().row(0).transpose());
        g.explained_class = opts.explain_class.value_or(g.predicted_class);
        if (g.explained_class < 0 || g.explained_class >= config_.num_classes) {
            throw ValidationError("explain class out of range");
        }
        g.sentence_logits = ad::slice_cols(g.scores, g.explained_class, 1);
        g.sentence_probs = ad::slice_cols(g.score_probs, g.explained_class, 1);
        return g;
    }

    /// Inference-mode forward (no gradients, no dropout).
    [[nodiscard]] ModelOutput infer(const Instance& inst)
    {
        ad::Tape tape(false);
        return forward(tape, inst).output();
    }

    [[nodiscard]] nlohmann::json meta() const
    {
        nlohmann::json j;
        j["num_classes"] = config_.num_classes;
        j["encoder"] = config_.encoder;
        j["vocabulary"] = vocab_.tokens();
        return j;
    }

    void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const
    {
        nlohmann::json m = meta();
        m["extra"] = extra;
        save_checkpoint(path, m, params_);
    }

    [[nodiscard]] static JointModel load(const std::filesystem::path& path, nlohmann::json* extra = nullptr)
    {
        Checkpoint ck = load_checkpoint(path);
        ModelConfig cfg;
        try {
            cfg.num_classes = ck.meta.at("num_classes").get<int>();
            cfg.encoder = ck.meta.at("encoder").get<EncoderConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
        }
        Vocabulary vocab(ck.meta.at("vocabulary").get<std::vector<std::string>>());
        if (extra != nullptr) {
            *extra = ck.meta.value("extra", nlohmann::json::object());
        }
        // Pretrained weights are already part of the stored parameters.
        cfg.encoder.pretrained.clear();
        return JointModel(cfg, std::move(vocab), std::move(ck.params));
    }

private:
    ad::Var linear(ad::Tape& tape, ad::Var x, const std::string& name)
    {
        return ad::add_row(ad::matmul(x, tape.parameter(params_.at(name + ".weight"))), tape.parameter(params_.at(name + ".bias")));
    }

    void load_pretrained_encoder(const std::filesystem::path& path)
    {
        Checkpoint ck = load_checkpoint(path);
        if (ck.meta.contains("vocabulary") && ck.meta.at("vocabulary").get<std::vector<std::string>>() != vocab_.tokens()) {
            throw CheckpointError("pretrained checkpoint uses a different vocabulary");
        }
        for (auto& [name, p] : params_) {
            if (name.rfind("encoder.", 0) != 0) {
                continue;
            }
            if (!ck.params.contains(name)) {
                throw CheckpointError("pretrained checkpoint lacks " + name);
            }
            const auto& src = ck.params.at(name).value;
            if (src.rows() != p.value.rows() || src.cols() != p.value.cols()) {
                throw CheckpointError("pretrained shape mismatch for " + name);
            }
            p.value = src;
        }
    }

    ModelConfig config_;
    Vocabulary vocab_;
    TransformerEncoder encoder_;
    ParameterStore params_;
};

} // namespace propex
