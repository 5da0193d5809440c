#pragma once

// Run configuration: one JSON file per run with data, model, objectives, train, eval,
// sweep and output sections. Unknown keys are rejected at every level.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "propex/corpus.hpp"
#include "propex/encoder.hpp"
#include "propex/errors.hpp"
#include "propex/evaluator.hpp"
#include "propex/objectives.hpp"
#include "propex/trainer.hpp"

namespace propex {

struct DataConfig {
    std::optional<std::filesystem::path> dir; ///< directory with train/validation/test .jsonl
    std::optional<SyntheticSpec> synthetic;
    int num_classes = 2;
};

struct EvalConfig {
    EvalOptions options;
    std::string split = "test";
};

struct SweepConfig {
    std::vector<double> learning_rates;
    std::vector<double> lambdas;
    std::vector<int> mask_words;
};

struct RunConfig {
    DataConfig data;
    TrainConfig train;
    EvalConfig eval;
    SweepConfig sweep;
    std::filesystem::path output_dir = "runs/default";
};

namespace config_detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& section)
{
    if (!j.is_object()) {
        throw ConfigError("section '" + section + "' must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
        }
    }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& section)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
    }
}

inline void read_range(const nlohmann::json& j, const char* key, int& lo, int& hi, const std::string& section)
{
    if (!j.contains(key)) {
        return;
    }
    const auto& v = j.at(key);
    if (v.is_number_integer()) {
        lo = hi = v.get<int>();
    } else if (v.is_array() && v.size() == 2) {
        lo = v[0].get<int>();
        hi = v[1].get<int>();
    } else {
        throw ConfigError(section + "." + key + ": expected an integer or [min, max]");
    }
}

} // namespace config_detail

[[nodiscard]] inline SyntheticSpec parse_synthetic(const nlohmann::json& j)
{
    using namespace config_detail;
    const std::string s = "data.synthetic";
    check_keys(j, {"vocab_size", "num_classes", "num_keys", "sentences", "rationale_sentences", "sentence_tokens", "instances_per_split", "seed"}, s);
    SyntheticSpec spec;
    read(j, "vocab_size", spec.vocab_size, s);
    read(j, "num_classes", spec.num_classes, s);
    read(j, "num_keys", spec.num_keys, s);
    read_range(j, "sentences", spec.min_sentences, spec.max_sentences, s);
    read_range(j, "rationale_sentences", spec.min_rationale, spec.max_rationale, s);
    read_range(j, "sentence_tokens", spec.min_sentence_tokens, spec.max_sentence_tokens, s);
    read(j, "instances_per_split", spec.instances_per_split, s);
    read(j, "seed", spec.seed, s);
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const SyntheticSpec& spec)
{
    nlohmann::ordered_json j;
    j["vocab_size"] = spec.vocab_size;
    j["num_classes"] = spec.num_classes;
    j["num_keys"] = spec.num_keys;
    j["sentences"] = {spec.min_sentences, spec.max_sentences};
    j["rationale_sentences"] = {spec.min_rationale, spec.max_rationale};
    j["sentence_tokens"] = {spec.min_sentence_tokens, spec.max_sentence_tokens};
    j["instances_per_split"] = spec.instances_per_split;
    j["seed"] = spec.seed;
    return j;
}

/// Parses a run configuration. Paths are taken relative to the working directory; the data
/// directory must exist when `require_paths` is set.
[[nodiscard]] inline RunConfig parse_run_config(const nlohmann::json& root, bool require_paths = true)
{
    using namespace config_detail;
    check_keys(root, {"data", "model", "objectives", "train", "eval", "sweep", "output_dir"}, "<root>");
    RunConfig rc;

    if (root.contains("data")) {
        const auto& d = root.at("data");
        check_keys(d, {"dir", "synthetic", "num_classes"}, "data");
        if (d.contains("dir")) {
            rc.data.dir = d.at("dir").get<std::string>();
            if (require_paths && !std::filesystem::is_directory(*rc.data.dir)) {
                throw ConfigError("data.dir does not exist: " + rc.data.dir->string());
            }
        }
        if (d.contains("synthetic")) {
            rc.data.synthetic = parse_synthetic(d.at("synthetic"));
            rc.data.num_classes = rc.data.synthetic->num_classes;
        }
        read(d, "num_classes", rc.data.num_classes, "data");
        if (rc.data.synthetic && rc.data.num_classes != rc.data.synthetic->num_classes) {
            throw ConfigError("data.num_classes disagrees with data.synthetic.num_classes");
        }
        if (rc.data.dir && rc.data.synthetic) {
            throw ConfigError("data: give either dir or synthetic, not both");
        }
    }

    if (root.contains("model")) {
        const auto& m = root.at("model");
        check_keys(m, {"hidden", "layers", "heads", "ffn", "max_positions", "max_length", "windowing", "window_size", "window_stride", "dropout",
                       "init_std", "pretrained"},
                   "model");
        try {
            rc.train.encoder = m.get<EncoderConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("model: ") + e.what());
        }
        if (require_paths && !rc.train.encoder.pretrained.empty() && !std::filesystem::exists(rc.train.encoder.pretrained)) {
            throw ConfigError("model.pretrained does not exist: " + rc.train.encoder.pretrained);
        }
    }

    if (root.contains("objectives")) {
        const auto& o = root.at("objectives");
        check_keys(o, {"preset", "supervised_explanations", "faithfulness", "data_consistency", "confidence_indication", "lambda", "mask_words",
                       "reward_baseline", "baseline_momentum"},
                   "objectives");
        ObjectiveConfig oc;
        if (o.contains("preset")) {
            oc = objective_preset(o.at("preset").get<std::string>(), oc);
        }
        nlohmann::json rest = o;
        rest.erase("preset");
        try {
            ObjectiveConfig explicit_values = oc;
            from_json(rest, explicit_values);
            oc = explicit_values;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("objectives: ") + e.what());
        }
        rc.train.objectives = oc;
    }

    if (root.contains("train")) {
        const auto& t = root.at("train");
        const std::string s = "train";
        check_keys(t, {"learning_rate", "epochs", "batch_size", "beta1", "beta2", "adam_eps", "clip_norm", "seed", "selection_metric", "decode"}, s);
        read(t, "learning_rate", rc.train.learning_rate, s);
        read(t, "epochs", rc.train.epochs, s);
        read(t, "batch_size", rc.train.batch_size, s);
        read(t, "beta1", rc.train.beta1, s);
        read(t, "beta2", rc.train.beta2, s);
        read(t, "adam_eps", rc.train.adam_eps, s);
        read(t, "clip_norm", rc.train.clip_norm, s);
        read(t, "seed", rc.train.seed, s);
        read(t, "selection_metric", rc.train.selection_metric, s);
        if (t.contains("decode")) {
            rc.train.decode = parse_decode_policy(t.at("decode").get<std::string>());
        }
        validate_selection_metric(rc.train.selection_metric);
    }

    if (root.contains("eval")) {
        const auto& e = root.at("eval");
        const std::string s = "eval";
        check_keys(e, {"decode", "properties", "query_only", "mask_words", "repeats", "seed", "split", "probe_steps", "probe_learning_rate"}, s);
        if (e.contains("decode")) {
            rc.eval.options.policy = parse_decode_policy(e.at("decode").get<std::string>());
        }
        read(e, "properties", rc.eval.options.properties, s);
        read(e, "query_only", rc.eval.options.query_only, s);
        read(e, "mask_words", rc.eval.options.mask_words, s);
        read(e, "repeats", rc.eval.options.repeats, s);
        read(e, "seed", rc.eval.options.seed, s);
        read(e, "split", rc.eval.split, s);
        read(e, "probe_steps", rc.eval.options.probe.steps, s);
        read(e, "probe_learning_rate", rc.eval.options.probe.learning_rate, s);
        if (rc.eval.options.repeats < 1 || rc.eval.options.mask_words < 0) {
            throw ConfigError("eval: repeats must be >= 1 and mask_words >= 0");
        }
    }

    if (root.contains("sweep")) {
        const auto& w = root.at("sweep");
        check_keys(w, {"learning_rate", "lambda", "mask_words"}, "sweep");
        read(w, "learning_rate", rc.sweep.learning_rates, "sweep");
        read(w, "lambda", rc.sweep.lambdas, "sweep");
        read(w, "mask_words", rc.sweep.mask_words, "sweep");
    }

    if (root.contains("output_dir")) {
        rc.output_dir = root.at("output_dir").get<std::string>();
    }
    rc.train.validate();
    return rc;
}

[[nodiscard]] inline RunConfig load_run_config(const std::filesystem::path& path, bool require_paths = true)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j, require_paths);
}

/// Fully resolved configuration; parsing it back yields an identical RunConfig.
[[nodiscard]] inline nlohmann::ordered_json to_json(const RunConfig& rc)
{
    nlohmann::ordered_json j;
    nlohmann::ordered_json data;
    if (rc.data.dir) {
        data["dir"] = rc.data.dir->string();
    }
    if (rc.data.synthetic) {
        data["synthetic"] = to_json(*rc.data.synthetic);
    }
    data["num_classes"] = rc.data.num_classes;
    j["data"] = data;
    nlohmann::json enc = rc.train.encoder;
    j["model"] = enc;
    nlohmann::json obj = rc.train.objectives;
    j["objectives"] = obj;
    j["train"] = {{"learning_rate", rc.train.learning_rate},
                  {"epochs", rc.train.epochs},
                  {"batch_size", rc.train.batch_size},
                  {"beta1", rc.train.beta1},
                  {"beta2", rc.train.beta2},
                  {"adam_eps", rc.train.adam_eps},
                  {"clip_norm", rc.train.clip_norm},
                  {"seed", rc.train.seed},
                  {"selection_metric", rc.train.selection_metric},
                  {"decode", to_string(rc.train.decode)}};
    j["eval"] = {{"decode", to_string(rc.eval.options.policy)},
                 {"properties", rc.eval.options.properties},
                 {"query_only", rc.eval.options.query_only},
                 {"mask_words", rc.eval.options.mask_words},
                 {"repeats", rc.eval.options.repeats},
                 {"seed", rc.eval.options.seed},
                 {"split", rc.eval.split},
                 {"probe_steps", rc.eval.options.probe.steps},
                 {"probe_learning_rate", rc.eval.options.probe.learning_rate}};
    j["sweep"] = {{"learning_rate", rc.sweep.learning_rates}, {"lambda", rc.sweep.lambdas}, {"mask_words", rc.sweep.mask_words}};
    j["output_dir"] = rc.output_dir.string();
    return j;
}

/// Dataset named by the data section: loaded from disk or generated in memory.
[[nodiscard]] inline Dataset load_data(const DataConfig& d)
{
    if (d.synthetic) {
        return generate_synthetic(*d.synthetic);
    }
    if (d.dir) {
        return load_dataset_dir(*d.dir, d.num_classes);
    }
    throw ConfigError("data: need either dir or synthetic");
}

} // namespace propex
