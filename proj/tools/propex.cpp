// propex command-line entry point: synth | train | eval | sweep.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "propex/propex.hpp"

namespace fs = std::filesystem;
using namespace propex;

namespace {

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
}

std::uint64_t fnv1a_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char ch;
    while (in.get(ch)) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct Overrides {
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::string out;
};

RunConfig load_config(const std::string& path, const Overrides& o)
{
    RunConfig rc = load_run_config(path);
    if (!o.preset.empty()) {
        rc.train.objectives = objective_preset(o.preset, rc.train.objectives);
    }
    if (o.seed) {
        rc.train.seed = *o.seed;
    }
    if (o.epochs) {
        rc.train.epochs = *o.epochs;
    }
    if (!o.out.empty()) {
        rc.output_dir = o.out;
    }
    rc.train.validate();
    return rc;
}

nlohmann::json checkpoint_extra(const RunConfig& rc, std::size_t epoch)
{
    nlohmann::json objectives = rc.train.objectives;
    return {{"objectives", objectives}, {"seed", rc.train.seed}, {"epoch", epoch}};
}

int cmd_synth(const std::string& config_path, const Overrides& o)
{
    RunConfig rc = load_run_config(config_path, false);
    if (!o.out.empty()) {
        rc.output_dir = o.out;
    }
    if (!rc.data.synthetic) {
        throw ConfigError("synth: config needs a data.synthetic section");
    }
    ensure_dir(rc.output_dir);
    const Dataset ds = generate_synthetic(*rc.data.synthetic);
    nlohmann::ordered_json manifest;
    manifest["generator"] = "synthetic";
    manifest["seed"] = rc.data.synthetic->seed;
    manifest["spec"] = to_json(*rc.data.synthetic);
    for (const auto& [split, items] : ds.splits) {
        const fs::path file = rc.output_dir / (split + ".jsonl");
        write_jsonl(file, items);
        manifest["files"][split] = {{"path", file.filename().string()}, {"instances", items.size()}, {"fnv1a64", fnv1a_file(file)}};
    }
    write_text(rc.output_dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << ds.splits.size() << " splits to " << rc.output_dir.string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const Overrides& o)
{
    const RunConfig rc = load_config(config_path, o);
    ensure_dir(rc.output_dir);
    write_text(rc.output_dir / "resolved_config.json", to_json(rc).dump(2) + "\n");
    const Dataset data = load_data(rc.data);

    std::ofstream log(rc.output_dir / "train_log.jsonl", std::ios::binary);
    if (!log) {
        throw IoError("cannot write training log");
    }
    TrainResult result = train(rc.train, data, [&](const StepLog& s) { log << to_json(s).dump() << '\n'; });

    nlohmann::ordered_json history = nlohmann::ordered_json::array();
    for (const auto& rec : result.history) {
        history.push_back({{"epoch", rec.epoch}, {"metrics", rec.metrics}});
    }
    nlohmann::ordered_json summary;
    summary["best_epoch"] = result.best_epoch;
    summary["selection_metric"] = rc.train.selection_metric;
    summary["history"] = history;
    write_text(rc.output_dir / "history.json", summary.dump(2) + "\n");
    result.best.save(rc.output_dir / "best.ckpt", checkpoint_extra(rc, result.best_epoch));
    result.final.save(rc.output_dir / "final.ckpt", checkpoint_extra(rc, result.history.size() - 1));
    std::cout << "best epoch " << result.best_epoch << " (" << rc.train.selection_metric << " = "
              << result.history[result.best_epoch].metrics.at(rc.train.selection_metric) << ")\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, bool properties, bool query_only, const std::string& split,
             const Overrides& o)
{
    RunConfig rc = load_config(config_path, o);
    if (properties) {
        rc.eval.options.properties = true;
    }
    if (query_only) {
        rc.eval.options.query_only = true;
    }
    if (!split.empty()) {
        rc.eval.split = split;
    }
    ensure_dir(rc.output_dir);
    const Dataset data = load_data(rc.data);
    nlohmann::json extra;
    JointModel model = JointModel::load(checkpoint, &extra);
    if (model.num_classes() != data.num_classes) {
        throw CheckpointError("checkpoint has " + std::to_string(model.num_classes()) + " classes, data has " + std::to_string(data.num_classes));
    }
    const bool trained_head = extra.contains("objectives") && extra["objectives"].value("confidence_indication", false);
    const auto& instances = data.split(rc.eval.split);
    const std::vector<Instance>* probe = data.has_split("validation") ? &data.split("validation") : nullptr;
    const EvalReport report = evaluate(model, instances, rc.eval.options, trained_head, probe);

    write_text(rc.output_dir / "eval_config.json", to_json(rc).dump(2) + "\n");
    write_text(rc.output_dir / "report.json", to_json(report).dump(2) + "\n");
    write_text(rc.output_dir / "report.md", to_markdown(report, "Evaluation on " + rc.eval.split) + "\n");
    std::ofstream preds(rc.output_dir / "predictions.jsonl", std::ios::binary);
    for (const auto& p : predict_all(model, instances, rc.eval.options.policy)) {
        preds << to_json(p).dump() << '\n';
    }
    std::cout << to_markdown(report, "Evaluation on " + rc.eval.split);
    return 0;
}

int cmd_sweep(const std::string& config_path, const Overrides& o)
{
    const RunConfig rc = load_config(config_path, o);
    ensure_dir(rc.output_dir);
    const Dataset data = load_data(rc.data);
    auto or_default = []<class T>(const std::vector<T>& v, T d) { return v.empty() ? std::vector<T>{d} : v; };
    const auto lrs = or_default(rc.sweep.learning_rates, rc.train.learning_rate);
    const auto lambdas = or_default(rc.sweep.lambdas, rc.train.objectives.lambda);
    const auto ks = or_default(rc.sweep.mask_words, rc.train.objectives.mask_words);

    std::ofstream log(rc.output_dir / "sweep.jsonl", std::ios::binary);
    nlohmann::ordered_json best;
    double best_score = -1.0;
    std::optional<JointModel> best_model;
    for (double lr : lrs) {
        for (double lambda : lambdas) {
            for (int k : ks) {
                RunConfig run = rc;
                run.train.learning_rate = lr;
                run.train.objectives.lambda = lambda;
                run.train.objectives.mask_words = k;
                TrainResult result = train(run.train, data);
                const double score = result.history[result.best_epoch].metrics.at(run.train.selection_metric);
                nlohmann::ordered_json row{{"learning_rate", lr}, {"lambda", lambda}, {"mask_words", k}, {"best_epoch", result.best_epoch},
                                           {run.train.selection_metric, score}};
                log << row.dump() << '\n';
                std::cout << row.dump() << '\n';
                if (score > best_score) {
                    best_score = score;
                    best = row;
                    best_model = std::move(result.best);
                    best["config"] = to_json(run);
                }
            }
        }
    }
    write_text(rc.output_dir / "sweep_best.json", best.dump(2) + "\n");
    if (best_model) {
        RunConfig best_rc = parse_run_config(best["config"], false);
        best_model->save(rc.output_dir / "best.ckpt", checkpoint_extra(best_rc, best.at("best_epoch").get<std::size_t>()));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Joint rationale extraction and classification with explanation-property objectives"};
    app.require_subcommand(1);

    std::string config;
    Overrides o;
    std::string checkpoint;
    std::string split;
    bool properties = false;
    bool query_only = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("-o,--out", o.out, "Output directory (overrides output_dir)");
    };
    auto add_train_overrides = [&](CLI::App* cmd) {
        cmd->add_option("-p,--preset", o.preset, "Objectives preset: sup, sup+f, sup+dc, sup+ci, sup+all, unsup, unsup+f, ...");
        cmd->add_option("-s,--seed", o.seed, "Training seed");
        cmd->add_option("-e,--epochs", o.epochs, "Number of epochs");
    };

    auto* synth = app.add_subcommand("synth", "Write the synthetic corpus (train/validation/test JSONL + manifest)");
    add_common(synth);

    auto* train_cmd = app.add_subcommand("train", "Train a model; writes best/final checkpoints and the step log");
    add_common(train_cmd);
    add_train_overrides(train_cmd);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; writes report.json, report.md, predictions.jsonl");
    add_common(eval);
    eval->add_option("-k,--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_flag("--properties", properties, "Add faithfulness, data-consistency and confidence-indication metrics");
    eval->add_flag("--query-only", query_only, "Add the query-only probe and random baseline");
    eval->add_option("--split", split, "Split to evaluate (default from config, usually test)");

    auto* sweep = app.add_subcommand("sweep", "Grid search over learning rate, lambda and K on the validation split");
    add_common(sweep);
    add_train_overrides(sweep);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(config, o);
        }
        if (train_cmd->parsed()) {
            return cmd_train(config, o);
        }
        if (eval->parsed()) {
            return cmd_eval(config, checkpoint, properties, query_only, split, o);
        }
        if (sweep->parsed()) {
            return cmd_sweep(config, o);
        }
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\nlast batch:";
        for (const auto& id : e.batch_ids()) {
            std::cerr << ' ' << id;
        }
        std::cerr << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
