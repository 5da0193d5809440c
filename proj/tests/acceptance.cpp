// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero if any fails.
// Usage: acceptance [criterion numbers...]   (default: all of 1-10)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "propex/propex.hpp"

using namespace propex;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ------------------------------------------------------------------ shared corpus and models

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

const Dataset& corpus()
{
    static const Dataset ds = [] {
        SyntheticSpec spec; // 500/100/100, N=2, S=6, 1-2 rationale sentences
        return generate_synthetic(spec);
    }();
    return ds;
}

struct TrainedRun {
    JointModel model;
    double seconds = 0.0;
};

/// Trains (once) the given preset with the given seed on the shared corpus.
TrainedRun& trained(const std::string& preset, std::uint64_t seed)
{
    static std::map<std::pair<std::string, std::uint64_t>, TrainedRun> cache;
    auto key = std::make_pair(preset, seed);
    if (auto it = cache.find(key); it != cache.end()) {
        return it->second;
    }
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.objectives = objective_preset(preset);
    const auto t0 = Clock::now();
    TrainResult r = train(cfg, corpus());
    TrainedRun run{std::move(r.best), seconds_since(t0)};
    std::cerr << "  trained " << preset << " seed " << seed << " in " << fmt("%.1f", run.seconds) << " s (best epoch " << r.best_epoch << ")\n";
    return cache.emplace(key, std::move(run)).first->second;
}

double mean_of(const std::vector<double>& xs)
{
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return s / static_cast<double>(xs.size());
}

// ------------------------------------------------------------------ 1. gradient correctness

/// Norm-relative error between analytic and central-difference gradients of one parameter group.
struct GroupError {
    std::string name;
    double rel = 0.0;
    double analytic_norm = 0.0;
};

std::vector<GroupError> gradient_check(JointModel& model, const std::function<ad::Var(ad::Tape&, ModelGraph&)>& loss_fn, const Instance& inst, double h)
{
    auto eval = [&](bool with_grad) {
        ad::Tape tape(with_grad);
        ModelGraph g = model.forward(tape, inst, ForwardOptions{inst.label, nullptr});
        ad::Var loss = loss_fn(tape, g);
        if (with_grad) {
            tape.backward(loss);
        }
        return loss.item();
    };
    model.params().zero_grad();
    eval(true);
    std::vector<GroupError> out;
    for (auto& [name, p] : model.params()) {
        ad::Matrix numeric(p.value.rows(), p.value.cols());
        for (ad::Index i = 0; i < p.value.size(); ++i) {
            const double orig = p.value.data()[i];
            p.value.data()[i] = orig + h;
            const double up = eval(false);
            p.value.data()[i] = orig - h;
            const double down = eval(false);
            p.value.data()[i] = orig;
            numeric.data()[i] = (up - down) / (2.0 * h);
        }
        const double an = p.grad.norm();
        const double nn = numeric.norm();
        const double scale = std::max(an, nn);
        const double rel = scale < 1e-9 ? (p.grad - numeric).norm() : (p.grad - numeric).norm() / scale;
        out.push_back({name, rel, an});
    }
    return out;
}

Verdict criterion_gradients()
{
    const auto t0 = Clock::now();
    Instance inst;
    inst.id = "grad";
    inst.query = {"k0", "w1"};
    inst.sentences = {{"k0", "c1", "w2"}, {"w3", "k0", "w4"}, {"k0", "w5", "w6"}};
    inst.label = 1;
    inst.rationales = {{1, 0, 0}};

    ModelConfig cfg;
    cfg.num_classes = 2;
    cfg.encoder.hidden = 16;
    cfg.encoder.layers = 2;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn = 32;
    cfg.encoder.max_positions = 24;
    cfg.encoder.init_std = 0.3;
    JointModel model(cfg, Vocabulary::from_instances({inst}), 21);
    // Move every parameter off its initial value so no LayerNorm/bias gradient is trivially symmetric.
    Rng jitter(5);
    for (auto& [_, p] : model.params()) {
        for (ad::Index i = 0; i < p.value.size(); ++i) {
            p.value.data()[i] += 0.1 * jitter.normal();
        }
    }

    const Instance masked = [&] {
        Rng r(3);
        return mask_random_words(inst, 2, r);
    }();
    std::map<std::string, std::function<ad::Var(ad::Tape&, ModelGraph&)>> losses{
        {"L_C", [&](ad::Tape&, ModelGraph& g) { return target_loss(g.conditioned, inst.label); }},
        {"L_E", [&](ad::Tape&, ModelGraph& g) { return explanation_loss(g.sentence_probs, inst.rationales[0]); }},
        {"L_DC",
         [&](ad::Tape& tape, ModelGraph& g) {
             ModelGraph m = model.forward(tape, masked, ForwardOptions{inst.label, nullptr});
             return data_consistency_loss(g.score_probs, m.score_probs);
         }},
        {"L_CI",
         [&](ad::Tape& tape, ModelGraph& g) {
             ad::Var est = ConfidenceHead{}.estimate(tape, g.sentence_probs, model.params());
             return confidence_indication_loss(g.conditioned, g.predicted_class, est);
         }},
    };
    double worst = 0.0;
    std::string worst_where;
    std::size_t groups = 0;
    for (auto& [lname, fn] : losses) {
        for (const auto& e : gradient_check(model, fn, inst, 1e-5)) {
            ++groups;
            if (e.rel > worst) {
                worst = e.rel;
                worst_where = lname + "/" + e.name;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 60.0,
            fmt("max group relative error %.2e (%s) over %zu loss/group pairs, %.1f s", worst, worst_where.c_str(), groups, secs)};
}

// ------------------------------------------------------------------ 2. REINFORCE unbiasedness

Verdict criterion_reinforce()
{
    const auto t0 = Clock::now();
    // A briefly trained model on a 3-sentence corpus, so masks change predictions.
    SyntheticSpec spec;
    spec.min_sentences = spec.max_sentences = 3;
    spec.instances_per_split = {{"train", 200}, {"validation", 50}, {"test", 50}};
    const Dataset ds = generate_synthetic(spec);
    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 4;
    tc.encoder.hidden = 16; // same small encoder as the gradient check; 200k reward forwards must fit the time budget
    tc.encoder.heads = 2;
    tc.encoder.ffn = 32;
    JointModel model = train(tc, ds).best;

    // Frozen encoder: rewards depend only on the sampled mask; the sentence logits z are the
    // free variable. Enumerate all 2^3 masks for the exact gradient of E[R] with respect to z.
    const auto masks = [] {
        std::vector<Mask> ms;
        for (int b = 0; b < 8; ++b) {
            ms.push_back({b & 1, (b >> 1) & 1, (b >> 2) & 1});
        }
        return ms;
    }();

    // First test instance with a well-conditioned exact gradient (norm >= 0.1).
    const Instance* chosen = nullptr;
    ModelOutput out;
    Eigen::Vector3d exact = Eigen::Vector3d::Zero();
    for (const auto& inst : ds.split("test")) {
        out = model.infer(inst);
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        for (const auto& m : masks) {
            const double r = faithfulness_reward(out.predicted_class, model.infer(mask_sentences(inst, m)).predicted_class,
                                                 model.infer(mask_sentences(inst, complement(m))).predicted_class, m, 0.5);
            const double pm = std::exp(mask_log_prob(out.sentence_probs, m));
            for (int j = 0; j < 3; ++j) {
                g(j) += pm * r * (m[static_cast<std::size_t>(j)] - out.sentence_probs(j));
            }
        }
        if (g.norm() >= 0.1) {
            chosen = &inst;
            exact = g;
            break;
        }
    }
    if (chosen == nullptr) {
        return {false, "no test instance with a non-degenerate exact gradient"};
    }
    const Eigen::Vector3d z = out.sentence_probs.unaryExpr([](double p) { return std::log(p / (1.0 - p)); });

    std::string detail = fmt("instance %s, |exact|=%.3f", chosen->id.c_str(), exact.norm());
    bool ok = true;
    for (bool use_baseline : {false, true}) {
        const int n = 50000;
        Rng rng(99);
        RewardBaseline baseline(0.9, use_baseline);
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        Eigen::Vector3d sq = Eigen::Vector3d::Zero();
        ad::Parameter logits;
        logits.value = z;
        for (int i = 0; i < n; ++i) {
            logits.zero_grad();
            ad::Tape tape;
            ad::Var probs = ad::sigmoid(tape.parameter(logits));
            ModelOutput o = out;
            o.sentence_probs = probs.value().col(0);
            const FaithfulnessSample s = faithfulness_sample(model, *chosen, o, 0.5, rng);
            tape.backward(faithfulness_loss(probs, {s}, baseline.value()));
            baseline.update(s.reward);
            const Eigen::Vector3d est = -logits.grad.col(0); // descent on the surrogate ascends E[R]
            sum += est;
            sq += est.cwiseProduct(est);
        }
        const Eigen::Vector3d mc = sum / n;
        const Eigen::Vector3d se = ((sq / n - mc.cwiseProduct(mc)) / n).cwiseSqrt();
        const double rel = (mc - exact).norm() / exact.norm();
        double worst_z = 0.0;
        for (int j = 0; j < 3; ++j) {
            worst_z = std::max(worst_z, std::abs(mc(j) - exact(j)) / se(j));
        }
        ok = ok && rel <= 0.05 && worst_z <= 3.0;
        detail += fmt("; %s baseline: rel err %.2f%%, max |dev|/SE %.2f", use_baseline ? "EMA" : "no", 100.0 * rel, worst_z);
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 120.0;
    return {ok, detail + fmt(", %.1f s", secs)};
}

// ------------------------------------------------------------------ 3. reward bounds

Verdict criterion_reward_bounds()
{
    Rng rng(2024);
    int violations = 0;
    double lo = 1e9;
    double hi = -1e9;
    for (int i = 0; i < 10000; ++i) {
        const int n = rng.uniform_range(2, 5);
        const int s = rng.uniform_range(1, 12);
        Mask m(static_cast<std::size_t>(s));
        for (auto& v : m) {
            v = rng.bernoulli(0.5) ? 1 : 0;
        }
        const double lambda = rng.uniform_range(0, 4) == 0 ? static_cast<double>(rng.uniform_range(0, 1)) : rng.uniform();
        const double r = faithfulness_reward(rng.uniform_range(0, n - 1), rng.uniform_range(0, n - 1), rng.uniform_range(0, n - 1), m, lambda);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
        if (r > 1.0 || r < -1.0 - std::max(lambda, 1.0 - lambda)) {
            ++violations;
        }
    }
    return {violations == 0, fmt("%d violations in 10000 draws (observed range [%.3f, %.3f])", violations, lo, hi)};
}

// ------------------------------------------------------------------ 4. metric oracles

namespace oracle {

// Independent reference implementations written directly from the metric definitions.

std::pair<double, double> target(const std::vector<int>& pred, const std::vector<int>& gold, int n)
{
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        correct += pred[i] == gold[i];
    }
    double f1_sum = 0.0;
    for (int c = 0; c < n; ++c) {
        int tp = 0, predicted = 0, actual = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            tp += pred[i] == c && gold[i] == c;
            predicted += pred[i] == c;
            actual += gold[i] == c;
        }
        const double p = predicted ? static_cast<double>(tp) / predicted : 0.0;
        const double r = actual ? static_cast<double>(tp) / actual : 0.0;
        f1_sum += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    return {static_cast<double>(correct) / static_cast<double>(pred.size()), f1_sum / n};
}

std::tuple<double, double, double> explanation(const std::vector<Mask>& preds, const std::vector<std::vector<Mask>>& golds)
{
    // Confusion counts for the explanation class (1) and the non-explanation class (0).
    int c11 = 0, c10 = 0, c01 = 0, c00 = 0; // c{pred}{gold}
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (golds[i].empty()) {
            continue;
        }
        int best = -1;
        std::size_t arg = 0;
        for (std::size_t g = 0; g < golds[i].size(); ++g) {
            int overlap = 0;
            for (std::size_t j = 0; j < preds[i].size(); ++j) {
                overlap += preds[i][j] & golds[i][g][j];
            }
            if (overlap > best) {
                best = overlap;
                arg = g;
            }
        }
        for (std::size_t j = 0; j < preds[i].size(); ++j) {
            const int p = preds[i][j];
            const int g = golds[i][arg][j];
            c11 += p == 1 && g == 1;
            c10 += p == 1 && g == 0;
            c01 += p == 0 && g == 1;
            c00 += p == 0 && g == 0;
        }
    }
    auto f1 = [](double tp, double pred, double act) {
        const double p = pred > 0 ? tp / pred : 0.0;
        const double r = act > 0 ? tp / act : 0.0;
        return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    };
    const double precision = (c11 + c10) ? static_cast<double>(c11) / (c11 + c10) : 0.0;
    const double recall = (c11 + c01) ? static_cast<double>(c11) / (c11 + c01) : 0.0;
    const double macro = (f1(c11, c11 + c10, c11 + c01) + f1(c00, c00 + c01, c00 + c10)) / 2.0;
    return {precision, recall, macro};
}

double joint(const std::vector<int>& pl, const std::vector<Mask>& pe, const std::vector<int>& gl, const std::vector<std::vector<Mask>>& ge)
{
    int ok = 0;
    for (std::size_t i = 0; i < pl.size(); ++i) {
        bool any = false;
        for (const auto& g : ge[i]) {
            any = any || g == pe[i];
        }
        ok += pl[i] == gl[i] && any;
    }
    return static_cast<double>(ok) / static_cast<double>(pl.size());
}

std::pair<double, double> faithfulness(const std::vector<int>& full, const std::vector<int>& sel, const std::vector<int>& unsel)
{
    int s = 0, c = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        s += sel[i] == full[i];
        c += unsel[i] == full[i];
    }
    return {100.0 * s / static_cast<double>(full.size()), 100.0 * c / static_cast<double>(full.size())};
}

} // namespace oracle

Verdict criterion_metric_oracles()
{
    Rng rng(77);
    double worst = 0.0;
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    std::size_t joint_bound_violations = 0;
    ScopedWarningSink quiet([](const std::string&) {});
    for (int set = 0; set < 200; ++set) {
        const int n_inst = rng.uniform_range(1, 20);
        const int n_cls = rng.uniform_range(2, 4);
        std::vector<int> pl, gl, full, sel, unsel;
        std::vector<Mask> pe;
        std::vector<std::vector<Mask>> ge;
        auto rand_mask = [&](int s) {
            Mask m(static_cast<std::size_t>(s));
            for (auto& v : m) {
                v = rng.bernoulli(0.4) ? 1 : 0;
            }
            return m;
        };
        for (int i = 0; i < n_inst; ++i) {
            const int s = rng.uniform_range(1, 6);
            gl.push_back(rng.uniform_range(0, n_cls - 1));
            pl.push_back(rng.bernoulli(0.6) ? gl.back() : rng.uniform_range(0, n_cls - 1));
            std::vector<Mask> golds;
            const int n_gold = rng.uniform_range(1, 3);
            for (int g = 0; g < n_gold; ++g) {
                golds.push_back(rand_mask(s));
            }
            pe.push_back(rng.bernoulli(0.3) ? golds[rng.uniform_int(golds.size())] : rand_mask(s));
            ge.push_back(std::move(golds));
            full.push_back(rng.uniform_range(0, n_cls - 1));
            sel.push_back(rng.bernoulli(0.7) ? full.back() : rng.uniform_range(0, n_cls - 1));
            unsel.push_back(rng.bernoulli(0.4) ? full.back() : rng.uniform_range(0, n_cls - 1));
        }
        const TargetMetrics t = target_metrics(pl, gl, n_cls);
        const auto [acc, f1] = oracle::target(pl, gl, n_cls);
        track(t.accuracy, acc);
        track(t.macro_f1, f1);
        const ExplanationMetrics e = explanation_metrics(pe, ge);
        const auto [p, r, mf1] = oracle::explanation(pe, ge);
        track(e.precision, p);
        track(e.recall, r);
        track(e.macro_f1, mf1);
        const double ja = joint_accuracy(pl, pe, gl, ge);
        track(ja, oracle::joint(pl, pe, gl, ge));
        const FaithfulnessMetrics fm = sufficiency_completeness(full, sel, unsel);
        const auto [s, c] = oracle::faithfulness(full, sel, unsel);
        track(fm.sufficiency, s);
        track(fm.completeness, c);
        // joint accuracy <= min(target accuracy, exact-match rate)
        double exact = 0.0;
        for (int i = 0; i < n_inst; ++i) {
            exact += std::find(ge[static_cast<std::size_t>(i)].begin(), ge[static_cast<std::size_t>(i)].end(), pe[static_cast<std::size_t>(i)]) !=
                     ge[static_cast<std::size_t>(i)].end();
        }
        if (ja > std::min(t.accuracy, exact / n_inst) + 1e-15) {
            ++joint_bound_violations;
        }
    }
    return {worst <= 1e-12 && joint_bound_violations == 0,
            fmt("200 random sets, max |metric - oracle| = %.1e, joint-accuracy bound violations = %zu", worst, joint_bound_violations)};
}

// ------------------------------------------------------------------ 5-9. trained-model criteria

EvalReport report_for(const std::string& preset, std::uint64_t seed, bool properties, bool query_only)
{
    EvalOptions opts;
    opts.properties = properties;
    opts.query_only = query_only;
    opts.mask_words = 2;
    opts.repeats = 5;
    opts.seed = seed;
    JointModel& model = trained(preset, seed).model;
    const bool trained_head = objective_preset(preset).confidence_indication;
    return evaluate(model, corpus().split("test"), opts, trained_head, &corpus().split("validation"));
}

Verdict criterion_overfit()
{
    std::vector<double> f1c, f1e;
    double secs = 0.0;
    for (auto seed : kSeeds) {
        secs += trained("sup", seed).seconds;
        const EvalReport r = report_for("sup", seed, false, false);
        f1c.push_back(r.core.target.macro_f1);
        f1e.push_back(r.core.explanation.macro_f1);
    }
    const double c = mean_of(f1c);
    const double e = mean_of(f1e);
    return {c >= 0.95 && e >= 0.90 && secs < 600.0,
            fmt("sup, 3 seeds: test F1-C %.3f (per seed %.3f/%.3f/%.3f), F1-E %.3f (%.3f/%.3f/%.3f), training %.0f s", c, f1c[0], f1c[1], f1c[2], e,
                f1e[0], f1e[1], f1e[2], secs)};
}

Verdict criterion_dc_direction()
{
    std::vector<double> sup, dc;
    for (auto seed : kSeeds) {
        sup.push_back(report_for("sup", seed, true, false).data_consistency->expl_diff.mean);
        dc.push_back(report_for("sup+dc", seed, true, false).data_consistency->expl_diff.mean);
    }
    const double a = mean_of(sup);
    const double b = mean_of(dc);
    return {b <= 0.9 * a, fmt("expl_diff mean: sup %.4f, sup+dc %.4f (%.1f%% lower; need >= 10%%)", a, b, 100.0 * (1.0 - b / a))};
}

Verdict criterion_f_direction()
{
    std::vector<double> ss, sc, fs, fc;
    for (auto seed : kSeeds) {
        const auto a = *report_for("sup", seed, true, false).faithfulness;
        const auto b = *report_for("sup+f", seed, true, false).faithfulness;
        ss.push_back(a.sufficiency);
        sc.push_back(a.completeness);
        fs.push_back(b.sufficiency);
        fc.push_back(b.completeness);
    }
    const bool suff_ok = mean_of(fs) >= mean_of(ss) - 1.0;
    const bool compl_ok = mean_of(fc) <= mean_of(sc) + 1.0;
    auto seeds = [](const std::vector<double>& v) { return fmt("%.0f/%.0f/%.0f", v[0], v[1], v[2]); };
    return {suff_ok && compl_ok,
            fmt("suff: sup %.1f%% (%s), sup+f %.1f%% (%s); compl: sup %.1f%% (%s), sup+f %.1f%% (%s) (1-point tie tolerance)", mean_of(ss),
                seeds(ss).c_str(), mean_of(fs), seeds(fs).c_str(), mean_of(sc), seeds(sc).c_str(), mean_of(fc), seeds(fc).c_str())};
}

Verdict criterion_ci_direction()
{
    std::vector<double> probe, head;
    for (auto seed : kSeeds) {
        probe.push_back(report_for("sup", seed, true, false).confidence->mean);
        head.push_back(report_for("sup+ci", seed, true, false).confidence->mean);
    }
    const double a = mean_of(probe);
    const double b = mean_of(head);
    return {b <= 0.5 * a, fmt("confidence diff mean: sup (fitted probe) %.4f, sup+ci (trained head) %.4f, ratio %.2f (need <= 0.50)", a, b, b / a)};
}

Verdict criterion_query_only()
{
    bool ok = true;
    std::string per_model;
    double worst_gap = 1.0;
    double worst_chance_dev = 0.0;
    for (const std::string preset : {"sup", "sup+dc", "sup+f", "sup+ci"}) {
        for (auto seed : kSeeds) {
            const EvalReport r = report_for(preset, seed, false, true);
            const double q = r.query_only->model.accuracy;
            const double full = r.core.target.accuracy;
            const double dev = std::abs(q - 0.5);
            worst_chance_dev = std::max(worst_chance_dev, dev);
            worst_gap = std::min(worst_gap, full - q);
            ok = ok && dev <= 0.05 && full - q >= 0.40;
            per_model += fmt(" %s/%llu=%.2f", preset.c_str(), static_cast<unsigned long long>(seed), q);
        }
    }
    return {ok, fmt("12 models: max |query-only acc - 0.5| = %.3f, min (full - query-only) = %.3f; query-only acc:", worst_chance_dev, worst_gap) +
                    per_model};
}

// ------------------------------------------------------------------ 10. determinism

Verdict criterion_determinism()
{
    SyntheticSpec spec;
    spec.instances_per_split = {{"train", 80}, {"validation", 20}, {"test", 20}};
    const Dataset ds = generate_synthetic(spec);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 13;
    cfg.objectives = objective_preset("sup+all");
    auto run = [&] {
        std::string log;
        TrainResult r = train(cfg, ds, [&](const StepLog& s) { log += to_json(s).dump() + "\n"; });
        EvalOptions opts;
        opts.properties = true;
        opts.query_only = true;
        opts.seed = 3;
        const EvalReport rep = evaluate(r.best, ds.split("test"), opts, true, &ds.split("validation"));
        std::ostringstream preds;
        for (const auto& p : predict_all(r.best, ds.split("test"), opts.policy)) {
            preds << to_json(p).dump() << '\n';
        }
        return std::make_tuple(log, to_json(rep).dump(), preds.str(), r.final.params());
    };
    const auto a = run();
    const auto b = run();
    const bool logs = std::get<0>(a) == std::get<0>(b);
    const bool reports = std::get<1>(a) == std::get<1>(b) && std::get<2>(a) == std::get<2>(b);
    const bool params = std::get<3>(a) == std::get<3>(b);
    return {logs && reports && params, fmt("training log %s, EvalReport+predictions %s, final parameters %s", logs ? "identical" : "DIFFER",
                                           reports ? "identical" : "DIFFER", params ? "identical" : "DIFFER")};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient correctness (L_C, L_E, L_DC, L_CI vs central differences)", criterion_gradients},
        {"REINFORCE unbiasedness (enumeration vs 50k Monte-Carlo samples)", criterion_reinforce},
        {"reward bounds", criterion_reward_bounds},
        {"metric oracles", criterion_metric_oracles},
        {"synthetic overfit (sup)", criterion_overfit},
        {"data-consistency direction (sup+dc vs sup)", criterion_dc_direction},
        {"faithfulness direction (sup+f vs sup)", criterion_f_direction},
        {"confidence-indication direction (sup+ci vs sup probe)", criterion_ci_direction},
        {"query-only bias", criterion_query_only},
        {"determinism", criterion_determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::stoi(argv[i]));
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.contains(id)) {
            continue;
        }
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += v.pass ? 0 : 1;
        std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << v.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
