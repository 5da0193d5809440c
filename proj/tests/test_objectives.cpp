#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace propex;
using propex::testing::check_gradients;
using propex::testing::random_parameter;
using propex::testing::tiny_instance;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) {
        v(i++) = x;
    }
    return v;
}

ad::Matrix column(std::initializer_list<double> xs) { return vec(xs); }

ModelConfig small_model_config()
{
    ModelConfig c;
    c.encoder.hidden = 16;
    c.encoder.heads = 2;
    c.encoder.ffn = 32;
    c.encoder.max_positions = 32;
    return c;
}

} // namespace

TEST(TargetLoss, Examples)
{
    EXPECT_DOUBLE_EQ(target_loss(vec({0.0, 1.0}), 1), 0.0);
    EXPECT_NEAR(target_loss(vec({0.5, 0.5}), 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(target_loss(vec({0.25, 0.75}), 1), 0.2877, 5e-5);
    EXPECT_NEAR(target_loss(vec({1.0, 0.0}), 1), -std::log(1e-12), 1e-9);
}

TEST(ExplanationLoss, Examples)
{
    EXPECT_NEAR(explanation_loss(vec({1.0, 0.0}), {1, 0}), 0.0, 1e-11);
    EXPECT_NEAR(explanation_loss(vec({0.5, 0.5, 0.5}), {1, 0, 1}), std::log(2.0), 1e-15);
    EXPECT_NEAR(explanation_loss(vec({0.5, 0.5}), {0, 0}), std::log(2.0), 1e-15);
    EXPECT_NEAR(explanation_loss(vec({0.9, 0.2}), {1, 0}), (-std::log(0.9) - std::log(0.8)) / 2.0, 1e-15);
    EXPECT_NEAR(explanation_loss(vec({0.9, 0.2}), {1, 0}), 0.1643, 5e-5);
    EXPECT_THROW((void)explanation_loss(vec({0.9, 0.2}), {1, 0, 0}), ValidationError);
}

TEST(Reward, BestAndWorstCases)
{
    EXPECT_DOUBLE_EQ(faithfulness_reward(1, 1, 0, {1, 0}, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(faithfulness_reward(1, 0, 1, {1, 1}, 0.5), -1.5);
}

TEST(Reward, LambdaOneWithEverythingSelectedHasNoSparsityPenalty)
{
    EXPECT_DOUBLE_EQ(faithfulness_reward(0, 0, 1, {1, 1, 1}, 1.0), 1.0);
}

TEST(Reward, BoundsHoldOnRandomDraws)
{
    Rng rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = rng.uniform_range(2, 4);
        const int s = rng.uniform_range(1, 8);
        Mask m(static_cast<std::size_t>(s));
        for (auto& v : m) {
            v = rng.bernoulli(0.5) ? 1 : 0;
        }
        const double lambda = rng.uniform();
        const double r = faithfulness_reward(rng.uniform_range(0, n - 1), rng.uniform_range(0, n - 1), rng.uniform_range(0, n - 1), m, lambda);
        ASSERT_LE(r, 1.0);
        ASSERT_GE(r, -1.0 - std::max(lambda, 1.0 - lambda));
    }
}

TEST(Reinforce, RewardEqualToBaselineGivesZeroLossAndGradient)
{
    ad::Parameter z;
    z.value = column({0.3, -1.0, 2.0});
    z.zero_grad();
    ad::Tape tape;
    ad::Var probs = ad::sigmoid(tape.parameter(z));
    FaithfulnessSample s;
    s.mask = {1, 0, 1};
    s.reward = 0.4;
    ad::Var loss = faithfulness_loss(probs, {s}, 0.4);
    EXPECT_EQ(loss.item(), 0.0);
    tape.backward(loss);
    EXPECT_TRUE(z.grad.isZero());
}

TEST(Reinforce, PositiveAdvantageIncreasesSampledMaskProbability)
{
    ad::Parameter z;
    z.value = column({0.3, -1.0, 2.0});
    z.zero_grad();
    FaithfulnessSample s;
    s.mask = {1, 0, 1};
    s.reward = 1.0;
    {
        ad::Tape tape;
        tape.backward(faithfulness_loss(ad::sigmoid(tape.parameter(z)), {s}, 0.25));
    }
    const double before = mask_log_prob(z.value.col(0).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }), s.mask);
    const ad::Matrix stepped = z.value - 0.1 * z.grad; // descend the surrogate
    const double after = mask_log_prob(stepped.col(0).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }), s.mask);
    EXPECT_GT(after, before);
    // Per-coordinate: d(surrogate)/dz_j = -(R - b)(m_j - p_j).
    for (int j = 0; j < 3; ++j) {
        const double p = 1.0 / (1.0 + std::exp(-z.value(j, 0)));
        EXPECT_NEAR(z.grad(j, 0), -(0.75) * (s.mask[static_cast<std::size_t>(j)] - p), 1e-12);
    }
}

TEST(Reinforce, BaselineIsAnExponentialMovingAverage)
{
    RewardBaseline b(0.9);
    EXPECT_EQ(b.value(), 0.0);
    b.update(1.0);
    EXPECT_NEAR(b.value(), 0.1, 1e-15);
    b.update(-1.0);
    EXPECT_NEAR(b.value(), 0.09 - 0.1, 1e-15);
    RewardBaseline off(0.9, false);
    off.update(1.0);
    EXPECT_EQ(off.value(), 0.0);
}

TEST(Reinforce, SampleUsesAuxiliaryPredictions)
{
    const Instance inst = tiny_instance();
    JointModel model(small_model_config(), Vocabulary::from_instances({inst}), 4);
    const ModelOutput out = model.infer(inst);
    Rng rng(2);
    const FaithfulnessSample s = faithfulness_sample(model, inst, out, 0.5, rng);
    EXPECT_EQ(s.mask.size(), 3U);
    EXPECT_EQ(s.sufficient_class, model.infer(mask_sentences(inst, s.mask)).predicted_class);
    EXPECT_EQ(s.complement_class, model.infer(mask_sentences(inst, complement(s.mask))).predicted_class);
    EXPECT_DOUBLE_EQ(s.reward, faithfulness_reward(out.predicted_class, s.sufficient_class, s.complement_class, s.mask, 0.5));
    EXPECT_DOUBLE_EQ(s.log_prob, mask_log_prob(out.sentence_probs, s.mask));
}

TEST(DataConsistency, HandSetScoreMatrices)
{
    ad::Tape tape(false);
    ad::Var a = tape.constant(column({0.2, 0.8}));
    ad::Var b = tape.constant(column({0.4, 0.6}));
    EXPECT_NEAR(data_consistency_loss(a, b).item(), 0.2, 1e-15);
}

TEST(DataConsistency, ZeroMaskedWordsGivesZeroLoss)
{
    const Instance inst = tiny_instance();
    JointModel model(small_model_config(), Vocabulary::from_instances({inst}), 4);
    ad::Tape tape;
    ModelGraph g = model.forward(tape, inst);
    Rng rng(1);
    EXPECT_EQ(data_consistency_loss(model, tape, inst, g, 0, rng).item(), 0.0);
}

TEST(DataConsistency, GradientMatchesFiniteDifferences)
{
    Rng rng(8);
    auto x = random_parameter(3, 2, rng);
    auto y = random_parameter(3, 2, rng);
    auto r = check_gradients({&x, &y}, [](ad::Tape&, std::vector<ad::Var>& v) { return data_consistency_loss(ad::sigmoid(v[0]), ad::sigmoid(v[1])); });
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(ConfidenceIndication, Statistics)
{
    ad::Tape tape(false);
    const ad::Matrix flat = ConfidenceHead::statistics(tape.constant(column({0.5, 0.5, 0.5}))).value();
    EXPECT_EQ(flat, (ad::Matrix(1, 4) << 0.5, 0.5, 0.5, 0.0).finished());
    const ad::Matrix spread = ConfidenceHead::statistics(tape.constant(column({0.1, 0.5, 0.9}))).value();
    EXPECT_NEAR(spread(0, 0), 0.9, 1e-15);
    EXPECT_NEAR(spread(0, 1), 0.1, 1e-15);
    EXPECT_NEAR(spread(0, 2), 0.5, 1e-15);
    EXPECT_NEAR(spread(0, 3), std::sqrt((0.16 + 0.0 + 0.16) / 3.0), 1e-15);
    EXPECT_NEAR(spread(0, 3), 0.3266, 5e-5);
    const ad::Matrix single = ConfidenceHead::statistics(tape.constant(column({0.7}))).value();
    EXPECT_EQ(single(0, 3), 0.0);
}

TEST(ConfidenceIndication, PerfectAlignmentGivesZeroLoss)
{
    ad::Tape tape(false);
    ad::Var pc = tape.constant((ad::Matrix(1, 2) << 0.3, 0.7).finished());
    EXPECT_EQ(confidence_indication_loss(pc, 1, tape.scalar(0.7)).item(), 0.0);
    EXPECT_NEAR(confidence_indication_loss(pc, 1, tape.scalar(0.5)).item(), 0.2, 1e-15);
}

TEST(ConfidenceIndication, GradientMatchesFiniteDifferences)
{
    Rng rng(9);
    auto probs_logits = random_parameter(4, 1, rng);
    auto prior = random_parameter(1, 2, rng);
    ParameterStore head;
    ConfidenceHead{}.init_parameters(head, rng, 0.5);
    auto r = check_gradients({&probs_logits, &prior, &head.at("confidence.weight"), &head.at("confidence.bias")},
                             [&](ad::Tape& tape, std::vector<ad::Var>& v) {
                                 ad::Var est = ConfidenceHead{}.estimate(tape, ad::sigmoid(v[0]), head);
                                 return confidence_indication_loss(ad::softmax_rows(v[1]), 0, est);
                             });
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(TotalLoss, PlainSumOfActiveTerms)
{
    ad::Tape tape(false);
    EXPECT_DOUBLE_EQ(total_loss({tape.scalar(0.5), tape.scalar(0.25)}).item(), 0.75);
    EXPECT_DOUBLE_EQ(total_loss({tape.scalar(0.0), tape.scalar(0.0), tape.scalar(0.0)}).item(), 0.0);
    EXPECT_THROW((void)total_loss({}), std::invalid_argument);
    LossParts parts;
    parts.target = 0.5;
    parts.data_consistency = 0.25;
    EXPECT_DOUBLE_EQ(parts.total(), 0.75);
}

TEST(Presets, SwitchesMatchNames)
{
    const ObjectiveConfig sup = objective_preset("sup");
    EXPECT_TRUE(sup.supervised_explanations);
    EXPECT_FALSE(sup.faithfulness || sup.data_consistency || sup.confidence_indication);
    const ObjectiveConfig all = objective_preset("sup+all");
    EXPECT_TRUE(all.faithfulness && all.data_consistency && all.confidence_indication);
    const ObjectiveConfig uf = objective_preset("unsup+F");
    EXPECT_FALSE(uf.supervised_explanations);
    EXPECT_TRUE(uf.faithfulness);
    for (const auto& name : preset_names()) {
        EXPECT_NO_THROW((void)objective_preset(name));
    }
    EXPECT_THROW((void)objective_preset("sup+xyz"), ConfigError);
    EXPECT_THROW((void)objective_preset("semi"), ConfigError);
}

TEST(Presets, KeepNonSwitchFields)
{
    ObjectiveConfig base;
    base.lambda = 0.3;
    base.mask_words = 10;
    const ObjectiveConfig c = objective_preset("sup+dc", base);
    EXPECT_EQ(c.lambda, 0.3);
    EXPECT_EQ(c.mask_words, 10);
}
