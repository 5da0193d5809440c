#pragma once

#include <string>

#include "propex/autograd.hpp"
#include "propex/parameters.hpp"
#include "propex/rng.hpp"

namespace propex {

/// Linear map from (max, min, mean, population std) of the sentence probabilities to one
/// logit, followed by a sigmoid. Parameters live in a store under `prefix`.
struct ConfidenceHead {
    std::string prefix = "confidence";

    void init_parameters(ParameterStore& store, Rng& rng, double init_std) const
    {
        store.add_normal(prefix + ".weight", 4, 1, init_std, rng);
        store.add_constant(prefix + ".bias", 1, 1, 0.0);
    }

    /// 1 x 4 row of summary statistics.
    [[nodiscard]] static ad::Var statistics(ad::Var sentence_probs)
    {
        return ad::concat_cols({ad::max_all(sentence_probs), ad::min_all(sentence_probs), ad::mean(sentence_probs), ad::std_all(sentence_probs)});
    }

    /// Predicted confidence in (0, 1) as a 1x1 Var.
    [[nodiscard]] ad::Var estimate(ad::Tape& tape, ad::Var sentence_probs, ParameterStore& store) const
    {
        ad::Var w = tape.parameter(store.at(prefix + ".weight"));
        ad::Var b = tape.parameter(store.at(prefix + ".bias"));
        return ad::sigmoid(ad::add(ad::matmul(statistics(sentence_probs), w), b));
    }
};

} // namespace propex
