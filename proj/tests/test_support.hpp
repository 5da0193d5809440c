#pragma once

// Shared helpers for the unit tests: central-difference gradient checks and small fixtures.

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "propex/propex.hpp"

namespace propex::testing {

/// Builds a scalar loss on a fresh tape from parameter leaves.
using LossFn = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

struct GradCheck {
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
};

/// Compares reverse-mode gradients of `loss` with central differences at step h.
inline GradCheck check_gradients(std::vector<ad::Parameter*> params, const LossFn& loss, double h = 1e-6)
{
    for (auto* p : params) {
        p->zero_grad();
    }
    {
        ad::Tape tape;
        std::vector<ad::Var> leaves;
        for (auto* p : params) {
            leaves.push_back(tape.parameter(*p));
        }
        tape.backward(loss(tape, leaves));
    }
    auto eval = [&] {
        ad::Tape tape(false);
        std::vector<ad::Var> leaves;
        for (auto* p : params) {
            leaves.push_back(tape.parameter(*p));
        }
        return loss(tape, leaves).item();
    };
    GradCheck out;
    for (auto* p : params) {
        for (ad::Index i = 0; i < p->value.size(); ++i) {
            const double orig = p->value.data()[i];
            p->value.data()[i] = orig + h;
            const double up = eval();
            p->value.data()[i] = orig - h;
            const double down = eval();
            p->value.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad.data()[i];
            const double err = std::abs(numeric - analytic);
            out.max_abs_error = std::max(out.max_abs_error, err);
            out.max_rel_error = std::max(out.max_rel_error, err / std::max(1e-3, std::abs(numeric) + std::abs(analytic)));
        }
    }
    return out;
}

inline ad::Parameter random_parameter(ad::Index rows, ad::Index cols, Rng& rng, double scale = 1.0)
{
    ad::Parameter p;
    p.value.resize(rows, cols);
    for (ad::Index i = 0; i < p.value.size(); ++i) {
        p.value.data()[i] = scale * rng.normal();
    }
    p.zero_grad();
    return p;
}

/// Hand-built two-class instance: query "k0 w1", three sentences, rationale = sentence 1.
inline Instance tiny_instance(const std::string& id = "t0", int label = 1)
{
    Instance inst;
    inst.id = id;
    inst.query = {"k0", "w1"};
    inst.sentences = {{"k0", "w2", "w3"}, {"c" + std::to_string(label), "k0"}, {"w4", "k0", "w5"}};
    inst.label = label;
    inst.rationales = {{0, 1, 0}};
    return inst;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(std::filesystem::temp_directory_path() / ("propex_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                                           std::to_string(reinterpret_cast<std::uintptr_t>(this))))
    {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace propex::testing
