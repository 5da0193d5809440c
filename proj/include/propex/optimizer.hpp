#pragma once

#include <cmath>
#include <map>
#include <string>

#include "propex/autograd.hpp"
#include "propex/parameters.hpp"

namespace propex {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment estimates are keyed by parameter name.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(ParameterStore& params)
    {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        for (auto& [name, p] : params) {
            if (p.grad.size() == 0) {
                continue;
            }
            auto& st = state_[name];
            if (st.m.size() == 0) {
                st.m = ad::Matrix::Zero(p.value.rows(), p.value.cols());
                st.v = ad::Matrix::Zero(p.value.rows(), p.value.cols());
            }
            st.m = config_.beta1 * st.m + (1.0 - config_.beta1) * p.grad;
            st.v = config_.beta2 * st.v + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
            p.value.array() -= config_.learning_rate * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + config_.eps);
        }
    }

    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    struct Moments {
        ad::Matrix m;
        ad::Matrix v;
    };

    AdamConfig config_;
    std::map<std::string, Moments> state_;
    long t_ = 0;
};

} // namespace propex
