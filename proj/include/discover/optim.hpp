#pragma once

#include <vector>

#include "discover/autograd.hpp"

namespace discover {

/// Adam with L2 weight decay folded into the gradient. Moments are stored by
/// position, so the same parameter list order must be passed on every step.
class Adam {
public:
    Adam() = default;
    Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const ag::ParameterList& params);

    long steps() const { return t_; }
    std::vector<ag::Matrix>& first_moments() { return m_; }
    std::vector<ag::Matrix>& second_moments() { return v_; }
    void set_steps(long t) { t_ = t; }
    /// Allocates zero moments for the given list if none exist yet.
    void ensure_moments(const ag::ParameterList& params);

private:
    double lr_ = 1e-3;
    double weight_decay_ = 0.0;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    std::vector<ag::Matrix> m_;
    std::vector<ag::Matrix> v_;
};

void zero_grad(const ag::ParameterList& params);

}  // namespace discover
