#include "discover/optim.hpp"

#include <cmath>

#include "discover/error.hpp"

namespace discover {

void Adam::ensure_moments(const ag::ParameterList& params) {
    if (!m_.empty()) {
        if (m_.size() != params.size()) throw InputError("Adam: parameter list changed size");
        return;
    }
    for (const auto* p : params) {
        m_.push_back(ag::Matrix::Zero(p->value().rows(), p->value().cols()));
        v_.push_back(ag::Matrix::Zero(p->value().rows(), p->value().cols()));
    }
}

void Adam::step(const ag::ParameterList& params) {
    ensure_moments(params);
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ag::Parameter& p = *params[k];
        if (p.grad().size() == 0) continue;
        ag::Matrix g = p.grad() + weight_decay_ * p.value();
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseAbs2();
        p.value().array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
}

void zero_grad(const ag::ParameterList& params) {
    for (auto* p : params) p->zero_grad();
}

}  // namespace discover
