#pragma once

#include <string>

#include "discover/autograd.hpp"
#include "discover/random.hpp"

namespace discover {

/// y = x W + b, with W uniform in +-1/sqrt(in).
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng);

    ag::Var operator()(const ag::Var& x) const;
    ag::Matrix apply(const ag::Matrix& x) const;

    int in() const { return static_cast<int>(weight.value().rows()); }
    int out() const { return static_cast<int>(weight.value().cols()); }
    void collect(ag::ParameterList& out);

    ag::Parameter weight;
    ag::Parameter bias;
};

}  // namespace discover
