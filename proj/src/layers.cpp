#include "discover/layers.hpp"

#include <cmath>

#include "discover/error.hpp"

namespace discover {

Linear::Linear(const std::string& name, int in, int out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    ag::Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    ag::Matrix b(1, out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
    weight = ag::Parameter(name + ".w", std::move(w));
    bias = ag::Parameter(name + ".b", std::move(b));
}

ag::Var Linear::operator()(const ag::Var& x) const { return ag::add_row(ag::matmul(x, weight.var()), bias.var()); }

ag::Matrix Linear::apply(const ag::Matrix& x) const {
    if (x.cols() != weight.value().rows()) throw InputError("Linear: input width mismatch");
    return (x * weight.value()).rowwise() + bias.value().row(0);
}

void Linear::collect(ag::ParameterList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

}  // namespace discover
