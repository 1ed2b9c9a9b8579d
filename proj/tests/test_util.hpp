#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "discover/autograd.hpp"
#include "discover/config.hpp"
#include "discover/random.hpp"

namespace testutil {

using discover::ag::Matrix;
using discover::ag::Var;

inline double rel_err(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Matrix random_matrix(discover::Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

/// Largest relative error between tape gradients and central differences of
/// a scalar function of several matrix inputs.
inline double max_grad_error(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Matrix> inputs,
                             double h = 1e-5) {
    std::vector<discover::ag::Parameter> leaves;
    for (std::size_t k = 0; k < inputs.size(); ++k) leaves.emplace_back("in" + std::to_string(k), inputs[k]);
    std::vector<Var> vars;
    for (auto& p : leaves) vars.push_back(p.var());
    Var out = f(vars);
    discover::ag::backward(out);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Matrix analytic = leaves[k].grad();
        for (Eigen::Index i = 0; i < inputs[k].rows(); ++i) {
            for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
                auto eval = [&](double delta) {
                    std::vector<Var> vs;
                    for (std::size_t q = 0; q < inputs.size(); ++q) {
                        Matrix m = inputs[q];
                        if (q == k) m(i, j) += delta;
                        vs.push_back(discover::ag::constant(m));
                    }
                    return f(vs).scalar();
                };
                const double numeric = (eval(h) - eval(-h)) / (2 * h);
                worst = std::max(worst, rel_err(analytic(i, j), numeric));
            }
        }
    }
    return worst;
}

/// Central-difference check of d(loss)/d(parameter) on `probes` random entries.
inline double max_param_grad_error(const std::function<double()>& loss, discover::ag::Parameter& p,
                                   const Matrix& analytic, int probes, discover::Rng& rng, double h = 1e-5) {
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        const auto i = static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<int>(p.value().rows()) - 1));
        const auto j = static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<int>(p.value().cols()) - 1));
        const double orig = p.value()(i, j);
        p.value()(i, j) = orig + h;
        const double up = loss();
        p.value()(i, j) = orig - h;
        const double down = loss();
        p.value()(i, j) = orig;
        worst = std::max(worst, rel_err(analytic(i, j), (up - down) / (2 * h)));
    }
    return worst;
}

/// Fresh, empty scratch directory private to this process.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("discover_test_" + std::to_string(::getpid()) + "_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Small corpus that trains in well under a second per epoch.
inline discover::Config small_config() {
    discover::Config c;
    c.data.n_songs = 60;
    c.data.melody_length = 8;
    c.data.n_performers = 6;
    c.encoder.hidden = 16;
    c.encoder.dim = 16;
    c.kdm.clusters = 8;
    c.gadm.disc_hidden = 8;
    c.train.batch_size = 8;
    c.train.epochs = 2;
    return c;
}

}  // namespace testutil
