#ifndef SRM_TEST_UTIL_HPP
#define SRM_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "srm/tensor.hpp"

namespace srmtest {

// Central-difference gradient check. Builds loss = sum(r (*) f()) with a
// fixed random projection r, backpropagates, then compares every input
// element's analytic gradient against (f(x+h) - f(x-h)) / 2h.
// Returns the max combined relative error max|a-n| / max(1, |a|, |n|).
inline double grad_check(const std::function<srm::Tensor()>& fn, std::vector<srm::Tensor> inputs, srm::Rng& rng,
                         double h = 1e-5) {
    using namespace srm;
    for (Tensor& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tape::active().clear();
    Tensor out = fn();
    std::vector<double> proj(out.size());
    for (double& p : proj) p = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    Tensor r = Tensor::from(out.shape(), proj);
    Tensor loss = sum(mul(out, r));
    Tape::active().backward(loss);
    std::vector<std::vector<double>> analytic;
    for (Tensor& t : inputs) analytic.push_back(t.grad());
    Tape::active().clear();

    auto eval = [&]() {
        NoGradGuard ng;
        Tensor y = fn();
        double acc = 0.0;
        const double* py = y.data();
        for (std::size_t i = 0; i < proj.size(); ++i) acc += py[i] * proj[i];
        return acc;
    };

    double max_err = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& t = inputs[k];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t.data()[i];
            t.data()[i] = orig + h;
            const double lp = eval();
            t.data()[i] = orig - h;
            const double lm = eval();
            t.data()[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

inline srm::Tensor random_tensor(srm::Shape shape, srm::Rng& rng, double lo = -1.0, double hi = 1.0) {
    return srm::Tensor::rand_uniform(std::move(shape), rng, lo, hi);
}

}  // namespace srmtest

#endif  // SRM_TEST_UTIL_HPP
