#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "origami/tensor.hpp"

// Central-difference gradient checking against the reverse-mode sweep.
// f() must rebuild its graph from the current contents of `params` on every
// call; the analytic grads come from one backward pass, the numeric ones from
// bumping each element by ±step with recording off.

namespace testutil {

inline void gradcheck(const std::function<origami::Tensor<double>()>& f,
                      std::vector<origami::Tensor<double>> params, double step = 1e-5,
                      double tol = 1e-6) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    f().backward();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto data = params[pi].data();
        auto grad = params[pi].grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            double fp, fm;
            {
                origami::NoGradGuard ng;
                data[i] = keep + step;
                fp = f().item();
                data[i] = keep - step;
                fm = f().item();
                data[i] = keep;
            }
            const double fd = (fp - fm) / (2.0 * step);
            const double rel = std::abs(grad[i] - fd) / (std::abs(grad[i]) + 1e-8);
            INFO("param ", pi, " elem ", i, ": analytic ", grad[i], " vs fd ", fd);
            CHECK(rel <= tol);
        }
    }
}

}  // namespace testutil
