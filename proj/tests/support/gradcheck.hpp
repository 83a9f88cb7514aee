#pragma once

// Central finite-difference gradient oracle shared by the unit and
// acceptance suites. Stays independent of the tape's backward pass: it only
// re-runs forward evaluations at perturbed inputs.

#include <cmath>
#include <functional>
#include <string>

#include "saliex/tensor.hpp"

namespace testsupport {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // description of the worst element
    bool ok = true;
};

inline double rel_err(double analytic, double numeric) {
    double denom = std::max(std::abs(analytic), std::abs(numeric));
    double diff = std::abs(analytic - numeric);
    if (diff <= 1e-8) return 0.0;  // both effectively zero at fd noise level
    return diff / denom;
}

// loss(x) must be a pure function of x. Compares analytic (same layout as x)
// against central differences with the given step.
inline GradCheckReport check_gradient(const std::function<double(const saliex::Tensor&)>& loss,
                                      const saliex::Tensor& x, const saliex::Tensor& analytic,
                                      double h, double tol, const std::string& label) {
    GradCheckReport rep;
    saliex::Tensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        double keep = probe.data[i];
        probe.data[i] = keep + h;
        double up = loss(probe);
        probe.data[i] = keep - h;
        double down = loss(probe);
        probe.data[i] = keep;
        double numeric = (up - down) / (2.0 * h);
        double e = rel_err(analytic.data[i], numeric);
        if (e > rep.max_rel_err) {
            rep.max_rel_err = e;
            rep.worst = label + "[" + std::to_string(i) + "] analytic=" +
                        std::to_string(analytic.data[i]) + " numeric=" + std::to_string(numeric);
        }
    }
    rep.ok = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace testsupport
