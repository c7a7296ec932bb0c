#pragma once

#include "rtrl/common.hpp"

#include <functional>
#include <string>

namespace rtrl {

struct GradCheckReport {
    bool pass = false;
    double max_relative_error = 0.0;
    int worst_coordinate = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Central finite differences against an analytic gradient. The relative
// error denominator is floored so that near-zero coordinates compare on an
// absolute scale commensurate with the finite-difference noise.
inline GradCheckReport finite_difference_check(
    const std::function<double(const VectorXd&)>& loss, const VectorXd& theta,
    const VectorXd& analytic_grad, double step = 1e-5, double tolerance = 1e-4,
    double denom_floor = 1e-3) {
    GradCheckReport report;
    VectorXd probe = theta;
    for (int i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + step;
        double up = loss(probe);
        probe[i] = theta[i] - step;
        double down = loss(probe);
        probe[i] = theta[i];
        double numeric = (up - down) / (2.0 * step);
        double denom = std::max({std::abs(numeric), std::abs(analytic_grad[i]), denom_floor});
        double rel = std::abs(numeric - analytic_grad[i]) / denom;
        if (rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_coordinate = i;
            report.analytic_at_worst = analytic_grad[i];
            report.numeric_at_worst = numeric;
        }
    }
    report.pass = report.max_relative_error <= tolerance;
    return report;
}

}  // namespace rtrl
