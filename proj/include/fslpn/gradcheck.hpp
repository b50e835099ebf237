#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fslpn/tensor.hpp"

// Central finite-difference verification of analytic gradients. Runs at
// 64-bit: the 1e-4 tolerance is unattainable at 32-bit. The relative error
// denominator carries a small-magnitude floor so near-zero gradient pairs do
// not divide by ~0.

namespace fslpn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool pass = true;
    std::string worst;  // "tensor[i]: analytic=.. numeric=.." for the worst element

    void merge(const GradCheckReport& o) {
        if (o.max_rel_err > max_rel_err) {
            max_rel_err = o.max_rel_err;
            worst = o.worst;
        }
        checked += o.checked;
        pass = pass && o.pass;
    }
};

class GradChecker {
  public:
    double step = 1e-5;
    double tolerance = 1e-4;
    double denom_floor = 1e-4;

    // `forward` recomputes the scalar loss from the current values of the
    // probed tensors. `backward` runs one forward+backward and fills .g on
    // each probed tensor. `skip` filters probe points (ReLU kinks etc.).
    GradCheckReport check(const std::vector<Tensor<double>*>& probes,
                          const std::function<double()>& forward,
                          const std::function<void()>& backward,
                          const std::function<bool(const Tensor<double>&, std::size_t)>& skip =
                              nullptr) const {
        for (auto* t : probes) {
            t->ensure_grad();
            t->zero_grad();
        }
        backward();

        GradCheckReport report;
        std::size_t probe_idx = 0;
        for (auto* t : probes) {
            for (std::size_t i = 0; i < t->size(); ++i) {
                if (skip && skip(*t, i)) continue;
                const double saved = t->v[i];
                t->v[i] = saved + step;
                const double f_plus = forward();
                t->v[i] = saved - step;
                const double f_minus = forward();
                t->v[i] = saved;
                if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                    throw_numeric("grad_check: non-finite loss while probing element " +
                                  std::to_string(i));
                const double numeric = (f_plus - f_minus) / (2.0 * step);
                const double analytic = t->g[i];
                const double denom =
                    std::max({std::fabs(analytic), std::fabs(numeric), denom_floor});
                const double rel = std::fabs(analytic - numeric) / denom;
                ++report.checked;
                if (rel > report.max_rel_err) {
                    report.max_rel_err = rel;
                    report.worst = "probe " + std::to_string(probe_idx) + "[" + std::to_string(i) +
                                   "]: analytic=" + std::to_string(analytic) +
                                   " numeric=" + std::to_string(numeric);
                }
            }
            ++probe_idx;
        }
        report.pass = report.max_rel_err < tolerance;
        return report;
    }
};

}  // namespace fslpn
