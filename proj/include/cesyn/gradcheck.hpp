#pragma once

#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "cesyn/rng.hpp"
#include "cesyn/tape.hpp"
#include "cesyn/tensor.hpp"

namespace cesyn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0;
    int64_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0;

    double max_rel_err() const {
        double m = 0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_err);
        return m;
    }
    bool pass() const { return max_rel_err() < tol; }
};

// Scalar-valued function of the watched parameters. Called with a tape for
// the analytic pass and with nullptr for the finite-difference evaluations.
using TapeFn = std::function<Tensor<double>(Tape<double>*, std::vector<Tensor<double>>&)>;

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-3;
    // When >= 0, check only this many randomly chosen elements across all
    // parameters instead of every element.
    int64_t max_total_samples = -1;
    uint64_t seed = 7;
};

// Central finite differences in 64-bit mode against the tape's analytic
// gradient. Relative error is |analytic - numeric| / max(|numeric|, floor),
// so a backward pass that doubles the gradient reports an error near 1.
inline GradCheckReport gradient_check(const TapeFn& f, std::vector<Tensor<double>>& params,
                                      const std::vector<std::string>& names,
                                      const GradCheckOptions& opt = {}) {
    require(params.size() == names.size(), "gradient_check: one name per parameter required");

    Tape<double> tape;
    for (auto& p : params) tape.watch(p);
    Tensor<double> loss = f(&tape, params);
    require_shape(loss.size() == 1, "gradient_check: f must return a scalar");
    if (!std::isfinite(loss.item())) throw NumericError("gradient_check: non-finite loss");
    tape.backward(loss);

    std::vector<std::vector<double>> analytic(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        if (tape.has_grad(params[i]))
            analytic[i] = tape.grad(params[i]);
        else
            analytic[i].assign(params[i].size(), 0.0);
    }

    // element sampling across the concatenated parameter space
    int64_t total = 0;
    for (const auto& p : params) total += p.size();
    std::vector<std::pair<size_t, int64_t>> picks;
    if (opt.max_total_samples >= 0 && opt.max_total_samples < total) {
        Rng rng(opt.seed);
        std::unordered_set<int64_t> chosen;
        while (static_cast<int64_t>(chosen.size()) < opt.max_total_samples)
            chosen.insert(rng.uniform_int(0, total - 1));
        for (int64_t flat : chosen) {
            int64_t rest = flat;
            for (size_t i = 0; i < params.size(); ++i) {
                if (rest < params[i].size()) {
                    picks.emplace_back(i, rest);
                    break;
                }
                rest -= params[i].size();
            }
        }
    } else {
        for (size_t i = 0; i < params.size(); ++i)
            for (int64_t j = 0; j < params[i].size(); ++j) picks.emplace_back(i, j);
    }

    GradCheckReport report;
    report.tol = opt.tol;
    report.entries.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) report.entries[i].name = names[i];

    const double floor = 1e-8;
    for (const auto& [pi, j] : picks) {
        double& v = (*params[pi].store)[j];
        const double saved = v;
        v = saved + opt.h;
        const double fp = f(nullptr, params).item();
        v = saved - opt.h;
        const double fm = f(nullptr, params).item();
        v = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("gradient_check: non-finite loss during finite differences");
        const double numeric = (fp - fm) / (2.0 * opt.h);
        const double a = analytic[pi][j];
        double err = std::abs(a - numeric);
        if (std::abs(a) > floor || std::abs(numeric) > floor)
            err /= std::max(std::abs(numeric), floor);
        auto& e = report.entries[pi];
        e.max_rel_err = std::max(e.max_rel_err, err);
        ++e.checked;
    }
    return report;
}

}  // namespace cesyn
