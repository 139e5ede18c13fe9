// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "scat/check.hpp"

namespace scat {

VjpReport vjp_check(DiffOp& op, const DenseGrid& input, const DenseGrid& cotangent, double step) {
    SCAT_CHECK(step > 0.0, "vjp_check: step must be positive");

    DenseGrid out = op.forward(input);
    SCAT_CHECK(out.same_shape(cotangent), "vjp_check: cotangent shape does not match output");
    for (std::size_t i = 0; i < out.size(); ++i)
        SCAT_NUMERIC_CHECK(std::isfinite(out[i]), "vjp_check: non-finite forward output at flat index ",
                           i);

    DenseGrid analytic = op.adjoint(input, cotangent);
    SCAT_CHECK(analytic.same_shape(input), "vjp_check: adjoint shape does not match input");

    VjpReport report;
    DenseGrid x = input;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        const double h = step * std::max(1.0, std::abs(x0));

        x[i] = x0 + h;
        DenseGrid fp = op.forward(x);
        x[i] = x0 - h;
        DenseGrid fm = op.forward(x);
        x[i] = x0;

        double numeric = 0.0;
        for (std::size_t j = 0; j < fp.size(); ++j)
            numeric += cotangent[j] * (fp[j] - fm[j]) / (2.0 * h);

        SCAT_NUMERIC_CHECK(std::isfinite(numeric),
                           "vjp_check: non-finite finite-difference value for input element ", i);

        const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(numeric), 1e-8);
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    return report;
}

std::vector<GradcheckResult> run_gradcheck_entries(const std::vector<GradcheckEntry>& entries,
                                                   std::size_t n_seeds, std::uint64_t base_seed) {
    std::vector<GradcheckResult> results;
    results.reserve(entries.size());
    for (const auto& entry : entries) {
        GradcheckResult r;
        r.name = entry.name;
        r.tol = entry.tol;
        for (std::size_t k = 0; k < n_seeds; ++k) {
            const std::uint64_t seed = mix_seed(base_seed, k);
            VjpReport rep = entry.run(seed);
            if (rep.max_rel_err >= r.worst.max_rel_err) {
                r.worst = rep;
                r.worst_seed = seed;
            }
        }
        r.pass = r.worst.max_rel_err <= entry.tol;
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace scat
