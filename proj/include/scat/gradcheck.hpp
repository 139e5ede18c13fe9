// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scat/grid.hpp"

namespace scat {

/// Uniform forward/adjoint contract for a differentiable operator. `forward`
/// maps one input grid to one output grid (other operands are captured);
/// `adjoint` returns the vector-Jacobian product w.r.t. that input.
class DiffOp {
  public:
    virtual ~DiffOp() = default;
    virtual DenseGrid forward(const DenseGrid& input) = 0;
    virtual DenseGrid adjoint(const DenseGrid& input, const DenseGrid& cotangent) = 0;
};

class FunctionalDiffOp final : public DiffOp {
  public:
    using ForwardFn = std::function<DenseGrid(const DenseGrid&)>;
    using AdjointFn = std::function<DenseGrid(const DenseGrid&, const DenseGrid&)>;
    FunctionalDiffOp(ForwardFn f, AdjointFn a) : f_(std::move(f)), a_(std::move(a)) {}
    DenseGrid forward(const DenseGrid& input) override { return f_(input); }
    DenseGrid adjoint(const DenseGrid& input, const DenseGrid& cotangent) override {
        return a_(input, cotangent);
    }

  private:
    ForwardFn f_;
    AdjointFn a_;
};

struct VjpReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compare the analytic adjoint against central finite differences. The step
/// for input element i is `step * max(1, |x_i|)`; the relative error of
/// element i is |analytic - numeric| / max(|numeric|, 1e-8).
VjpReport vjp_check(DiffOp& op, const DenseGrid& input, const DenseGrid& cotangent, double step);

struct GradcheckEntry {
    std::string name;
    double step = 1e-5;
    double tol = 1e-6;
    // Builds a seeded instance and runs one vjp_check.
    std::function<VjpReport(std::uint64_t seed)> run;
};

struct GradcheckResult {
    std::string name;
    VjpReport worst;
    std::uint64_t worst_seed = 0;
    double tol = 1e-6;
    bool pass = false;
};

std::vector<GradcheckResult> run_gradcheck_entries(const std::vector<GradcheckEntry>& entries,
                                                   std::size_t n_seeds, std::uint64_t base_seed);

/// The project-wide operator registry (assembled over every module).
std::vector<GradcheckEntry> build_gradcheck_suite();

} // namespace scat
