// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scat/rng.hpp"

namespace scat {

/// Dense row-major N-dimensional array of doubles. The carrier type for all
/// features, kernels, volumes and parameter tensors in this project.
class DenseGrid {
  public:
    DenseGrid() = default;
    explicit DenseGrid(std::vector<std::size_t> shape);
    DenseGrid(std::vector<std::size_t> shape, double fill);

    static DenseGrid scalar(double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    /// Flat offset of a multi-index (row-major).
    std::size_t offset(std::span<const std::size_t> idx) const;
    double at(std::initializer_list<std::size_t> idx) const;
    double& at(std::initializer_list<std::size_t> idx);

    bool same_shape(const DenseGrid& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double v);
    void scale(double a);
    /// this += a * other (shapes must match).
    void axpy(double a, const DenseGrid& other);

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

/// Sum over the listed axes with a fixed accumulation order (ascending flat
/// index of the input); bit-reproducible. Empty axis list returns a copy.
DenseGrid reduce_sum(const DenseGrid& grid, const std::vector<std::size_t>& axes);

double sum_all(const DenseGrid& grid);
double dot(const DenseGrid& a, const DenseGrid& b);
double max_abs_diff(const DenseGrid& a, const DenseGrid& b);

DenseGrid random_uniform(SeededRng& rng, std::vector<std::size_t> shape, double lo, double hi);
DenseGrid random_normal(SeededRng& rng, std::vector<std::size_t> shape, double mean,
                        double stddev);

} // namespace scat
