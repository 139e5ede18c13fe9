// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/grid.hpp"

#include <algorithm>
#include <cmath>

#include "scat/check.hpp"

namespace scat {

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

DenseGrid::DenseGrid(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    for (std::size_t e : shape_) SCAT_CHECK(e > 0, "DenseGrid: zero extent in shape");
    data_.assign(shape_product(shape_), 0.0);
}

DenseGrid::DenseGrid(std::vector<std::size_t> shape, double fill) : DenseGrid(std::move(shape)) {
    std::fill(data_.begin(), data_.end(), fill);
}

DenseGrid DenseGrid::scalar(double v) {
    DenseGrid g({1});
    g[0] = v;
    return g;
}

std::size_t DenseGrid::offset(std::span<const std::size_t> idx) const {
    SCAT_CHECK(idx.size() == shape_.size(), "DenseGrid::offset: rank mismatch");
    std::size_t off = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
        SCAT_CHECK(idx[a] < shape_[a], "DenseGrid::offset: index out of range on axis ", a);
        off = off * shape_[a] + idx[a];
    }
    return off;
}

double DenseGrid::at(std::initializer_list<std::size_t> idx) const {
    std::vector<std::size_t> v(idx);
    return data_[offset(v)];
}

double& DenseGrid::at(std::initializer_list<std::size_t> idx) {
    std::vector<std::size_t> v(idx);
    return data_[offset(v)];
}

bool DenseGrid::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void DenseGrid::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void DenseGrid::scale(double a) {
    for (double& v : data_) v *= a;
}

void DenseGrid::axpy(double a, const DenseGrid& other) {
    SCAT_CHECK(same_shape(other), "DenseGrid::axpy: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * other.data_[i];
}

DenseGrid reduce_sum(const DenseGrid& grid, const std::vector<std::size_t>& axes) {
    if (axes.empty()) return grid;

    const auto& shape = grid.shape();
    std::vector<bool> reduced(shape.size(), false);
    for (std::size_t a : axes) {
        SCAT_CHECK(a < shape.size(), "reduce_sum: axis ", a, " out of range");
        reduced[a] = true;
    }

    std::vector<std::size_t> out_shape;
    for (std::size_t a = 0; a < shape.size(); ++a)
        if (!reduced[a]) out_shape.push_back(shape[a]);
    if (out_shape.empty()) out_shape.push_back(1);

    DenseGrid out(out_shape);

    // Walk the input in ascending flat order, mapping each element to its
    // output bucket; the per-bucket accumulation order is therefore fixed.
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t flat = 0; flat < grid.size(); ++flat) {
        std::size_t out_off = 0;
        for (std::size_t a = 0; a < shape.size(); ++a)
            if (!reduced[a]) out_off = out_off * shape[a] + idx[a];
        out[out_off] += grid[flat];

        for (std::size_t a = shape.size(); a-- > 0;) {
            if (++idx[a] < shape[a]) break;
            idx[a] = 0;
        }
    }
    return out;
}

double sum_all(const DenseGrid& grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) s += grid[i];
    return s;
}

double dot(const DenseGrid& a, const DenseGrid& b) {
    SCAT_CHECK(a.size() == b.size(), "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs_diff(const DenseGrid& a, const DenseGrid& b) {
    SCAT_CHECK(a.size() == b.size(), "max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

DenseGrid random_uniform(SeededRng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    DenseGrid g(std::move(shape));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.uniform(lo, hi);
    return g;
}

DenseGrid random_normal(SeededRng& rng, std::vector<std::size_t> shape, double mean,
                        double stddev) {
    DenseGrid g(std::move(shape));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = mean + stddev * rng.normal();
    return g;
}

} // namespace scat
