// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "scat/geometry.hpp"

namespace scat {

/// Ground-truth semantic voxel grid. Label 0 is the empty class; labels
/// 1..n_classes are object classes.
struct SemanticWorld {
    std::array<std::size_t, 3> extents{}; // H, W, Z
    std::vector<std::int32_t> labels;     // flat, row-major (h, w, z)
    std::size_t n_classes = 0;            // S (non-empty classes)
    std::vector<bool> dynamic_flag;       // size n_classes + 1; index by class id

    std::size_t voxel_count() const { return extents[0] * extents[1] * extents[2]; }

    std::size_t flat(std::size_t h, std::size_t w, std::size_t z) const {
        return (h * extents[1] + w) * extents[2] + z;
    }

    std::int32_t label_at(std::size_t h, std::size_t w, std::size_t z) const {
        return labels[flat(h, w, z)];
    }

    /// Nearest-voxel lookup of a continuous index coordinate; returns -1 when
    /// outside the grid.
    std::int32_t label_at_index(const Vec3& idx) const;

    /// Voxel count per class id (0..n_classes).
    std::vector<std::size_t> class_voxel_counts() const;

    double empty_fraction() const;
};

} // namespace scat
