// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/world.hpp"

#include <cmath>

namespace scat {

std::int32_t SemanticWorld::label_at_index(const Vec3& idx) const {
    const long h = static_cast<long>(std::floor(idx.x + 0.5));
    const long w = static_cast<long>(std::floor(idx.y + 0.5));
    const long z = static_cast<long>(std::floor(idx.z + 0.5));
    if (h < 0 || w < 0 || z < 0 || h >= static_cast<long>(extents[0]) ||
        w >= static_cast<long>(extents[1]) || z >= static_cast<long>(extents[2]))
        return -1;
    return label_at(static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                    static_cast<std::size_t>(z));
}

std::vector<std::size_t> SemanticWorld::class_voxel_counts() const {
    std::vector<std::size_t> counts(n_classes + 1, 0);
    for (std::int32_t l : labels) counts[static_cast<std::size_t>(l)]++;
    return counts;
}

double SemanticWorld::empty_fraction() const {
    std::size_t empty = 0;
    for (std::int32_t l : labels)
        if (l == 0) ++empty;
    return static_cast<double>(empty) / static_cast<double>(labels.size());
}

} // namespace scat
