// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scat/grid.hpp"
#include "scat/rng.hpp"
#include "scat/world.hpp"

namespace scat {

/// Indicator volume 1_{label == cls} replicated over `channels`: the cotangent
/// that seeds the per-class influence (adjoint) pass.
DenseGrid class_indicator_volume(const SemanticWorld& world, int cls, std::size_t channels);

/// Classes eligible for causal sampling: every class id (including empty 0)
/// with a non-empty voxel region in this world.
std::vector<int> causal_class_pool(const SemanticWorld& world);

/// A_s = channel mean of the gradient map [U, V, C].
DenseGrid attention(const DenseGrid& grad_map);

/// Mean binary cross-entropy of the attention map against the class mask;
/// the map is clamped to [1e-7, 1 - 1e-7] inside the logs only. d_attention
/// (optional) accumulates the gradient scaled by `loss_scale`.
double bce_loss(const DenseGrid& attention_map, const std::vector<std::int32_t>& label2d, int cls,
                DenseGrid* d_attention, double loss_scale = 1.0);

/// Verifies the stochasticity range invariant of a gradient map.
bool influence_in_range(const DenseGrid& grad_map, double slack = 1e-9);

/// Binary P2/P5-free portable graymap (P5, 8-bit) of a [U, V] map in [0, 1].
void write_pgm(const std::string& path, const DenseGrid& map2d);

} // namespace scat
