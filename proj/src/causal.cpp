// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/causal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scat/check.hpp"

namespace scat {

DenseGrid class_indicator_volume(const SemanticWorld& world, int cls, std::size_t channels) {
    DenseGrid v({world.extents[0], world.extents[1], world.extents[2], channels});
    for (std::size_t x = 0; x < world.labels.size(); ++x) {
        if (world.labels[x] != cls) continue;
        double* row = v.data() + x * channels;
        for (std::size_t c = 0; c < channels; ++c) row[c] = 1.0;
    }
    return v;
}

std::vector<int> causal_class_pool(const SemanticWorld& world) {
    const auto counts = world.class_voxel_counts();
    std::vector<int> pool;
    for (std::size_t s = 0; s < counts.size(); ++s)
        if (counts[s] > 0) pool.push_back(static_cast<int>(s));
    return pool;
}

DenseGrid attention(const DenseGrid& grad_map) {
    SCAT_CHECK(grad_map.rank() == 3, "attention: gradient map must be U x V x C");
    const std::size_t px = grad_map.extent(0) * grad_map.extent(1);
    const std::size_t C = grad_map.extent(2);
    DenseGrid a({grad_map.extent(0), grad_map.extent(1)});
    const double inv = 1.0 / static_cast<double>(C);
    for (std::size_t p = 0; p < px; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += grad_map[p * C + c];
        a[p] = s * inv;
    }
    return a;
}

double bce_loss(const DenseGrid& attention_map, const std::vector<std::int32_t>& label2d, int cls,
                DenseGrid* d_attention, double loss_scale) {
    constexpr double eps = 1e-7;
    const std::size_t n = attention_map.size();
    SCAT_CHECK(label2d.size() == n, "bce_loss: attention / label size mismatch");

    double loss = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const double y = label2d[p] == cls ? 1.0 : 0.0;
        const double a = std::clamp(attention_map[p], eps, 1.0 - eps);
        loss -= y * std::log(a) + (1.0 - y) * std::log(1.0 - a);
        if (d_attention) {
            // clamp has zero derivative outside its active band
            if (attention_map[p] > eps && attention_map[p] < 1.0 - eps)
                (*d_attention)[p] +=
                    loss_scale / static_cast<double>(n) * (-(y / a) + (1.0 - y) / (1.0 - a));
        }
    }
    return loss / static_cast<double>(n);
}

bool influence_in_range(const DenseGrid& grad_map, double slack) {
    for (std::size_t i = 0; i < grad_map.size(); ++i)
        if (grad_map[i] < -slack || grad_map[i] > 1.0 + slack) return false;
    return true;
}

void write_pgm(const std::string& path, const DenseGrid& map2d) {
    SCAT_CHECK(map2d.rank() == 2, "write_pgm: map must be 2D");
    std::ofstream out(path, std::ios::binary);
    SCAT_CHECK(out.good(), "write_pgm: cannot open '", path, "'");
    out << "P5\n" << map2d.extent(1) << " " << map2d.extent(0) << "\n255\n";
    for (std::size_t i = 0; i < map2d.size(); ++i) {
        const double v = std::clamp(map2d[i], 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
}

} // namespace scat
