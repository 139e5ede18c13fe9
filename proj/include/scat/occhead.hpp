// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scat/grid.hpp"
#include "scat/params.hpp"
#include "scat/world.hpp"

namespace scat {

void init_decoder_params(ParamStore& store, std::size_t channels, std::size_t hidden,
                         std::size_t classes_with_empty, SeededRng& rng);

struct DecoderCache {
    DenseGrid hidden; // [N, hidden] post-tanh
    DenseGrid logits; // [H, W, Z, S+1]
};

/// Per-voxel affine-tanh-affine decoder over the densified feature volume.
DecoderCache decode(const DenseGrid& volume, const ParamStore& store, std::size_t hidden,
                    std::size_t classes_with_empty);

void decode_backward(const DecoderCache& cache, const DenseGrid& volume, const ParamStore& store,
                     std::size_t hidden, const DenseGrid& d_logits, ParamStore& grads_store,
                     DenseGrid* d_volume);

/// Mean negative log-probability of the true class over all voxels. d_logits
/// (optional) receives the gradient, scaled by `loss_scale`.
double occupancy_ce(const DenseGrid& logits, const SemanticWorld& world, DenseGrid* d_logits,
                    double loss_scale = 1.0);

/// Per-voxel softmax probabilities of the logits.
DenseGrid occupancy_probabilities(const DenseGrid& logits);

/// Argmax labels; ties break toward the lower class id.
std::vector<std::int32_t> predict_labels(const DenseGrid& logits);

struct MetricsReport {
    std::vector<int> class_ids;      // classes present in prediction or GT
    std::vector<double> class_iou;   // aligned with class_ids
    double miou = 0.0;               // mean IoU over classes present in GT
    double miou_dynamic = 0.0;       // restricted to dynamic-flagged classes
    double iou_occupied = 0.0;       // binary occupied-vs-empty IoU
    std::string to_json() const;
};

/// Confusion-count accumulator so multi-scene metrics pool voxels rather than
/// averaging per-scene ratios.
class Confusion {
  public:
    void add(const std::vector<std::int32_t>& pred, const SemanticWorld& world);
    MetricsReport report(const std::vector<bool>& dynamic_flag) const;

  private:
    std::vector<std::size_t> inter_, pred_, gt_;
    std::size_t occ_inter_ = 0, occ_pred_ = 0, occ_gt_ = 0;
};

MetricsReport evaluate(const DenseGrid& logits, const SemanticWorld& world);

} // namespace scat
