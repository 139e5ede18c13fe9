// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/occhead.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "scat/check.hpp"
#include "scat/mlp.hpp"

namespace scat {

void init_decoder_params(ParamStore& store, std::size_t channels, std::size_t hidden,
                         std::size_t classes_with_empty, SeededRng& rng) {
    Param& w1 = store.add("dec.w1", {channels, hidden});
    store.add("dec.b1", {hidden});
    Param& w2 = store.add("dec.w2", {hidden, classes_with_empty});
    store.add("dec.b2", {classes_with_empty});
    const double s1 = 1.0 / std::sqrt(static_cast<double>(channels));
    for (std::size_t i = 0; i < w1.value.size(); ++i) w1.value[i] = s1 * rng.normal();
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < w2.value.size(); ++i) w2.value[i] = s2 * rng.normal();
}

DecoderCache decode(const DenseGrid& volume, const ParamStore& store, std::size_t hidden,
                    std::size_t classes_with_empty) {
    SCAT_CHECK(volume.rank() == 4, "decode: volume must be H x W x Z x C");
    const std::size_t C = volume.extent(3);
    const std::size_t n = volume.size() / C;

    const DenseGrid& w1 = store.at("dec.w1").value;
    const DenseGrid& b1 = store.at("dec.b1").value;
    const DenseGrid& w2 = store.at("dec.w2").value;
    const DenseGrid& b2 = store.at("dec.b2").value;
    SCAT_CHECK(w1.extent(0) == C, "decode: channel count does not match decoder params");

    DecoderCache cache;
    cache.hidden = DenseGrid({n, hidden});
    affine_forward(volume.data(), n, C, w1.data(), b1.data(), hidden, cache.hidden.data());
    tanh_forward(cache.hidden.data(), n * hidden, cache.hidden.data());

    cache.logits =
        DenseGrid({volume.extent(0), volume.extent(1), volume.extent(2), classes_with_empty});
    affine_forward(cache.hidden.data(), n, hidden, w2.data(), b2.data(), classes_with_empty,
                   cache.logits.data());
    return cache;
}

void decode_backward(const DecoderCache& cache, const DenseGrid& volume, const ParamStore& store,
                     std::size_t hidden, const DenseGrid& d_logits, ParamStore& grads_store,
                     DenseGrid* d_volume) {
    const std::size_t C = volume.extent(3);
    const std::size_t n = volume.size() / C;
    const std::size_t out = cache.logits.shape().back();

    const DenseGrid& w1 = store.at("dec.w1").value;
    const DenseGrid& w2 = store.at("dec.w2").value;

    DenseGrid dh({n, hidden});
    affine_backward(cache.hidden.data(), n, hidden, w2.data(), out, d_logits.data(), dh.data(),
                    grads_store.at("dec.w2").grad.data(), grads_store.at("dec.b2").grad.data());

    DenseGrid dh_pre({n, hidden});
    tanh_backward_accum(cache.hidden.data(), dh.data(), n * hidden, dh_pre.data());

    affine_backward(volume.data(), n, C, w1.data(), hidden, dh_pre.data(),
                    d_volume ? d_volume->data() : nullptr, grads_store.at("dec.w1").grad.data(),
                    grads_store.at("dec.b1").grad.data());
}

double occupancy_ce(const DenseGrid& logits, const SemanticWorld& world, DenseGrid* d_logits,
                    double loss_scale) {
    const std::size_t K = logits.shape().back();
    const std::size_t n = logits.size() / K;
    SCAT_CHECK(n == world.voxel_count(), "occupancy_ce: volume / world size mismatch");

    double loss = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        const double* row = logits.data() + x * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
        const double lse = mx + std::log(sum);
        const std::size_t label = static_cast<std::size_t>(world.labels[x]);
        loss += lse - row[label];

        if (d_logits) {
            double* drow = d_logits->data() + x * K;
            const double scale = loss_scale / static_cast<double>(n);
            for (std::size_t k = 0; k < K; ++k)
                drow[k] += scale * (std::exp(row[k] - lse) - (k == label ? 1.0 : 0.0));
        }
    }
    return loss / static_cast<double>(n);
}

DenseGrid occupancy_probabilities(const DenseGrid& logits) {
    DenseGrid probs = logits;
    const std::size_t K = logits.shape().back();
    softmax_rows(probs.data(), probs.size() / K, K);
    return probs;
}

std::vector<std::int32_t> predict_labels(const DenseGrid& logits) {
    const std::size_t K = logits.shape().back();
    const std::size_t n = logits.size() / K;
    std::vector<std::int32_t> out(n);
    for (std::size_t x = 0; x < n; ++x) {
        const double* row = logits.data() + x * K;
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (row[k] > row[best]) best = k; // strict: ties keep the lower id
        out[x] = static_cast<std::int32_t>(best);
    }
    return out;
}

void Confusion::add(const std::vector<std::int32_t>& pred, const SemanticWorld& world) {
    const std::size_t K = world.n_classes + 1;
    if (inter_.size() < K) {
        inter_.resize(K, 0);
        pred_.resize(K, 0);
        gt_.resize(K, 0);
    }
    SCAT_CHECK(pred.size() == world.labels.size(), "Confusion::add: size mismatch");
    for (std::size_t x = 0; x < pred.size(); ++x) {
        const auto p = static_cast<std::size_t>(pred[x]);
        const auto g = static_cast<std::size_t>(world.labels[x]);
        pred_[p]++;
        gt_[g]++;
        if (p == g) inter_[p]++;
        const bool po = p != 0, go = g != 0;
        if (po) occ_pred_++;
        if (go) occ_gt_++;
        if (po && go) occ_inter_++;
    }
}

MetricsReport Confusion::report(const std::vector<bool>& dynamic_flag) const {
    MetricsReport r;
    double sum = 0.0, sum_dyn = 0.0;
    std::size_t n = 0, n_dyn = 0;
    for (std::size_t s = 1; s < gt_.size(); ++s) {
        const std::size_t uni = pred_[s] + gt_[s] - inter_[s];
        if (uni == 0) continue; // absent from both pred and GT
        const double iou = static_cast<double>(inter_[s]) / static_cast<double>(uni);
        r.class_ids.push_back(static_cast<int>(s));
        r.class_iou.push_back(iou);
        if (gt_[s] > 0) {
            sum += iou;
            ++n;
            if (s < dynamic_flag.size() && dynamic_flag[s]) {
                sum_dyn += iou;
                ++n_dyn;
            }
        }
    }
    r.miou = n > 0 ? sum / static_cast<double>(n) : 0.0;
    r.miou_dynamic = n_dyn > 0 ? sum_dyn / static_cast<double>(n_dyn) : 0.0;
    const std::size_t occ_uni = occ_pred_ + occ_gt_ - occ_inter_;
    r.iou_occupied =
        occ_uni > 0 ? static_cast<double>(occ_inter_) / static_cast<double>(occ_uni) : 1.0;
    return r;
}

MetricsReport evaluate(const DenseGrid& logits, const SemanticWorld& world) {
    Confusion conf;
    conf.add(predict_labels(logits), world);
    return conf.report(world.dynamic_flag);
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["miou"] = miou;
    j["miou_dynamic"] = miou_dynamic;
    j["iou_occupied"] = iou_occupied;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < class_ids.size(); ++i)
        per[std::to_string(class_ids[i])] = class_iou[i];
    j["class_iou"] = per;
    return j.dump();
}

} // namespace scat
