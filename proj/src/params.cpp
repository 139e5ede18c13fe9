// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#include "scat/params.hpp"

#include <cmath>

#include "scat/check.hpp"

namespace scat {

Param& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
    SCAT_CHECK(!has(name), "ParamStore: duplicate parameter '", name, "'");
    index_[name] = items_.size();
    order_.push_back(name);
    Param p;
    p.value = DenseGrid(shape);
    p.grad = DenseGrid(shape);
    items_.push_back(std::move(p));
    return items_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    SCAT_CHECK(it != index_.end(), "ParamStore: unknown parameter '", name, "'");
    return items_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    SCAT_CHECK(it != index_.end(), "ParamStore: unknown parameter '", name, "'");
    return items_[it->second];
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& n : order_)
        if (n.rfind(prefix, 0) == 0) out.push_back(n);
    return out;
}

void ParamStore::zero_grads() {
    for (auto& p : items_) p.grad.fill(0.0);
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
}

DenseGrid pack_values(const ParamStore& store, const std::vector<std::string>& names) {
    std::size_t n = 0;
    for (const auto& name : names) n += store.at(name).value.size();
    DenseGrid out({n});
    std::size_t off = 0;
    for (const auto& name : names) {
        const DenseGrid& v = store.at(name).value;
        for (std::size_t i = 0; i < v.size(); ++i) out[off + i] = v[i];
        off += v.size();
    }
    return out;
}

DenseGrid pack_grads(const ParamStore& store, const std::vector<std::string>& names) {
    std::size_t n = 0;
    for (const auto& name : names) n += store.at(name).grad.size();
    DenseGrid out({n});
    std::size_t off = 0;
    for (const auto& name : names) {
        const DenseGrid& g = store.at(name).grad;
        for (std::size_t i = 0; i < g.size(); ++i) out[off + i] = g[i];
        off += g.size();
    }
    return out;
}

void unpack_values(ParamStore& store, const std::vector<std::string>& names,
                   const DenseGrid& packed) {
    std::size_t off = 0;
    for (const auto& name : names) {
        DenseGrid& v = store.at(name).value;
        SCAT_CHECK(off + v.size() <= packed.size(), "unpack_values: packed vector too short");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = packed[off + i];
        off += v.size();
    }
    SCAT_CHECK(off == packed.size(), "unpack_values: packed vector size mismatch");
}

void AdamW::step(ParamStore& store) {
    const auto& names = store.names();
    if (m_.empty()) {
        for (const auto& name : names) {
            m_.emplace_back(store.at(name).value.shape());
            v_.emplace_back(store.at(name).value.shape());
        }
    }
    SCAT_CHECK(m_.size() == names.size(), "AdamW: parameter set changed after first step");

    store.bump_step();
    const double t = static_cast<double>(store.step_count());
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);

    for (std::size_t k = 0; k < names.size(); ++k) {
        Param& p = store.at(names[k]);
        DenseGrid& m = m_[k];
        DenseGrid& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            if (cfg_.weight_decay != 0.0) p.value[i] -= cfg_.lr * cfg_.weight_decay * p.value[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace scat
