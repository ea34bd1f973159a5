// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/kvcache.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <string>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "citrus/error.hpp"

namespace citrus {

LayeredKVCache::LayeredKVCache(std::size_t n_layers, std::size_t n_heads, std::size_t dim)
    : m_kv(n_layers, LayerKv(n_heads, dim)), m_origins(n_layers), m_accumulated(n_layers) {}

LayeredKVCache LayeredKVCache::for_model(const ModelConfig& config) {
    return LayeredKVCache(config.n_layers, config.n_heads, config.kv_dim());
}

std::size_t LayeredKVCache::total_slots() const {
    std::size_t total = 0;
    for (const auto& o : m_origins) total += o.size();
    return total;
}

std::size_t LayeredKVCache::uniform_slots() const {
    if (m_origins.empty()) return 0;
    const std::size_t count = m_origins[0].size();
    for (const auto& o : m_origins) {
        if (o.size() != count) {
            raise(ErrorKind::Shape, "cache layers hold different slot counts");
        }
    }
    return count;
}

void LayeredKVCache::append(std::span<const LayerKv> new_kv, std::span<const Origin> origins) {
    if (new_kv.size() != m_kv.size()) {
        raise(ErrorKind::Shape, "new states cover " + std::to_string(new_kv.size()) + " layers, cache has " +
                                    std::to_string(m_kv.size()));
    }
    for (std::size_t i = 1; i < origins.size(); ++i) {
        if (origins[i] <= origins[i - 1]) {
            raise(ErrorKind::Origin, "appended origins must be strictly increasing");
        }
    }
    for (std::size_t l = 0; l < m_kv.size(); ++l) {
        const auto& src = new_kv[l];
        if (src.n_heads() != m_kv[l].n_heads() || src.dim != m_kv[l].dim) {
            raise(ErrorKind::Shape, "new states do not match the cache head layout");
        }
        if (src.slots() != origins.size()) {
            raise(ErrorKind::Shape, "origins count " + std::to_string(origins.size()) + " != new states " +
                                        std::to_string(src.slots()));
        }
        if (!origins.empty() && !m_origins[l].empty() && origins.front() <= m_origins[l].back()) {
            raise(ErrorKind::Origin, "origin " + std::to_string(origins.front()) +
                                         " does not follow existing origin " + std::to_string(m_origins[l].back()));
        }
    }
    for (std::size_t l = 0; l < m_kv.size(); ++l) {
        for (std::size_t h = 0; h < m_kv[l].n_heads(); ++h) {
            auto& keys = m_kv[l].keys[h];
            auto& values = m_kv[l].values[h];
            keys.insert(keys.end(), new_kv[l].keys[h].begin(), new_kv[l].keys[h].end());
            values.insert(values.end(), new_kv[l].values[h].begin(), new_kv[l].values[h].end());
        }
        m_origins[l].insert(m_origins[l].end(), origins.begin(), origins.end());
        m_accumulated[l].resize(m_origins[l].size(), 0.0f);
    }
}

void LayeredKVCache::retain(std::span<const RetentionSet> per_layer) {
    if (per_layer.size() != m_kv.size()) {
        raise(ErrorKind::Shape, "retention covers " + std::to_string(per_layer.size()) + " layers, cache has " +
                                    std::to_string(m_kv.size()));
    }
    for (std::size_t l = 0; l < m_kv.size(); ++l) {
        const auto& keep = per_layer[l];
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i] >= m_origins[l].size()) {
                raise(ErrorKind::Index, "retained index " + std::to_string(keep[i]) + " out of range for layer " +
                                            std::to_string(l) + " with " + std::to_string(m_origins[l].size()) +
                                            " slots");
            }
            if (i > 0 && keep[i] <= keep[i - 1]) {
                raise(ErrorKind::Index, "retained indices must be ascending and unique");
            }
        }
    }
    for (std::size_t l = 0; l < m_kv.size(); ++l) {
        const auto& keep = per_layer[l];
        auto& layer = m_kv[l];
        const std::size_t dim = layer.dim;
        for (std::size_t h = 0; h < layer.n_heads(); ++h) {
            // keep[] is ascending, so compaction can run in place
            auto compact = [&](std::vector<float>& slab) {
                for (std::size_t i = 0; i < keep.size(); ++i) {
                    std::copy_n(slab.begin() + static_cast<std::ptrdiff_t>(keep[i] * dim), dim,
                                slab.begin() + static_cast<std::ptrdiff_t>(i * dim));
                }
                slab.resize(keep.size() * dim);
            };
            compact(layer.keys[h]);
            compact(layer.values[h]);
        }
        for (std::size_t i = 0; i < keep.size(); ++i) {
            m_origins[l][i] = m_origins[l][keep[i]];
            m_accumulated[l][i] = m_accumulated[l][keep[i]];
        }
        m_origins[l].resize(keep.size());
        m_accumulated[l].resize(keep.size());
    }
}

void append_states(LayeredKVCache& cache, std::span<const LayerKv> new_kv, std::span<const Origin> origins) {
    cache.append(new_kv, origins);
}

void apply_retention(LayeredKVCache& cache, std::span<const RetentionSet> retained) {
    cache.retain(retained);
}

Positions assign_positions(std::size_t cache_len, std::size_t incoming_len) {
    Positions p;
    p.cache.resize(cache_len);
    p.chunk.resize(incoming_len);
    for (std::size_t i = 0; i < cache_len; ++i) p.cache[i] = static_cast<std::int32_t>(i);
    for (std::size_t i = 0; i < incoming_len; ++i) p.chunk[i] = static_cast<std::int32_t>(cache_len + i);
    return p;
}

std::string_view to_string(BudgetPhase phase) {
    switch (phase) {
    case BudgetPhase::PostEvict: return "post-evict";
    case BudgetPhase::PostAppend: return "post-append";
    case BudgetPhase::PostFinalize: return "post-finalize";
    }
    return "unknown";
}

BudgetReport budget_check(CacheLayout layout,
                          BudgetPhase phase,
                          std::span<const NamedCache> caches,
                          const RunConfig& config,
                          std::size_t tokens_seen) {
    BudgetReport report;
    report.phase = phase;
    const std::size_t k = config.budget;
    const std::size_t ls = config.chunk_len;
    switch (phase) {
    case BudgetPhase::PostEvict: report.limit_per_cache = k; break;
    case BudgetPhase::PostAppend: report.limit_per_cache = k + ls; break;
    case BudgetPhase::PostFinalize: report.limit_per_cache = std::min(k, tokens_seen); break;
    }
    report.limit_total = report.limit_per_cache * caches.size();
    if (layout == CacheLayout::Individual && phase == BudgetPhase::PostAppend) {
        report.limit_total = 2 * (ls + k);
    }

    auto violation = [&](const std::string& what) {
        raise(ErrorKind::BudgetViolation, std::string(to_string(phase)) + ": " + what);
    };

    std::size_t n_layers = 0;
    for (const auto& named : caches) {
        CacheCount count;
        count.name = std::string(named.name);
        n_layers = std::max(n_layers, named.cache->n_layers());
        for (std::size_t l = 0; l < named.cache->n_layers(); ++l) {
            const std::size_t slots = named.cache->slots(l);
            count.per_layer.push_back(slots);
            const std::string where =
                "cache " + count.name + " layer " + std::to_string(l) + " holds " + std::to_string(slots);
            if (phase == BudgetPhase::PostFinalize ? slots != report.limit_per_cache
                                                   : slots > report.limit_per_cache) {
                violation(where + " slots, limit " + std::to_string(report.limit_per_cache));
            }
            if (slots != named.cache->slots(0)) {
                violation(where + " slots but layer 0 holds " + std::to_string(named.cache->slots(0)));
            }
        }
        report.caches.push_back(std::move(count));
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t total = 0;
        for (const auto& c : report.caches) {
            if (l < c.per_layer.size()) total += c.per_layer[l];
        }
        if (total > report.limit_total) {
            violation("layer " + std::to_string(l) + " holds " + std::to_string(total) +
                      " slots across caches, limit " + std::to_string(report.limit_total));
        }
    }
    return report;
}

std::string base64_encode(std::span<const unsigned char> bytes) {
    using namespace boost::archive::iterators;
    using Encoder = base64_from_binary<transform_width<const unsigned char*, 6, 8>>;
    std::string out(Encoder(bytes.data()), Encoder(bytes.data() + bytes.size()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

nlohmann::json snapshot_json(const LayeredKVCache& cache, bool include_payload) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        nlohmann::json layer;
        layer["origins"] = cache.origins(l);
        if (include_payload) {
            const auto& kv = cache.kv()[l];
            auto encode = [](const std::vector<std::vector<float>>& heads) {
                std::vector<unsigned char> bytes;
                for (const auto& head : heads) {
                    for (float v : head) {
                        const auto bits = std::bit_cast<std::uint32_t>(v);
                        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
                    }
                }
                return base64_encode(bytes);
            };
            layer["dim"] = kv.dim;
            layer["heads"] = kv.n_heads();
            layer["keys"] = encode(kv.keys);
            layer["values"] = encode(kv.values);
        }
        layers.push_back(std::move(layer));
    }
    return nlohmann::json{{"layers", std::move(layers)}};
}

} // namespace citrus
