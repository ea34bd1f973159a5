// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citrus/model.hpp"
#include "citrus/numerics.hpp"
#include "citrus/run_config.hpp"

namespace citrus {

/// Per-layer retained key/value states. Every slot remembers the absolute
/// origin it was created from; origins within a layer are strictly
/// increasing. Layers evict independently, so layers may hold different
/// origins, but they hold the same number of slots between pipeline phases.
class LayeredKVCache {
public:
    LayeredKVCache() = default;
    LayeredKVCache(std::size_t n_layers, std::size_t n_heads, std::size_t dim);

    static LayeredKVCache for_model(const ModelConfig& config);

    std::size_t n_layers() const { return m_kv.size(); }
    std::size_t slots(std::size_t layer) const { return m_origins[layer].size(); }
    std::size_t total_slots() const;
    /// Slot count shared by all layers; ShapeError if the layers disagree.
    std::size_t uniform_slots() const;
    bool empty() const { return total_slots() == 0; }

    std::span<const LayerKv> kv() const { return m_kv; }
    const std::vector<Origin>& origins(std::size_t layer) const { return m_origins[layer]; }
    const std::vector<std::vector<Origin>>& all_origins() const { return m_origins; }

    /// H2O accumulated attention per slot; zero for policies that do not use it.
    std::span<float> accumulated(std::size_t layer) { return m_accumulated[layer]; }
    std::span<const float> accumulated(std::size_t layer) const { return m_accumulated[layer]; }

    /// Appends one slot per origin at the tail of every layer. OriginError unless
    /// the origins are strictly increasing and exceed every stored origin.
    void append(std::span<const LayerKv> new_kv, std::span<const Origin> origins);

    /// Keeps exactly the listed slots of each layer, in their original order.
    /// IndexError on out-of-range or unsorted indices.
    void retain(std::span<const RetentionSet> per_layer);

    bool operator==(const LayeredKVCache&) const = default;

private:
    std::vector<LayerKv> m_kv;
    std::vector<std::vector<Origin>> m_origins;
    std::vector<std::vector<float>> m_accumulated;
};

void append_states(LayeredKVCache& cache, std::span<const LayerKv> new_kv, std::span<const Origin> origins);
void apply_retention(LayeredKVCache& cache, std::span<const RetentionSet> retained);

/// Position shift: the cache always occupies 0..cache_len-1 and incoming tokens
/// continue from there, whatever their true document offsets are.
Positions assign_positions(std::size_t cache_len, std::size_t incoming_len);

enum class BudgetPhase { PostEvict, PostAppend, PostFinalize };
std::string_view to_string(BudgetPhase phase);

struct NamedCache {
    std::string_view name;
    const LayeredKVCache* cache;
};

struct CacheCount {
    std::string name;
    std::vector<std::size_t> per_layer;
};

struct BudgetReport {
    BudgetPhase phase = BudgetPhase::PostAppend;
    std::size_t step = 0;
    std::vector<CacheCount> caches;
    std::size_t limit_per_cache = 0;  // exact target for post-finalize
    std::size_t limit_total = 0;      // per layer, summed over caches
};

/// Checks slot counts against the phase budget:
///   post-evict    <= k per cache,
///   post-append   <= k + l_s per cache (individual: <= 2 (k + l_s) summed),
///   post-finalize == min(k, tokens_seen) per cache.
/// Throws BudgetViolation naming layer, cache and phase.
BudgetReport budget_check(CacheLayout layout,
                          BudgetPhase phase,
                          std::span<const NamedCache> caches,
                          const RunConfig& config,
                          std::size_t tokens_seen);

/// Per-layer origin lists, optionally with base64 little-endian f32 KV payloads.
nlohmann::json snapshot_json(const LayeredKVCache& cache, bool include_payload = false);

std::string base64_encode(std::span<const unsigned char> bytes);

} // namespace citrus
