// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "citrus/kvcache.hpp"
#include "citrus/model.hpp"
#include "citrus/numerics.hpp"
#include "citrus/run_config.hpp"

namespace citrus {

/// One score vector per layer, one entry per cache slot.
using ImportanceScores = std::vector<ScoreVector>;

/// Per-layer retention sets.
using LayerRetention = std::vector<RetentionSet>;

// All scorers read the first cache_len columns of each query row. By default
// each row is renormalized over those columns, which equals a softmax over the
// cache keys alone; raw_rows keeps the full-row probabilities instead. Heads
// are averaged.

/// Mean over all query rows of the cache-restricted attention.
ScoreVector imp_chunk_avg(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len,
                          bool raw_rows = false);

/// Attention of the final query row only.
ScoreVector imp_last_token(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len,
                           bool raw_rows = false);

/// Adds the per-row sum of cache-restricted attention to the layer's
/// accumulators and returns the updated accumulators.
ScoreVector imp_accumulative(LayeredKVCache& cache, const AttentionTrace& trace, std::size_t layer,
                             bool raw_rows = false);

struct RocoScores {
    ScoreVector mean;
    ScoreVector stddev;  // population stddev across query rows, diagnostic only
};

RocoScores imp_roco(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len, bool raw_rows = false);

/// Keeps slots whose origin is among the first sink_size stream tokens plus
/// the last `window` slots of each layer. Attention is ignored.
LayerRetention retention_streaming(std::span<const std::vector<Origin>> origins, std::size_t sink_size,
                                   std::size_t window);

/// Slots of each layer whose origin lies in [0, sink_size).
LayerRetention pinned_sink_slots(std::span<const std::vector<Origin>> origins, std::size_t sink_size);

/// Per layer: every pinned slot, then the best remaining scores by
/// stable_top_k until k slots are chosen. ConfigError if k < pinned count.
LayerRetention select_retained(const ImportanceScores& scores, std::size_t k, const LayerRetention& pinned);

/// Scores `cache` with the configured policy from a trace whose first
/// cache_len columns are the cache slots. Updates H2O accumulators.
ImportanceScores policy_scores(PolicyKind policy, LayeredKVCache& cache, const AttentionTrace& trace,
                               bool raw_rows);

/// Retention for one eviction step: identity while every layer fits in k,
/// otherwise the policy's selection (sink + window for streaming, pinned
/// top-k for the score-based policies).
LayerRetention policy_retention(PolicyKind policy, const RunConfig& config, const LayeredKVCache& cache,
                                const ImportanceScores& scores);

} // namespace citrus
