// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "citrus/error.hpp"

namespace citrus {

namespace {

const LayerTrace& checked_layer(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len) {
    if (cache_len == 0) {
        raise(ErrorKind::EmptyCache, "cannot score an empty cache");
    }
    if (layer >= trace.layers.size()) {
        raise(ErrorKind::Index, "trace has no layer " + std::to_string(layer));
    }
    const auto& lt = trace.layers[layer];
    if (lt.n_cache < cache_len) {
        raise(ErrorKind::Shape, "trace exposes " + std::to_string(lt.n_cache) + " cache columns, need " +
                                    std::to_string(cache_len));
    }
    if (lt.probs.empty() && lt.n_queries > 0) {
        raise(ErrorKind::Shape, "trace was not recorded");
    }
    return lt;
}

// Head-averaged, cache-restricted attention of one query row, in double.
void restricted_row(const LayerTrace& lt, std::size_t query, std::size_t cache_len, bool raw_rows,
                    std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double inv_heads = 1.0 / static_cast<double>(lt.n_heads);
    for (std::size_t h = 0; h < lt.n_heads; ++h) {
        const auto row = lt.row(h, query);
        double norm = 1.0;
        if (!raw_rows) {
            double mass = 0.0;
            for (std::size_t c = 0; c < cache_len; ++c) mass += row[c];
            // A row with no cache mass at float precision contributes nothing.
            if (mass <= 0.0) continue;
            norm = mass;
        }
        for (std::size_t c = 0; c < cache_len; ++c) {
            out[c] += static_cast<double>(row[c]) / norm * inv_heads;
        }
    }
}

ScoreVector to_scores(const std::vector<double>& values) {
    return ScoreVector(values.begin(), values.end());
}

} // namespace

ScoreVector imp_chunk_avg(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len, bool raw_rows) {
    const auto& lt = checked_layer(trace, layer, cache_len);
    if (lt.n_queries == 0) {
        raise(ErrorKind::Shape, "scoring needs at least one query row");
    }
    std::vector<double> sum(cache_len, 0.0), row(cache_len);
    for (std::size_t q = 0; q < lt.n_queries; ++q) {
        restricted_row(lt, q, cache_len, raw_rows, row);
        for (std::size_t c = 0; c < cache_len; ++c) sum[c] += row[c];
    }
    for (double& v : sum) v /= static_cast<double>(lt.n_queries);
    return to_scores(sum);
}

ScoreVector imp_last_token(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len, bool raw_rows) {
    const auto& lt = checked_layer(trace, layer, cache_len);
    if (lt.n_queries == 0) {
        raise(ErrorKind::Shape, "scoring needs at least one query row");
    }
    std::vector<double> row(cache_len);
    restricted_row(lt, lt.n_queries - 1, cache_len, raw_rows, row);
    return to_scores(row);
}

ScoreVector imp_accumulative(LayeredKVCache& cache, const AttentionTrace& trace, std::size_t layer, bool raw_rows) {
    auto acc = cache.accumulated(layer);
    const std::size_t cache_len = acc.size();
    if (cache_len == 0) {
        return {};
    }
    const auto& lt = checked_layer(trace, layer, cache_len);
    std::vector<double> sum(cache_len, 0.0), row(cache_len);
    for (std::size_t q = 0; q < lt.n_queries; ++q) {
        restricted_row(lt, q, cache_len, raw_rows, row);
        for (std::size_t c = 0; c < cache_len; ++c) sum[c] += row[c];
    }
    for (std::size_t c = 0; c < cache_len; ++c) {
        acc[c] = static_cast<float>(static_cast<double>(acc[c]) + sum[c]);
    }
    return ScoreVector(acc.begin(), acc.end());
}

RocoScores imp_roco(const AttentionTrace& trace, std::size_t layer, std::size_t cache_len, bool raw_rows) {
    const auto& lt = checked_layer(trace, layer, cache_len);
    if (lt.n_queries == 0) {
        raise(ErrorKind::Shape, "scoring needs at least one query row");
    }
    std::vector<double> sum(cache_len, 0.0), sum_sq(cache_len, 0.0), row(cache_len);
    for (std::size_t q = 0; q < lt.n_queries; ++q) {
        restricted_row(lt, q, cache_len, raw_rows, row);
        for (std::size_t c = 0; c < cache_len; ++c) {
            sum[c] += row[c];
            sum_sq[c] += row[c] * row[c];
        }
    }
    const double n = static_cast<double>(lt.n_queries);
    RocoScores out;
    out.mean.resize(cache_len);
    out.stddev.resize(cache_len);
    for (std::size_t c = 0; c < cache_len; ++c) {
        const double mean = sum[c] / n;
        const double var = std::max(0.0, sum_sq[c] / n - mean * mean);
        out.mean[c] = static_cast<float>(mean);
        out.stddev[c] = static_cast<float>(std::sqrt(var));
    }
    return out;
}

LayerRetention pinned_sink_slots(std::span<const std::vector<Origin>> origins, std::size_t sink_size) {
    LayerRetention pinned(origins.size());
    for (std::size_t l = 0; l < origins.size(); ++l) {
        for (std::size_t i = 0; i < origins[l].size(); ++i) {
            if (origins[l][i] >= 0 && static_cast<std::size_t>(origins[l][i]) < sink_size) {
                pinned[l].push_back(i);
            }
        }
    }
    return pinned;
}

LayerRetention retention_streaming(std::span<const std::vector<Origin>> origins, std::size_t sink_size,
                                   std::size_t window) {
    LayerRetention out = pinned_sink_slots(origins, sink_size);
    for (std::size_t l = 0; l < origins.size(); ++l) {
        const std::size_t n = origins[l].size();
        const std::size_t first_recent = n > window ? n - window : 0;
        auto& keep = out[l];
        for (std::size_t i = first_recent; i < n; ++i) {
            if (keep.empty() || keep.back() < i) keep.push_back(i);
        }
    }
    return out;
}

LayerRetention select_retained(const ImportanceScores& scores, std::size_t k, const LayerRetention& pinned) {
    LayerRetention out(scores.size());
    for (std::size_t l = 0; l < scores.size(); ++l) {
        const auto& layer_scores = scores[l];
        const RetentionSet empty;
        const RetentionSet& pins = l < pinned.size() ? pinned[l] : empty;
        if (pins.size() > k) {
            raise(ErrorKind::Config, "k=" + std::to_string(k) + " is smaller than the " +
                                         std::to_string(pins.size()) + " pinned slots of layer " + std::to_string(l));
        }
        if (pins.empty()) {
            out[l] = stable_top_k(layer_scores, k);
            continue;
        }
        std::vector<bool> is_pinned(layer_scores.size(), false);
        for (std::size_t p : pins) {
            if (p >= layer_scores.size()) {
                raise(ErrorKind::Index, "pinned slot out of range");
            }
            is_pinned[p] = true;
        }
        std::vector<std::size_t> free_slots;
        ScoreVector free_scores;
        for (std::size_t i = 0; i < layer_scores.size(); ++i) {
            if (!is_pinned[i]) {
                free_slots.push_back(i);
                free_scores.push_back(layer_scores[i]);
            }
        }
        RetentionSet keep = pins;
        for (std::size_t j : stable_top_k(free_scores, k - pins.size())) {
            keep.push_back(free_slots[j]);
        }
        std::sort(keep.begin(), keep.end());
        keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
        out[l] = std::move(keep);
    }
    return out;
}

ImportanceScores policy_scores(PolicyKind policy, LayeredKVCache& cache, const AttentionTrace& trace,
                               bool raw_rows) {
    ImportanceScores scores(cache.n_layers());
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        const std::size_t cache_len = cache.slots(l);
        if (cache_len == 0) continue;
        switch (policy) {
        case PolicyKind::Cse: scores[l] = imp_chunk_avg(trace, l, cache_len, raw_rows); break;
        case PolicyKind::Tova: scores[l] = imp_last_token(trace, l, cache_len, raw_rows); break;
        case PolicyKind::H2o: scores[l] = imp_accumulative(cache, trace, l, raw_rows); break;
        case PolicyKind::Roco: scores[l] = imp_roco(trace, l, cache_len, raw_rows).mean; break;
        case PolicyKind::Streaming: scores[l].assign(cache_len, 0.0f); break;
        }
    }
    return scores;
}

LayerRetention policy_retention(PolicyKind policy, const RunConfig& config, const LayeredKVCache& cache,
                                const ImportanceScores& scores) {
    const auto& origins = cache.all_origins();
    LayerRetention keep(cache.n_layers());
    bool over_budget = false;
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        if (cache.slots(l) > config.budget) over_budget = true;
    }
    if (!over_budget) {
        for (std::size_t l = 0; l < cache.n_layers(); ++l) {
            keep[l].resize(cache.slots(l));
            std::iota(keep[l].begin(), keep[l].end(), std::size_t{0});
        }
        return keep;
    }
    if (policy == PolicyKind::Streaming) {
        return retention_streaming(origins, config.sink_size, config.streaming_window());
    }
    return select_retained(scores, config.budget, pinned_sink_slots(origins, config.sink_size));
}

} // namespace citrus
