// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's numerics or policies, so a
// bug there cannot hide behind a matching bug in the oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "citrus/model.hpp"

namespace citrus::oracle {

/// Textbook softmax in double precision.
inline std::vector<double> softmax(const std::vector<double>& x) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

/// Raw attention logits of one layer, [head][query][column]. Column j >= n_cache
/// is chunk key j - n_cache; query i sees chunk keys 0..i.
struct RawLayer {
    std::size_t n_heads = 0;
    std::size_t n_queries = 0;
    std::size_t n_cache = 0;
    std::vector<std::vector<std::vector<double>>> logits;
};

inline RawLayer random_raw_layer(std::mt19937_64& rng, std::size_t heads, std::size_t queries, std::size_t cache) {
    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    RawLayer raw{heads, queries, cache, {}};
    raw.logits.assign(heads, std::vector<std::vector<double>>(queries, std::vector<double>(cache + queries)));
    for (auto& head : raw.logits) {
        for (auto& row : head) {
            for (double& v : row) v = dist(rng);
        }
    }
    return raw;
}

/// The attention trace a model would record: causal softmax over cache plus
/// visible chunk columns, masked columns exactly 0.
inline LayerTrace trace_from_raw(const RawLayer& raw) {
    LayerTrace t;
    t.n_heads = raw.n_heads;
    t.n_queries = raw.n_queries;
    t.n_cache = raw.n_cache;
    t.probs.assign(raw.n_heads * raw.n_queries * t.n_cols(), 0.0f);
    for (std::size_t h = 0; h < raw.n_heads; ++h) {
        for (std::size_t q = 0; q < raw.n_queries; ++q) {
            const std::size_t visible = raw.n_cache + q + 1;
            std::vector<double> x(raw.logits[h][q].begin(), raw.logits[h][q].begin() + visible);
            const auto p = softmax(x);
            auto row = t.row(h, q);
            for (std::size_t j = 0; j < visible; ++j) row[j] = static_cast<float>(p[j]);
        }
    }
    return t;
}

/// Importance of every cache slot computed straight from the definition:
/// per query and head, softmax of the logits over cache keys only, then the
/// mean over queries and heads.
inline std::vector<double> brute_force_importance(const RawLayer& raw) {
    std::vector<double> imp(raw.n_cache, 0.0);
    for (std::size_t h = 0; h < raw.n_heads; ++h) {
        for (std::size_t q = 0; q < raw.n_queries; ++q) {
            std::vector<double> cache_logits(raw.logits[h][q].begin(), raw.logits[h][q].begin() + raw.n_cache);
            const auto p = softmax(cache_logits);
            for (std::size_t c = 0; c < raw.n_cache; ++c) imp[c] += p[c];
        }
    }
    for (double& v : imp) v /= static_cast<double>(raw.n_heads * raw.n_queries);
    return imp;
}

/// Top-k by full sort: score descending, index ascending; result ascending.
inline std::vector<std::size_t> sort_top_k(const std::vector<float>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Selection with pinned slots: pins first, then the best unpinned slots.
inline std::vector<std::size_t> sort_select(const std::vector<float>& scores, std::size_t k,
                                            const std::vector<std::size_t>& pinned) {
    if (k >= scores.size()) {
        std::vector<std::size_t> all(scores.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::find(pinned.begin(), pinned.end(), i) == pinned.end()) free.push_back(i);
    }
    std::stable_sort(free.begin(), free.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> out = pinned;
    for (std::size_t i = 0; out.size() < k && i < free.size(); ++i) out.push_back(free[i]);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<Token> random_tokens(std::mt19937_64& rng, std::size_t n, Token vocab = 256) {
    std::uniform_int_distribution<Token> dist(0, vocab - 1);
    std::vector<Token> out(n);
    for (auto& t : out) t = dist(rng);
    return out;
}

} // namespace citrus::oracle
