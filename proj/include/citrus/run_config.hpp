// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace citrus {

enum class PolicyKind {
    Cse,        // chunk-averaged attention ("cse")
    Tova,       // last-token attention ("tova")
    H2o,        // accumulated attention ("h2o")
    Roco,       // chunk-averaged mean, stddev diagnostic ("roco")
    Streaming,  // sink + sliding window ("streaming")
};

enum class CacheLayout {
    Standard,    // one cache evicted by the chunk
    Individual,  // context cache C plus instruction cache C^I
    Shared,      // one cache evicted by the instruction
};

std::string_view to_string(PolicyKind kind);
std::string_view to_string(CacheLayout layout);
PolicyKind parse_policy(std::string_view name);
CacheLayout parse_layout(std::string_view name);

inline constexpr std::size_t kDefaultChunkLen = 256;
inline constexpr std::size_t kDefaultBudget = 768;

struct RunConfig {
    std::size_t chunk_len = kDefaultChunkLen;  // l_s
    std::size_t budget = kDefaultBudget;       // k, slots kept per layer
    PolicyKind policy = PolicyKind::Cse;
    CacheLayout layout = CacheLayout::Standard;
    std::size_t sink_size = 0;
    std::optional<std::size_t> window;  // streaming only; defaults to budget - sink_size
    std::size_t max_new_tokens = 16;
    std::uint64_t seed = 0;
    bool raw_row_scores = false;
    bool keep_retention_log = true;
    bool keep_scores = false;

    /// Throws ConfigError on l_s == 0, k == 0, sink_size > k, or a streaming
    /// window that does not fit the budget.
    void validate() const;

    std::size_t streaming_window() const { return window.value_or(budget - sink_size); }

    bool instruction_aware() const { return layout != CacheLayout::Standard; }
};

} // namespace citrus
