// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citrus/kvcache.hpp"
#include "citrus/model.hpp"
#include "citrus/policies.hpp"
#include "citrus/run_config.hpp"

namespace citrus {

struct Chunk {
    std::vector<Token> tokens;
    std::vector<Origin> origins;
};

/// Splits a document into l_s-token chunks (the last one may be shorter).
/// EmptyDocument on empty input, ConfigError when l_s == 0.
std::vector<Chunk> chunk_document(std::span<const Token> doc, std::size_t chunk_len);

struct CacheOrigins {
    std::string name;
    std::vector<std::vector<Origin>> layers;
};

/// Cache contents after one pipeline step ("chunk" or "finalize").
struct RetentionStep {
    std::size_t step = 0;
    std::string phase;
    std::vector<CacheOrigins> caches;
};

struct StepScores {
    std::size_t step = 0;
    std::string cache;
    ImportanceScores scores;
    std::vector<ScoreVector> stddev;  // roco only
};

struct EncodeResult {
    /// Cache handed to generation: C for standard/shared, C^I for individual.
    LayeredKVCache cache;
    /// Individual layout only: C after the last chunk.
    std::optional<LayeredKVCache> context_cache;
    std::vector<RetentionStep> retention_log;
    std::vector<BudgetReport> budget_reports;
    std::vector<StepScores> scores;
    std::size_t tokens_seen = 0;
    std::size_t chunks = 0;
    std::size_t instruction_passes = 0;
    bool finalized = false;
};

using ChunkObserver = std::function<void(const Chunk&, const StepOutput&)>;

struct EncodeOptions {
    /// Called after every chunk forward, before its states are appended.
    ChunkObserver on_chunk;
    /// Run the final instruction-driven eviction. Needs a non-empty instruction.
    bool finalize = true;
};

/// Chunked encode/evict loop for every layout. Per chunk:
///   standard   forward on C, evict C by the policy's chunk scores, append;
///   individual forward on C, evict C by chunk scores and C^I by instruction
///              scores, append the chunk states to both;
///   shared     evict C by instruction scores, forward on C, append.
/// Finalisation evicts the generation cache once more with the instruction
/// as the query.
EncodeResult encode_document(const ModelWeights& weights,
                             std::span<const Token> doc,
                             std::span<const Token> instruction,
                             const RunConfig& config,
                             const EncodeOptions& options = {});

/// Scoring-only pass: the instruction attends to the cache and its own causal
/// prefix at positions right after the cache. Nothing is appended.
AttentionTrace instruction_trace(const ModelWeights& weights, const LayeredKVCache& cache,
                                 std::span<const Token> instruction);

/// Chunk-averaged scores of the instruction over the cache. EmptyCache on an
/// empty cache.
ImportanceScores instruction_scores(const ModelWeights& weights, const LayeredKVCache& cache,
                                    std::span<const Token> instruction, bool raw_rows = false);

struct Generation {
    std::vector<Token> tokens;
    /// Instruction rows followed by one row per generated token that was fed back.
    Matrix logits;
};

/// Appends the instruction to the cache, then decodes greedily (lowest id on
/// ties) until max_new tokens or eos. The cache grows; nothing is evicted.
Generation generate(const ModelWeights& weights,
                    LayeredKVCache& cache,
                    std::span<const Token> instruction,
                    std::size_t max_new,
                    Origin first_origin,
                    std::optional<Token> eos = kEosToken);

struct FullRun {
    Matrix logits;  // one row per input token, then one per fed-back generated token
    std::vector<Token> generated;
    LayeredKVCache cache;
};

/// Un-evicted reference: one causal pass over `tokens` at positions 0..n-1,
/// then greedy decoding. LengthError when the input exceeds max_positions.
FullRun full_attention_run(const ModelWeights& weights,
                           std::span<const Token> tokens,
                           std::size_t max_new,
                           std::optional<Token> eos = kEosToken);

/// Lowest index among the maximal entries.
Token greedy_argmax(std::span<const float> logits);

} // namespace citrus
