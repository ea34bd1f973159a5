// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace citrus {

using Token = std::uint32_t;

/// Absolute position in the source stream that a cache slot was created from.
using Origin = std::int64_t;

inline constexpr Token kBosToken = 256;
inline constexpr Token kEosToken = 257;
inline constexpr std::size_t kByteVocabSize = 258;

enum class Backend : std::uint32_t {
    TinyTransformer = 0,
    AffinityMock = 1,
};

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view name);

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t d_model = 16;
    std::size_t d_head = 8;
    std::size_t vocab_size = kByteVocabSize;
    std::size_t max_positions = 4096;
    Backend backend = Backend::TinyTransformer;
    std::uint64_t seed = 0;

    /// Throws ConfigError when the dimensions are inconsistent.
    void validate() const;

    std::size_t d_ff() const { return 4 * d_model; }

    /// Width of one per-head key/value vector held in the cache. The affinity
    /// mock stores the token id as a single scalar, read back as a one-hot
    /// embedding.
    std::size_t kv_dim() const { return backend == Backend::AffinityMock ? 1 : d_head; }

    bool operator==(const ModelConfig&) const = default;
};

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

/// Key/value slabs of one layer: per head, row-major [slots x dim]. Keys are
/// stored before the rotary transform so positions can be reassigned freely.
struct LayerKv {
    std::size_t dim = 0;
    std::vector<std::vector<float>> keys;
    std::vector<std::vector<float>> values;

    LayerKv() = default;
    LayerKv(std::size_t n_heads, std::size_t head_dim)
        : dim(head_dim), keys(n_heads), values(n_heads) {}

    std::size_t n_heads() const { return keys.size(); }
    std::size_t slots() const { return keys.empty() || dim == 0 ? 0 : keys[0].size() / dim; }

    bool operator==(const LayerKv&) const = default;
};

/// Attention probabilities of one layer: [head][query][column], where the
/// columns are the n_cache cache slots followed by the n_queries chunk keys.
/// Masked (future) chunk columns hold exactly 0.
struct LayerTrace {
    std::size_t n_heads = 0;
    std::size_t n_queries = 0;
    std::size_t n_cache = 0;
    std::vector<float> probs;

    std::size_t n_cols() const { return n_cache + n_queries; }
    std::span<const float> row(std::size_t head, std::size_t query) const {
        return {probs.data() + (head * n_queries + query) * n_cols(), n_cols()};
    }
    std::span<float> row(std::size_t head, std::size_t query) {
        return {probs.data() + (head * n_queries + query) * n_cols(), n_cols()};
    }
};

struct AttentionTrace {
    std::vector<LayerTrace> layers;
    /// Optional per-layer column labels (origins of cache slots, then chunk
    /// tokens). Filled by callers that know the origins.
    std::vector<std::vector<Origin>> column_origins;

    bool empty() const { return layers.empty(); }
};

struct Positions {
    std::vector<std::int32_t> cache;
    std::vector<std::int32_t> chunk;
};

struct StepOutput {
    Matrix logits;                 // [chunk tokens x vocab]
    std::vector<LayerKv> new_kv;   // per layer, chunk tokens only
    AttentionTrace trace;
};

enum class TraceMode { Full, None };

/// Parameters of the tiny transformer (pre-norm, rotary Q/K, GELU MLP).
struct TransformerLayerWeights {
    std::vector<float> attn_norm;  // [d_model]
    Matrix wq, wk, wv, wo;         // [d_model x d_model]
    std::vector<float> ffn_norm;   // [d_model]
    Matrix w1;                     // [d_model x d_ff]
    Matrix w2;                     // [d_ff x d_model]

    bool operator==(const TransformerLayerWeights&) const = default;
};

class ModelWeights {
public:
    explicit ModelWeights(const ModelConfig& config);

    const ModelConfig& config() const { return m_config; }

    // tiny-transformer tensors
    Matrix embedding;  // [vocab x d_model]
    std::vector<TransformerLayerWeights> layers;
    std::vector<float> final_norm;  // [d_model]
    Matrix unembedding;             // [d_model x vocab]

    // affinity-mock table, A[query token][key token]
    Matrix affinity;

    /// Updates one affinity-table entry. BackendError unless affinity-mock,
    /// VocabError for out-of-range tokens.
    void set_affinity(Token query, Token key, float logit);

    /// Rotary cos/sin for (position, pair); built from the config, not stored.
    float rope_cos(std::size_t position, std::size_t pair) const {
        return m_rope_cos[position * (m_config.d_head / 2) + pair];
    }
    float rope_sin(std::size_t position, std::size_t pair) const {
        return m_rope_sin[position * (m_config.d_head / 2) + pair];
    }

    bool operator==(const ModelWeights& other) const;

private:
    ModelConfig m_config;
    std::vector<float> m_rope_cos;
    std::vector<float> m_rope_sin;
};

/// Seeded initialisation: normal(0, 0.02/sqrt(n_layers)) for the tiny
/// transformer, an all-zero affinity table for the mock.
ModelWeights init_model(const ModelConfig& config);

/// One causal forward pass of `chunk` on top of `cache` (one LayerKv per
/// layer). The cache is read only. Attention for chunk token i spans every
/// cache slot plus chunk tokens 0..i.
StepOutput forward_chunk(const ModelWeights& weights,
                         std::span<const LayerKv> cache,
                         std::span<const Token> chunk,
                         const Positions& positions,
                         TraceMode trace_mode = TraceMode::Full);

/// Functional form of ModelWeights::set_affinity.
ModelWeights set_affinity(ModelWeights weights, Token query, Token key, float logit);

} // namespace citrus
