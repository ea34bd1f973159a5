// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "citrus/model.hpp"

namespace citrus {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

// Container layout, all little-endian:
//   "CTRS" | u32 version | u32 backend | u32 n_layers | u32 n_heads |
//   u32 d_model | u32 d_head | u32 vocab_size | u32 max_positions | u64 seed
// followed by f32 row-major tensors.
//   tiny-transformer: embedding[vocab x d_model], then per layer
//     attn_norm[d_model], wq, wk, wv, wo [d_model x d_model],
//     ffn_norm[d_model], w1[d_model x 4 d_model], w2[4 d_model x d_model];
//     then final_norm[d_model], unembedding[d_model x vocab].
//   affinity-mock: affinity[vocab x vocab] (query row, key column).
void write_weights(std::ostream& out, const ModelWeights& weights);
ModelWeights read_weights(std::istream& in);

void save_weights(const std::filesystem::path& path, const ModelWeights& weights);
ModelWeights load_weights(const std::filesystem::path& path);

} // namespace citrus
