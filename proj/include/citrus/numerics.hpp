// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace citrus {

/// Importance scores or probabilities, one entry per cache slot / key.
using ScoreVector = std::vector<float>;

/// Ascending, duplicate-free slot indices to keep.
using RetentionSet = std::vector<std::size_t>;

/// Max-subtracted softmax. Throws EmptyVector on empty input and Numerical on
/// non-finite logits.
ScoreVector softmax(std::span<const float> logits);

/// In-place variant used on hot paths; same arithmetic as softmax().
void softmax_inplace(std::span<float> values);

/// Indices of the min(k, n) largest scores, ties broken toward the lower
/// index, returned in ascending index order. Exact float comparison.
RetentionSet stable_top_k(std::span<const float> scores, std::size_t k);

} // namespace citrus
