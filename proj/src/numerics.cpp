// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "citrus/error.hpp"

namespace citrus {

void softmax_inplace(std::span<float> values) {
    if (values.empty()) {
        raise(ErrorKind::EmptyVector, "softmax of an empty vector");
    }
    float max_value = values[0];
    for (float v : values) {
        if (!std::isfinite(v)) {
            raise(ErrorKind::Numerical, "softmax input is not finite");
        }
        max_value = std::max(max_value, v);
    }
    float sum = 0.0f;
    for (float& v : values) {
        v = std::exp(v - max_value);
        sum += v;
    }
    const float inv = 1.0f / sum;
    for (float& v : values) {
        v *= inv;
    }
}

ScoreVector softmax(std::span<const float> logits) {
    ScoreVector out(logits.begin(), logits.end());
    softmax_inplace(out);
    return out;
}

RetentionSet stable_top_k(std::span<const float> scores, std::size_t k) {
    const std::size_t n = scores.size();
    RetentionSet idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k >= n) {
        return idx;
    }
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace citrus
