// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/run_config.hpp"

#include <string>

#include "citrus/error.hpp"

namespace citrus {

std::string_view to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::Cse: return "cse";
    case PolicyKind::Tova: return "tova";
    case PolicyKind::H2o: return "h2o";
    case PolicyKind::Roco: return "roco";
    case PolicyKind::Streaming: return "streaming";
    }
    return "unknown";
}

std::string_view to_string(CacheLayout layout) {
    switch (layout) {
    case CacheLayout::Standard: return "standard";
    case CacheLayout::Individual: return "individual";
    case CacheLayout::Shared: return "shared";
    }
    return "unknown";
}

PolicyKind parse_policy(std::string_view name) {
    if (name == "cse") return PolicyKind::Cse;
    if (name == "tova") return PolicyKind::Tova;
    if (name == "h2o") return PolicyKind::H2o;
    if (name == "roco") return PolicyKind::Roco;
    if (name == "streaming") return PolicyKind::Streaming;
    raise(ErrorKind::Config, "unknown policy '" + std::string(name) + "'");
}

CacheLayout parse_layout(std::string_view name) {
    if (name == "standard") return CacheLayout::Standard;
    if (name == "individual") return CacheLayout::Individual;
    if (name == "shared") return CacheLayout::Shared;
    raise(ErrorKind::Config, "unknown layout '" + std::string(name) + "'");
}

void RunConfig::validate() const {
    if (chunk_len < 1) raise(ErrorKind::Config, "l_s must be >= 1");
    if (budget < 1) raise(ErrorKind::Config, "k must be >= 1");
    if (sink_size > budget) {
        raise(ErrorKind::Config, "sink_size " + std::to_string(sink_size) + " exceeds k " + std::to_string(budget));
    }
    if (policy == PolicyKind::Streaming && sink_size + streaming_window() > budget) {
        raise(ErrorKind::Config, "streaming sink_size + window exceeds k");
    }
}

} // namespace citrus
