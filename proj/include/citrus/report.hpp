// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "citrus/driver.hpp"
#include "citrus/harness.hpp"
#include "citrus/model.hpp"
#include "citrus/run_config.hpp"

namespace citrus {

// JSON views of configs and results. Reports never contain wall-clock data;
// callers that want timing add it under a separate top-level "timing" key.

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const BudgetReport& report);
nlohmann::json to_json(const EncodeResult& result, bool include_payload = false);
nlohmann::json to_json(const ProbeReport& report);
nlohmann::json to_json(const PerplexityResult& result);
nlohmann::json to_json(const PasskeyCell& cell);
nlohmann::json to_json(const PasskeySweep& sweep);

} // namespace citrus
