// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/report.hpp"

#include "citrus/error.hpp"
#include "citrus/kvcache.hpp"

namespace citrus {

using nlohmann::json;

json to_json(const ModelConfig& c) {
    return json{{"backend", to_string(c.backend)}, {"n_layers", c.n_layers},   {"n_heads", c.n_heads},
                {"d_model", c.d_model},            {"d_head", c.d_head},       {"vocab_size", c.vocab_size},
                {"max_positions", c.max_positions}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) {
        raise(ErrorKind::Config, "inline model config must be a JSON object");
    }
    ModelConfig c;
    try {
        if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
        c.n_layers = j.value("n_layers", c.n_layers);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.d_model = j.value("d_model", c.d_model);
        c.d_head = j.value("d_head", c.d_head);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.max_positions = j.value("max_positions", c.max_positions);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        raise(ErrorKind::Config, std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

json to_json(const RunConfig& c) {
    json j{{"l_s", c.chunk_len},
           {"k", c.budget},
           {"policy", to_string(c.policy)},
           {"layout", to_string(c.layout)},
           {"sink_size", c.sink_size},
           {"max_new_tokens", c.max_new_tokens},
           {"seed", c.seed},
           {"raw_row_scores", c.raw_row_scores}};
    if (c.policy == PolicyKind::Streaming) j["window"] = c.streaming_window();
    return j;
}

json to_json(const BudgetReport& r) {
    json caches = json::object();
    for (const auto& c : r.caches) caches[c.name] = c.per_layer;
    return json{{"phase", to_string(r.phase)},
                {"step", r.step},
                {"caches", caches},
                {"limit_per_cache", r.limit_per_cache},
                {"limit_total", r.limit_total},
                {"ok", true}};
}

json to_json(const EncodeResult& r, bool include_payload) {
    json log = json::array();
    for (const auto& step : r.retention_log) {
        json caches = json::object();
        for (const auto& c : step.caches) caches[c.name] = c.layers;
        log.push_back({{"step", step.step}, {"phase", step.phase}, {"caches", caches}});
    }
    json budgets = json::array();
    for (const auto& b : r.budget_reports) budgets.push_back(to_json(b));

    json j{{"tokens_seen", r.tokens_seen},
           {"chunks", r.chunks},
           {"instruction_passes", r.instruction_passes},
           {"finalized", r.finalized},
           {"cache", snapshot_json(r.cache, include_payload)},
           {"retention_log", log},
           {"budget_checks", budgets}};
    if (r.context_cache) j["context_cache"] = snapshot_json(*r.context_cache, include_payload);
    if (!r.scores.empty()) {
        json scores = json::array();
        for (const auto& s : r.scores) {
            json entry{{"step", s.step}, {"cache", s.cache}, {"scores", s.scores}};
            if (!s.stddev.empty()) entry["stddev"] = s.stddev;
            scores.push_back(entry);
        }
        j["scores"] = scores;
    }
    return j;
}

json to_json(const ProbeReport& r) {
    return json{{"ratios", r.ratios},
                {"k", r.k},
                {"context1_len", r.context1_len},
                {"context2_len", r.context2_len},
                {"instruction_len", r.instruction_len}};
}

json to_json(const PerplexityResult& r) {
    return json{{"nll", r.nll}, {"mean_nll", r.mean_nll}, {"perplexity", r.perplexity}};
}

json to_json(const PasskeyCell& c) {
    return json{{"depth", c.depth_fraction},
                {"length", c.total_length},
                {"exact", c.score.exact},
                {"overlap", c.score.overlap},
                {"needle_len", c.needle_len},
                {"needle_retained", c.needle_retained},
                {"generated", c.generated}};
}

json to_json(const PasskeySweep& s) {
    json exact = json::array();
    json cells = json::array();
    for (const auto& row : s.cells) {
        json line = json::array();
        for (const auto& cell : row) {
            line.push_back(cell.score.exact);
            cells.push_back(to_json(cell));
        }
        exact.push_back(line);
    }
    return json{{"depths", s.depths}, {"lengths", s.lengths}, {"exact", exact}, {"cells", cells}};
}

} // namespace citrus
