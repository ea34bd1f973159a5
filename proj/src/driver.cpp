// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/driver.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "citrus/error.hpp"

namespace citrus {

namespace {

constexpr std::string_view kMainCache = "cache";
constexpr std::string_view kContextCache = "context";
constexpr std::string_view kInstructionCache = "instruction";

void append_rows(Matrix& dst, const Matrix& src) {
    if (dst.rows == 0) {
        dst = src;
        return;
    }
    dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
    dst.rows += src.rows;
}

std::vector<Origin> origin_range(Origin first, std::size_t count) {
    std::vector<Origin> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = first + static_cast<Origin>(i);
    return out;
}

StepOutput forward_on(const ModelWeights& weights, const LayeredKVCache& cache, std::span<const Token> tokens,
                      TraceMode mode) {
    return forward_chunk(weights, cache.kv(), tokens, assign_positions(cache.uniform_slots(), tokens.size()), mode);
}

void label_columns(AttentionTrace& trace, const LayeredKVCache& cache, std::span<const Origin> chunk_origins) {
    trace.column_origins.resize(cache.n_layers());
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        auto& labels = trace.column_origins[l];
        labels = cache.origins(l);
        labels.insert(labels.end(), chunk_origins.begin(), chunk_origins.end());
    }
}

bool over_budget(const LayeredKVCache& cache, std::size_t budget) {
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        if (cache.slots(l) > budget) return true;
    }
    return false;
}

// Greedy continuation from `last` (the logits row predicting the first new
// token). Appends fed-back rows to `logits`.
std::vector<Token> decode_greedy(const ModelWeights& weights, LayeredKVCache& cache, std::vector<float> last,
                                 std::size_t max_new, Origin next_origin, std::optional<Token> eos,
                                 Matrix& logits) {
    std::vector<Token> out;
    for (std::size_t t = 0; t < max_new; ++t) {
        const Token token = greedy_argmax(last);
        out.push_back(token);
        if ((eos && token == *eos) || t + 1 == max_new) {
            break;
        }
        const std::array<Token, 1> step{token};
        StepOutput fed = forward_on(weights, cache, step, TraceMode::None);
        const std::array<Origin, 1> origin{next_origin++};
        cache.append(fed.new_kv, origin);
        append_rows(logits, fed.logits);
        auto row = fed.logits.row(0);
        last.assign(row.begin(), row.end());
    }
    return out;
}

class Encoder {
public:
    Encoder(const ModelWeights& weights, std::span<const Token> instruction, const RunConfig& config)
        : m_weights(weights),
          m_instruction(instruction),
          m_config(config),
          m_main(LayeredKVCache::for_model(weights.config())) {
        if (config.layout == CacheLayout::Individual) {
            m_instr_cache = LayeredKVCache::for_model(weights.config());
        }
    }

    void run(std::span<const Token> doc, const EncodeOptions& options) {
        const auto chunks = chunk_document(doc, m_config.chunk_len);
        for (const auto& chunk : chunks) {
            ++m_step;
            StepOutput out;
            if (m_config.layout == CacheLayout::Shared) {
                evict_by_instruction(m_main, kMainCache);
                check(BudgetPhase::PostEvict);
                out = forward_on(m_weights, m_main, chunk.tokens, TraceMode::Full);
                label_columns(out.trace, m_main, chunk.origins);
            } else {
                out = forward_on(m_weights, m_main, chunk.tokens, TraceMode::Full);
                label_columns(out.trace, m_main, chunk.origins);
                evict_by_policy(out.trace);
                if (m_instr_cache) {
                    evict_by_instruction(*m_instr_cache, kInstructionCache);
                }
                check(BudgetPhase::PostEvict);
            }
            if (options.on_chunk) {
                options.on_chunk(chunk, out);
            }
            m_main.append(out.new_kv, chunk.origins);
            if (m_instr_cache) {
                m_instr_cache->append(out.new_kv, chunk.origins);
            }
            m_result.tokens_seen += chunk.tokens.size();
            check(BudgetPhase::PostAppend);
            log_step("chunk");
        }
        m_result.chunks = chunks.size();
        if (options.finalize) {
            finalize();
        }
    }

    EncodeResult take() {
        if (m_instr_cache) {
            m_result.cache = std::move(*m_instr_cache);
            m_result.context_cache = std::move(m_main);
        } else {
            m_result.cache = std::move(m_main);
        }
        return std::move(m_result);
    }

private:
    std::string_view main_name() const {
        return m_config.layout == CacheLayout::Individual ? kContextCache : kMainCache;
    }

    void evict_by_policy(const AttentionTrace& trace) {
        if (m_main.empty()) return;
        ImportanceScores scores = policy_scores(m_config.policy, m_main, trace, m_config.raw_row_scores);
        record_scores(main_name(), scores, trace, m_main);
        m_main.retain(policy_retention(m_config.policy, m_config, m_main, scores));
    }

    void evict_by_instruction(LayeredKVCache& cache, std::string_view name) {
        if (!over_budget(cache, m_config.budget)) return;
        ImportanceScores scores = instruction_scores(m_weights, cache, m_instruction, m_config.raw_row_scores);
        ++m_result.instruction_passes;
        if (m_config.keep_scores) {
            m_result.scores.push_back({m_step, std::string(name), scores, {}});
        }
        cache.retain(policy_retention(PolicyKind::Cse, m_config, cache, scores));
    }

    void record_scores(std::string_view name, const ImportanceScores& scores, const AttentionTrace& trace,
                       const LayeredKVCache& cache) {
        if (!m_config.keep_scores) return;
        StepScores entry{m_step, std::string(name), scores, {}};
        if (m_config.policy == PolicyKind::Roco) {
            for (std::size_t l = 0; l < cache.n_layers(); ++l) {
                entry.stddev.push_back(imp_roco(trace, l, cache.slots(l), m_config.raw_row_scores).stddev);
            }
        }
        m_result.scores.push_back(std::move(entry));
    }

    void finalize() {
        if (m_instruction.empty()) {
            raise(ErrorKind::Config, "final eviction needs a non-empty instruction");
        }
        ++m_step;
        if (m_config.layout == CacheLayout::Standard) {
            if (!m_main.empty()) {
                const AttentionTrace trace = instruction_trace(m_weights, m_main, m_instruction);
                ++m_result.instruction_passes;
                ImportanceScores scores = policy_scores(m_config.policy, m_main, trace, m_config.raw_row_scores);
                record_scores(kMainCache, scores, trace, m_main);
                m_main.retain(policy_retention(m_config.policy, m_config, m_main, scores));
            }
        } else {
            LayeredKVCache& target = m_instr_cache ? *m_instr_cache : m_main;
            evict_by_instruction(target, m_instr_cache ? kInstructionCache : kMainCache);
        }
        const LayeredKVCache& target = m_instr_cache ? *m_instr_cache : m_main;
        const std::array<NamedCache, 1> caches{
            NamedCache{m_instr_cache ? kInstructionCache : kMainCache, &target}};
        auto report = budget_check(m_config.layout, BudgetPhase::PostFinalize, caches, m_config, m_result.tokens_seen);
        report.step = m_step;
        m_result.budget_reports.push_back(std::move(report));
        m_result.finalized = true;
        log_step("finalize");
    }

    void check(BudgetPhase phase) {
        std::vector<NamedCache> caches{{main_name(), &m_main}};
        if (m_instr_cache) {
            caches.push_back({kInstructionCache, &*m_instr_cache});
        }
        auto report = budget_check(m_config.layout, phase, caches, m_config, m_result.tokens_seen);
        report.step = m_step;
        m_result.budget_reports.push_back(std::move(report));
    }

    void log_step(std::string phase) {
        if (!m_config.keep_retention_log) return;
        RetentionStep entry{m_step, std::move(phase), {}};
        const bool final_individual = entry.phase == "finalize" && m_instr_cache;
        if (!final_individual) {
            entry.caches.push_back({std::string(main_name()), m_main.all_origins()});
        }
        if (m_instr_cache) {
            entry.caches.push_back({std::string(kInstructionCache), m_instr_cache->all_origins()});
        }
        m_result.retention_log.push_back(std::move(entry));
    }

    const ModelWeights& m_weights;
    std::span<const Token> m_instruction;
    const RunConfig& m_config;
    LayeredKVCache m_main;
    std::optional<LayeredKVCache> m_instr_cache;
    EncodeResult m_result;
    std::size_t m_step = 0;
};

} // namespace

Token greedy_argmax(std::span<const float> logits) {
    if (logits.empty()) {
        raise(ErrorKind::EmptyVector, "argmax of empty logits");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<Token>(best);
}

std::vector<Chunk> chunk_document(std::span<const Token> doc, std::size_t chunk_len) {
    if (chunk_len == 0) {
        raise(ErrorKind::Config, "l_s must be >= 1");
    }
    if (doc.empty()) {
        raise(ErrorKind::EmptyDocument, "document is empty");
    }
    std::vector<Chunk> chunks;
    chunks.reserve((doc.size() + chunk_len - 1) / chunk_len);
    for (std::size_t begin = 0; begin < doc.size(); begin += chunk_len) {
        const std::size_t len = std::min(chunk_len, doc.size() - begin);
        Chunk c;
        c.tokens.assign(doc.begin() + static_cast<std::ptrdiff_t>(begin),
                        doc.begin() + static_cast<std::ptrdiff_t>(begin + len));
        c.origins = origin_range(static_cast<Origin>(begin), len);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

EncodeResult encode_document(const ModelWeights& weights,
                             std::span<const Token> doc,
                             std::span<const Token> instruction,
                             const RunConfig& config,
                             const EncodeOptions& options) {
    config.validate();
    if (config.instruction_aware() && instruction.empty()) {
        raise(ErrorKind::Config, std::string(to_string(config.layout)) + " layout needs a non-empty instruction");
    }
    Encoder encoder(weights, instruction, config);
    encoder.run(doc, options);
    return encoder.take();
}

AttentionTrace instruction_trace(const ModelWeights& weights, const LayeredKVCache& cache,
                                 std::span<const Token> instruction) {
    if (cache.empty()) {
        raise(ErrorKind::EmptyCache, "instruction scoring needs a non-empty cache");
    }
    if (instruction.empty()) {
        raise(ErrorKind::Config, "instruction scoring needs a non-empty instruction");
    }
    return forward_on(weights, cache, instruction, TraceMode::Full).trace;
}

ImportanceScores instruction_scores(const ModelWeights& weights, const LayeredKVCache& cache,
                                    std::span<const Token> instruction, bool raw_rows) {
    const AttentionTrace trace = instruction_trace(weights, cache, instruction);
    ImportanceScores scores(cache.n_layers());
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        scores[l] = imp_chunk_avg(trace, l, cache.slots(l), raw_rows);
    }
    return scores;
}

Generation generate(const ModelWeights& weights,
                    LayeredKVCache& cache,
                    std::span<const Token> instruction,
                    std::size_t max_new,
                    Origin first_origin,
                    std::optional<Token> eos) {
    Generation g;
    if (instruction.empty()) {
        if (max_new > 0) {
            raise(ErrorKind::Config, "generation needs a non-empty instruction");
        }
        return g;
    }
    StepOutput out = forward_on(weights, cache, instruction, TraceMode::None);
    cache.append(out.new_kv, origin_range(first_origin, instruction.size()));
    auto last = out.logits.row(out.logits.rows - 1);
    std::vector<float> last_row(last.begin(), last.end());
    g.logits = std::move(out.logits);
    g.tokens = decode_greedy(weights, cache, std::move(last_row), max_new,
                             first_origin + static_cast<Origin>(instruction.size()), eos, g.logits);
    return g;
}

FullRun full_attention_run(const ModelWeights& weights,
                           std::span<const Token> tokens,
                           std::size_t max_new,
                           std::optional<Token> eos) {
    if (tokens.empty()) {
        raise(ErrorKind::EmptyDocument, "full attention run needs at least one token");
    }
    if (tokens.size() > weights.config().max_positions) {
        raise(ErrorKind::Length, "input of " + std::to_string(tokens.size()) + " tokens exceeds max_positions " +
                                     std::to_string(weights.config().max_positions));
    }
    FullRun run;
    run.cache = LayeredKVCache::for_model(weights.config());
    StepOutput out = forward_on(weights, run.cache, tokens, TraceMode::None);
    run.cache.append(out.new_kv, origin_range(0, tokens.size()));
    auto last = out.logits.row(out.logits.rows - 1);
    std::vector<float> last_row(last.begin(), last.end());
    run.logits = std::move(out.logits);
    run.generated = decode_greedy(weights, run.cache, std::move(last_row), max_new,
                                  static_cast<Origin>(tokens.size()), eos, run.logits);
    return run;
}

} // namespace citrus
