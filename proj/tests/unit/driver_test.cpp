// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "citrus/driver.hpp"
#include "citrus/error.hpp"
#include "support/oracles.hpp"

namespace citrus {
namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no citrus::Error thrown";
    return ErrorKind::Io;
}

ModelWeights tiny(std::uint64_t seed, std::size_t max_positions = 4096) {
    ModelConfig cfg;
    cfg.seed = seed;
    cfg.max_positions = max_positions;
    return init_model(cfg);
}

ModelWeights mock(std::size_t layers = 2, std::size_t heads = 2) {
    ModelConfig cfg;
    cfg.backend = Backend::AffinityMock;
    cfg.n_layers = layers;
    cfg.n_heads = heads;
    cfg.d_model = heads * 8;
    cfg.max_positions = 65536;
    return init_model(cfg);
}

RunConfig small(std::size_t l_s, std::size_t k, PolicyKind policy = PolicyKind::Cse,
                CacheLayout layout = CacheLayout::Standard) {
    RunConfig cfg;
    cfg.chunk_len = l_s;
    cfg.budget = k;
    cfg.policy = policy;
    cfg.layout = layout;
    return cfg;
}

TEST(ChunkDocument, SplitsWithShortTail) {
    const std::vector<Token> doc(1000, 7);
    const auto chunks = chunk_document(doc, 256);
    ASSERT_EQ(chunks.size(), 4u);
    EXPECT_EQ(chunks[0].tokens.size(), 256u);
    EXPECT_EQ(chunks[3].tokens.size(), 232u);
    EXPECT_EQ(chunks[3].origins.front(), 768);
    EXPECT_EQ(chunks[3].origins.back(), 999);
}

TEST(ChunkDocument, ExactMultiples) {
    EXPECT_EQ(chunk_document(std::vector<Token>(256, 1), 256).size(), 1u);
    EXPECT_EQ(chunk_document(std::vector<Token>(2048, 1), 256).size(), 8u);
}

TEST(ChunkDocument, OriginsContiguousAndExhaustive) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 300;
        const std::size_t ls = 1 + rng() % 40;
        Origin next = 0;
        for (const auto& c : chunk_document(std::vector<Token>(n, 3), ls)) {
            ASSERT_LE(c.tokens.size(), ls);
            for (Origin o : c.origins) ASSERT_EQ(o, next++);
        }
        ASSERT_EQ(next, static_cast<Origin>(n));
    }
}

TEST(ChunkDocument, Errors) {
    EXPECT_EQ(kind_of([] { chunk_document({}, 4); }), ErrorKind::EmptyDocument);
    EXPECT_EQ(kind_of([] { chunk_document(std::vector<Token>{1}, 0); }), ErrorKind::Config);
}

TEST(EncodeDocument, DefaultSizesOnTwoThousandTokens) {
    const auto w = tiny(3);
    std::mt19937_64 rng(4);
    const auto doc = oracle::random_tokens(rng, 2048);
    const std::vector<Token> instr{'?'};
    const auto r = encode_document(w, doc, instr, RunConfig{});
    ASSERT_EQ(r.chunks, 8u);
    ASSERT_EQ(r.retention_log.size(), 9u);
    std::size_t step = 0;
    for (const auto& b : r.budget_reports) {
        if (b.phase != BudgetPhase::PostAppend) continue;
        ++step;
        const std::size_t expected = std::min<std::size_t>(1024, 256 * step);
        for (std::size_t n : b.caches[0].per_layer) ASSERT_EQ(n, expected) << "iteration " << step;
    }
    EXPECT_EQ(step, 8u);
    EXPECT_EQ(r.cache.uniform_slots(), 768u);
    EXPECT_TRUE(r.finalized);
}

TEST(EncodeDocument, ShortDocumentIsNeverEvicted) {
    const auto w = tiny(5);
    std::mt19937_64 rng(5);
    const auto doc = oracle::random_tokens(rng, 100);
    const std::vector<Token> instr{'a', 'b'};
    const auto r = encode_document(w, doc, instr, small(16, 768));
    for (std::size_t l = 0; l < r.cache.n_layers(); ++l) {
        ASSERT_EQ(r.cache.slots(l), 100u);
        EXPECT_EQ(r.cache.origins(l).back(), 99);
    }
    EXPECT_EQ(r.budget_reports.back().phase, BudgetPhase::PostFinalize);
    EXPECT_EQ(r.budget_reports.back().limit_per_cache, 100u);
}

TEST(EncodeDocument, NoEvictionMatchesFullAttention) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const auto w = tiny(100 + trial);
        const auto doc = oracle::random_tokens(rng, 40 + rng() % 100);
        const std::vector<Token> instr{'q', 'u', 'e'};
        std::vector<std::vector<float>> chunk_logits;
        EncodeOptions opts;
        opts.on_chunk = [&](const Chunk& c, const StepOutput& out) {
            for (std::size_t i = 0; i < c.tokens.size(); ++i) {
                auto row = out.logits.row(i);
                chunk_logits.emplace_back(row.begin(), row.end());
            }
        };
        auto r = encode_document(w, doc, instr, small(1 + rng() % 32, 1024), opts);

        std::vector<Token> all = doc;
        all.insert(all.end(), instr.begin(), instr.end());
        const auto full = full_attention_run(w, all, 6);
        // KV slabs of the document tokens
        for (std::size_t l = 0; l < r.cache.n_layers(); ++l) {
            const auto& a = r.cache.kv()[l];
            const auto& b = full.cache.kv()[l];
            for (std::size_t h = 0; h < a.n_heads(); ++h) {
                for (std::size_t i = 0; i < a.keys[h].size(); ++i) {
                    ASSERT_NEAR(a.keys[h][i], b.keys[h][i], 1e-4);
                    ASSERT_NEAR(a.values[h][i], b.values[h][i], 1e-4);
                }
            }
        }
        for (std::size_t t = 0; t < doc.size(); ++t) {
            for (std::size_t v = 0; v < w.config().vocab_size; ++v) {
                ASSERT_NEAR(chunk_logits[t][v], full.logits.at(t, v), 1e-4);
            }
        }
        const auto gen = generate(w, r.cache, instr, 6, static_cast<Origin>(r.tokens_seen));
        EXPECT_EQ(gen.tokens, full.generated);
        for (std::size_t i = 0; i < gen.logits.rows; ++i) {
            for (std::size_t v = 0; v < w.config().vocab_size; ++v) {
                ASSERT_NEAR(gen.logits.at(i, v), full.logits.at(doc.size() + i, v), 1e-4);
            }
        }
    }
}

TEST(EncodeDocumentProperty, BudgetsHoldForEveryPolicyAndLayout) {
    const auto w = tiny(7);
    std::mt19937_64 rng(7);
    const auto doc = oracle::random_tokens(rng, 333);
    const std::vector<Token> instr{'w', 'h', 'y'};
    for (auto policy : {PolicyKind::Cse, PolicyKind::Tova, PolicyKind::H2o, PolicyKind::Roco, PolicyKind::Streaming}) {
        for (auto layout : {CacheLayout::Standard, CacheLayout::Individual, CacheLayout::Shared}) {
            auto cfg = small(16, 40, policy, layout);
            cfg.sink_size = 2;
            const auto r = encode_document(w, doc, instr, cfg);
            for (const auto& b : r.budget_reports) {
                for (const auto& c : b.caches) {
                    for (std::size_t n : c.per_layer) {
                        if (b.phase == BudgetPhase::PostFinalize) {
                            ASSERT_EQ(n, 40u);
                        } else {
                            ASSERT_LE(n, b.limit_per_cache);
                        }
                    }
                }
            }
            EXPECT_EQ(r.cache.uniform_slots(), 40u);
            // sinks survive every policy
            for (std::size_t l = 0; l < r.cache.n_layers(); ++l) {
                EXPECT_EQ(r.cache.origins(l)[0], 0);
                EXPECT_EQ(r.cache.origins(l)[1], 1);
            }
        }
    }
}

TEST(EncodeDocumentProperty, EvictedOriginsNeverReturn) {
    const auto w = tiny(8);
    std::mt19937_64 rng(8);
    const auto doc = oracle::random_tokens(rng, 400);
    const std::vector<Token> instr{'x'};
    for (auto layout : {CacheLayout::Standard, CacheLayout::Individual, CacheLayout::Shared}) {
        const auto r = encode_document(w, doc, instr, small(20, 50, PolicyKind::Cse, layout));
        ASSERT_EQ(r.retention_log.size(), r.chunks + 1);
        std::map<std::string, std::vector<std::set<Origin>>> gone;
        std::map<std::string, std::vector<std::set<Origin>>> prev;
        for (const auto& step : r.retention_log) {
            for (const auto& c : step.caches) {
                auto& g = gone[c.name];
                auto& p = prev[c.name];
                g.resize(c.layers.size());
                p.resize(c.layers.size());
                for (std::size_t l = 0; l < c.layers.size(); ++l) {
                    const std::set<Origin> now(c.layers[l].begin(), c.layers[l].end());
                    for (Origin o : now) ASSERT_FALSE(g[l].count(o)) << c.name << " origin " << o << " came back";
                    for (Origin o : p[l]) {
                        if (!now.count(o)) g[l].insert(o);
                    }
                    p[l] = now;
                }
            }
        }
    }
}

TEST(EncodeDocument, IndividualKeepsTwoCaches) {
    const auto w = tiny(9);
    std::mt19937_64 rng(9);
    const auto doc = oracle::random_tokens(rng, 300);
    const std::vector<Token> instr{'a', 'b', 'c'};
    const auto r = encode_document(w, doc, instr, small(32, 64, PolicyKind::Cse, CacheLayout::Individual));
    ASSERT_TRUE(r.context_cache.has_value());
    EXPECT_EQ(r.cache.uniform_slots(), 64u);
    for (const auto& b : r.budget_reports) {
        if (b.phase == BudgetPhase::PostAppend) {
            ASSERT_EQ(b.caches.size(), 2u);
            EXPECT_EQ(b.limit_total, 2u * (32 + 64));
            for (std::size_t l = 0; l < 2; ++l) {
                EXPECT_LE(b.caches[0].per_layer[l] + b.caches[1].per_layer[l], 2u * (32 + 64));
            }
        }
    }
    EXPECT_GT(r.instruction_passes, 0u);
}

TEST(EncodeDocument, InstructionLayoutsNeedAnInstruction) {
    const auto w = tiny(1);
    const std::vector<Token> doc(10, 5);
    EXPECT_EQ(kind_of([&] { encode_document(w, doc, {}, small(4, 8, PolicyKind::Cse, CacheLayout::Shared)); }),
              ErrorKind::Config);
    EXPECT_EQ(kind_of([&] { encode_document(w, doc, {}, small(4, 8)); }), ErrorKind::Config);
    EncodeOptions no_final;
    no_final.finalize = false;
    EXPECT_NO_THROW(encode_document(w, doc, {}, small(4, 8), no_final));
}

TEST(EncodeDocument, TovaEqualsChunkAverageAtUnitChunks) {
    const auto w = tiny(10);
    std::mt19937_64 rng(10);
    const auto doc = oracle::random_tokens(rng, 120);
    const std::vector<Token> instr{'z'};
    const auto cse = encode_document(w, doc, instr, small(1, 30, PolicyKind::Cse));
    const auto tova = encode_document(w, doc, instr, small(1, 30, PolicyKind::Tova));
    ASSERT_EQ(cse.retention_log.size(), tova.retention_log.size());
    for (std::size_t i = 0; i < cse.retention_log.size(); ++i) {
        ASSERT_EQ(cse.retention_log[i].caches[0].layers, tova.retention_log[i].caches[0].layers) << "step " << i;
    }
}

TEST(EncodeDocument, SharedMatchesStandardWhenInstructionAttendsLikeContext) {
    // Every query attends by key identity alone, so instruction and chunk
    // scores coincide and the two layouts evict the same slots.
    auto w = mock();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> dist(-3.0f, 3.0f);
    std::vector<float> key_logit(256);
    for (auto& v : key_logit) v = dist(rng);
    for (Token q = 0; q < 256; ++q) {
        for (Token k = 0; k < 256; ++k) w.set_affinity(q, k, key_logit[k]);
    }
    const auto doc = oracle::random_tokens(rng, 200);
    const std::vector<Token> instr{'i', 'n'};
    const auto standard = encode_document(w, doc, instr, small(10, 30, PolicyKind::Cse, CacheLayout::Standard));
    const auto shared = encode_document(w, doc, instr, small(10, 30, PolicyKind::Cse, CacheLayout::Shared));
    EXPECT_EQ(standard.cache.all_origins(), shared.cache.all_origins());
}

TEST(InstructionScores, SingleTokenIsItsRow) {
    const auto w = tiny(12);
    std::mt19937_64 rng(12);
    const auto doc = oracle::random_tokens(rng, 20);
    const std::vector<Token> instr{'k'};
    auto r = encode_document(w, doc, instr, small(8, 100));
    const auto trace = instruction_trace(w, r.cache, instr);
    const auto scores = instruction_scores(w, r.cache, instr);
    for (std::size_t l = 0; l < r.cache.n_layers(); ++l) {
        const auto& lt = trace.layers[l];
        ASSERT_EQ(lt.n_queries, 1u);
        for (std::size_t c = 0; c < 20; ++c) {
            double expected = 0.0;
            for (std::size_t h = 0; h < lt.n_heads; ++h) {
                const auto row = lt.row(h, 0);
                double mass = 0.0;
                for (std::size_t j = 0; j < 20; ++j) mass += row[j];
                expected += row[c] / mass / static_cast<double>(lt.n_heads);
            }
            ASSERT_NEAR(scores[l][c], expected, 1e-6);
        }
    }
}

TEST(InstructionScores, PureAndComposed) {
    const auto w = tiny(13);
    std::mt19937_64 rng(13);
    const auto doc = oracle::random_tokens(rng, 50);
    const std::vector<Token> instr{'w', 'h', 'a', 't'};
    auto r = encode_document(w, doc, instr, small(10, 100));
    const LayeredKVCache before = r.cache;
    const auto scores = instruction_scores(w, r.cache, instr);
    EXPECT_TRUE(r.cache == before);
    const auto trace = instruction_trace(w, r.cache, instr);
    for (std::size_t l = 0; l < r.cache.n_layers(); ++l) {
        EXPECT_EQ(trace.layers[l].n_cache, 50u);
        EXPECT_EQ(scores[l], imp_chunk_avg(trace, l, 50));
    }
    LayeredKVCache empty = LayeredKVCache::for_model(w.config());
    EXPECT_EQ(kind_of([&] { instruction_scores(w, empty, instr); }), ErrorKind::EmptyCache);
}

TEST(Generate, ZeroTokensAndDeterminism) {
    const auto w = tiny(14);
    std::mt19937_64 rng(14);
    const auto doc = oracle::random_tokens(rng, 30);
    const std::vector<Token> instr{'a'};
    auto r = encode_document(w, doc, instr, small(8, 16));
    LayeredKVCache a = r.cache;
    LayeredKVCache b = r.cache;
    LayeredKVCache c = r.cache;
    EXPECT_TRUE(generate(w, a, instr, 0, 30).tokens.empty());
    const auto g1 = generate(w, b, instr, 8, 30, std::nullopt);
    const auto g2 = generate(w, c, instr, 8, 30, std::nullopt);
    EXPECT_EQ(g1.tokens.size(), 8u);
    EXPECT_EQ(g1.tokens, g2.tokens);
    EXPECT_EQ(g1.logits, g2.logits);
    // the cache grew by the instruction and the fed-back tokens
    EXPECT_EQ(b.uniform_slots(), 16u + 1 + 7);
}

TEST(Generate, StopsAtEos) {
    auto w = mock();
    w.set_affinity('q', kEosToken, 10.0f);
    LayeredKVCache cache = LayeredKVCache::for_model(w.config());
    const std::vector<Token> doc{kEosToken, 'x', 'y'};
    const auto fwd = forward_chunk(w, cache.kv(), doc, assign_positions(0, 3));
    cache.append(fwd.new_kv, std::vector<Origin>{0, 1, 2});
    const std::vector<Token> instr{'q'};
    const auto g = generate(w, cache, instr, 10, 3);
    EXPECT_EQ(g.tokens, (std::vector<Token>{kEosToken}));
}

TEST(Generate, FirstTokenIsPasskeyIffRetained) {
    auto w = mock();
    const Token key = '7';
    const Token query = 'Q';
    w.set_affinity(query, key, 10.0f);
    std::vector<Token> doc(60, 'a');
    for (std::size_t i = 0; i < doc.size(); ++i) doc[i] = static_cast<Token>('a' + i % 20);
    doc[37] = key;
    const std::vector<Token> instr{query};
    const auto r = encode_document(w, doc, instr, small(10, 100));

    LayeredKVCache with_key = r.cache;
    EXPECT_EQ(generate(w, with_key, instr, 1, 60).tokens.front(), key);

    LayeredKVCache without_key = r.cache;
    std::vector<RetentionSet> keep(without_key.n_layers());
    for (auto& k : keep) {
        for (std::size_t i = 0; i < 60; ++i) {
            if (i != 37) k.push_back(i);
        }
    }
    without_key.retain(keep);
    EXPECT_NE(generate(w, without_key, instr, 1, 60).tokens.front(), key);
}

TEST(FullAttentionRun, SingleTokenEqualsDirectForward) {
    const auto w = tiny(15);
    const std::vector<Token> one{42};
    const auto run = full_attention_run(w, one, 0);
    const auto direct = forward_chunk(w, LayeredKVCache::for_model(w.config()).kv(), one, assign_positions(0, 1));
    EXPECT_EQ(run.logits, direct.logits);
    EXPECT_TRUE(run.generated.empty());
}

TEST(FullAttentionRun, DeterministicAndLengthChecked) {
    const auto w = tiny(16, 64);
    std::mt19937_64 rng(16);
    const auto tokens = oracle::random_tokens(rng, 40);
    const auto a = full_attention_run(w, tokens, 5);
    const auto b = full_attention_run(w, tokens, 5);
    EXPECT_EQ(a.logits, b.logits);
    EXPECT_EQ(a.generated, b.generated);
    const auto too_long = oracle::random_tokens(rng, 65);
    EXPECT_EQ(kind_of([&] { full_attention_run(w, too_long, 0); }), ErrorKind::Length);
}

TEST(GreedyArgmax, LowestIndexOnTies) {
    const std::vector<float> logits{0.1f, 0.7f, 0.7f, 0.2f};
    EXPECT_EQ(greedy_argmax(logits), 1u);
    EXPECT_EQ(kind_of([] { greedy_argmax(std::vector<float>{}); }), ErrorKind::EmptyVector);
}

} // namespace
} // namespace citrus
