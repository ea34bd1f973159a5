// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citrus/driver.hpp"
#include "citrus/model.hpp"
#include "citrus/run_config.hpp"

namespace citrus {

// ---------------------------------------------------------------------------
// Passkey retrieval

inline constexpr std::string_view kDefaultPasskey = "41732";
inline constexpr std::string_view kDefaultNeedleTemplate = "[THE_PASSKEY_IS_{key}_REMEMBER_IT]";
inline constexpr std::string_view kDefaultPasskeyInstruction = "WHAT_IS_THE_PASSKEY?";

struct PasskeySpec {
    std::size_t total_length = 2048;
    double depth_fraction = 0.5;
    std::string passkey = std::string(kDefaultPasskey);
    std::uint64_t filler_seed = 0;
    /// Needle text; "{key}" is replaced by the passkey.
    std::string needle_template = std::string(kDefaultNeedleTemplate);
};

struct PasskeyDoc {
    std::vector<Token> tokens;
    std::vector<Token> gold;      // passkey tokens
    std::size_t needle_begin = 0; // origin span [begin, end) of the inserted needle
    std::size_t needle_end = 0;
};

/// The filler sentence pool; every sentence is lowercase text, spaces and
/// periods only, so needle and instruction bytes can be kept disjoint from it.
std::span<const std::string_view> filler_sentences();

/// Distinct tokens that can appear in filler text.
std::vector<Token> filler_alphabet();

std::string render_needle(const PasskeySpec& spec);

/// Seeded filler with the needle starting at
/// round(depth_fraction * (total_length - needle_len)).
PasskeyDoc make_passkey_doc(const PasskeySpec& spec);

struct PasskeyScore {
    int exact = 0;         // 1 iff gold is a contiguous subsequence of generated
    double overlap = 0.0;  // |multiset intersection| / |gold|
};

PasskeyScore score_passkey(std::span<const Token> generated, std::span<const Token> gold);

/// Affinity logits of the constructed information-neglect scenario.
struct NeedleAffinity {
    float attract = 10.0f;  // instruction token -> needle token
    float repel = -10.0f;   // filler token -> needle token
    float chain = 16.0f;    // last instruction token -> first key digit, digit -> next digit
};

/// Affinity-mock whose instruction attends only to the needle, whose filler
/// tokens avoid it, and which reads the passkey digits out in order once they
/// are in the cache. ConfigError when the needle or instruction shares bytes
/// with the filler, or when the passkey repeats a digit.
ModelWeights make_needle_mock(const ModelConfig& base, const PasskeySpec& spec, std::span<const Token> instruction,
                              const NeedleAffinity& affinity = {});

struct PasskeyCell {
    double depth_fraction = 0.0;
    std::size_t total_length = 0;
    PasskeyScore score;
    std::size_t needle_len = 0;
    /// Needle origins present in each layer of the generation cache.
    std::vector<std::size_t> needle_retained;
    std::vector<Token> generated;
};

PasskeyCell run_passkey_cell(const ModelWeights& weights, const PasskeySpec& spec,
                             std::span<const Token> instruction, const RunConfig& config);

struct PasskeySweep {
    std::vector<double> depths;
    std::vector<std::size_t> lengths;
    std::vector<std::vector<PasskeyCell>> cells;  // [depth][length]
};

/// Runs every (depth, length) cell; cells run in parallel up to
/// sweep_threads() workers.
PasskeySweep run_passkey_sweep(const ModelWeights& weights, const PasskeySpec& base,
                               std::span<const double> depths, std::span<const std::size_t> lengths,
                               std::span<const Token> instruction, const RunConfig& config);

/// Matrix of exact-match values, rows = depths, columns = lengths.
std::string sweep_csv(const PasskeySweep& sweep);

/// Worker cap from CITRUS_THREADS, else the hardware concurrency.
std::size_t sweep_threads();

// ---------------------------------------------------------------------------
// Streaming perplexity

struct PerplexityResult {
    std::vector<double> nll;  // one per predicted token (stream length - 1)
    double mean_nll = 0.0;
    double perplexity = 0.0;
};

/// Chunked evaluation under `config`; token t is scored by the logits row of
/// token t-1. Instruction-aware layouts take `instruction` as their fixed
/// eviction query. NumericalError on non-finite logits.
PerplexityResult eval_perplexity(const ModelWeights& weights, std::span<const Token> stream, const RunConfig& config,
                                 std::span<const Token> instruction = {});

/// Same metric from a single un-evicted pass.
PerplexityResult oracle_perplexity(const ModelWeights& weights, std::span<const Token> stream);

// ---------------------------------------------------------------------------
// Intersection probe

inline constexpr std::size_t kProbeContextLen = 200;
inline constexpr std::size_t kProbeBudget = 20;

struct ProbeReport {
    std::vector<double> ratios;  // per layer, in [0, 1]
    std::size_t k = 0;
    std::size_t context1_len = 0;
    std::size_t context2_len = 0;
    std::size_t instruction_len = 0;
};

/// Encodes context1 as a cache, scores it with context2 and with the
/// instruction, and reports |top-k(context2) & top-k(instruction)| / k per
/// layer. ConfigError unless |context2| == |instruction| and 1 <= k <= |context1|.
ProbeReport probe_intersection(const ModelWeights& weights, std::span<const Token> context1,
                               std::span<const Token> context2, std::span<const Token> instruction,
                               std::size_t k = kProbeBudget);

// ---------------------------------------------------------------------------

/// Farthest input token a layered sliding-window model can reach.
std::uint64_t window_reach(std::uint64_t layers, std::uint64_t window);

} // namespace citrus
