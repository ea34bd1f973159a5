// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "citrus/error.hpp"
#include "citrus/tokenizer.hpp"

namespace citrus {

namespace {

constexpr std::array<std::string_view, 5> kFiller = {
    "the grass is green. ",
    "the sky is blue. ",
    "the sun is yellow. ",
    "here we go. ",
    "there and back again. ",
};

std::set<Token> token_set(std::span<const Token> tokens) {
    return {tokens.begin(), tokens.end()};
}

double log_sum_exp(std::span<const float> row) {
    double max_value = row[0];
    for (float v : row) max_value = std::max(max_value, static_cast<double>(v));
    double sum = 0.0;
    for (float v : row) sum += std::exp(static_cast<double>(v) - max_value);
    return max_value + std::log(sum);
}

double token_nll(std::span<const float> row, Token target) {
    for (float v : row) {
        if (!std::isfinite(v)) {
            raise(ErrorKind::Numerical, "non-finite logit during perplexity evaluation");
        }
    }
    const double nll = log_sum_exp(row) - static_cast<double>(row[target]);
    if (!std::isfinite(nll)) {
        raise(ErrorKind::Numerical, "non-finite NLL");
    }
    return nll;
}

PerplexityResult summarize(std::vector<double> nll) {
    PerplexityResult r;
    double sum = 0.0;
    for (double v : nll) sum += v;
    r.mean_nll = sum / static_cast<double>(nll.size());
    r.perplexity = std::exp(r.mean_nll);
    r.nll = std::move(nll);
    return r;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t workers = std::min(count, std::max<std::size_t>(1, sweep_threads()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace

std::span<const std::string_view> filler_sentences() {
    return kFiller;
}

std::vector<Token> filler_alphabet() {
    std::set<Token> seen;
    for (auto sentence : kFiller) {
        for (Token t : tokenize(sentence)) seen.insert(t);
    }
    return {seen.begin(), seen.end()};
}

std::string render_needle(const PasskeySpec& spec) {
    if (spec.passkey.empty() ||
        !std::all_of(spec.passkey.begin(), spec.passkey.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        raise(ErrorKind::Config, "passkey must be a non-empty digit string");
    }
    const auto pos = spec.needle_template.find("{key}");
    if (pos == std::string::npos || spec.needle_template.find("{key}", pos + 1) != std::string::npos) {
        raise(ErrorKind::Config, "needle template must contain {key} exactly once");
    }
    std::string needle = spec.needle_template;
    needle.replace(pos, 5, spec.passkey);
    return needle;
}

PasskeyDoc make_passkey_doc(const PasskeySpec& spec) {
    if (!(spec.depth_fraction >= 0.0 && spec.depth_fraction <= 1.0)) {
        raise(ErrorKind::Config, "depth_fraction must lie in [0, 1]");
    }
    const std::string needle = render_needle(spec);
    if (spec.total_length < needle.size()) {
        raise(ErrorKind::Config, "total_length " + std::to_string(spec.total_length) +
                                     " cannot hold a needle of " + std::to_string(needle.size()) + " tokens");
    }
    const std::size_t filler_len = spec.total_length - needle.size();

    std::mt19937_64 rng(spec.filler_seed);
    std::string filler;
    filler.reserve(filler_len + 32);
    while (filler.size() < filler_len) {
        filler += kFiller[rng() % kFiller.size()];
    }
    filler.resize(filler_len);

    const auto start = static_cast<std::size_t>(std::llround(spec.depth_fraction * static_cast<double>(filler_len)));
    std::string text = filler.substr(0, start) + needle + filler.substr(start);

    PasskeyDoc doc;
    doc.tokens = tokenize(text);
    doc.gold = tokenize(spec.passkey);
    doc.needle_begin = start;
    doc.needle_end = start + needle.size();
    return doc;
}

PasskeyScore score_passkey(std::span<const Token> generated, std::span<const Token> gold) {
    if (gold.empty()) {
        raise(ErrorKind::Config, "gold passkey is empty");
    }
    PasskeyScore score;
    score.exact = std::search(generated.begin(), generated.end(), gold.begin(), gold.end()) != generated.end() ? 1 : 0;
    std::map<Token, std::size_t> available;
    for (Token t : generated) ++available[t];
    std::size_t shared = 0;
    for (Token t : gold) {
        auto it = available.find(t);
        if (it != available.end() && it->second > 0) {
            --it->second;
            ++shared;
        }
    }
    score.overlap = static_cast<double>(shared) / static_cast<double>(gold.size());
    return score;
}

ModelWeights make_needle_mock(const ModelConfig& base, const PasskeySpec& spec, std::span<const Token> instruction,
                              const NeedleAffinity& affinity) {
    if (instruction.empty()) {
        raise(ErrorKind::Config, "needle scenario needs an instruction");
    }
    ModelConfig cfg = base;
    cfg.backend = Backend::AffinityMock;
    ModelWeights w(cfg);

    const auto needle_tokens = token_set(tokenize(render_needle(spec)));
    const auto instruction_tokens = token_set(instruction);
    const auto filler = filler_alphabet();
    for (Token t : filler) {
        if (needle_tokens.count(t) || instruction_tokens.count(t)) {
            raise(ErrorKind::Config, "filler byte " + std::to_string(t) + " also occurs in the needle or instruction");
        }
    }
    const auto gold = tokenize(spec.passkey);
    if (token_set(gold).size() != gold.size()) {
        raise(ErrorKind::Config, "needle scenario needs a passkey without repeated digits");
    }

    for (Token q : instruction_tokens) {
        for (Token k : needle_tokens) w.set_affinity(q, k, affinity.attract);
    }
    for (Token q : filler) {
        for (Token k : needle_tokens) w.set_affinity(q, k, affinity.repel);
    }
    w.set_affinity(instruction.back(), gold.front(), affinity.chain);
    for (std::size_t i = 0; i + 1 < gold.size(); ++i) {
        w.set_affinity(gold[i], gold[i + 1], affinity.chain);
    }
    return w;
}

PasskeyCell run_passkey_cell(const ModelWeights& weights, const PasskeySpec& spec,
                             std::span<const Token> instruction, const RunConfig& config) {
    const PasskeyDoc doc = make_passkey_doc(spec);
    RunConfig cfg = config;
    cfg.keep_retention_log = false;
    cfg.keep_scores = false;
    EncodeResult enc = encode_document(weights, doc.tokens, instruction, cfg);

    PasskeyCell cell;
    cell.depth_fraction = spec.depth_fraction;
    cell.total_length = spec.total_length;
    cell.needle_len = doc.needle_end - doc.needle_begin;
    for (std::size_t l = 0; l < enc.cache.n_layers(); ++l) {
        std::size_t present = 0;
        for (Origin o : enc.cache.origins(l)) {
            if (o >= static_cast<Origin>(doc.needle_begin) && o < static_cast<Origin>(doc.needle_end)) ++present;
        }
        cell.needle_retained.push_back(present);
    }
    const Generation gen = generate(weights, enc.cache, instruction, cfg.max_new_tokens,
                                    static_cast<Origin>(enc.tokens_seen));
    cell.generated = gen.tokens;
    cell.score = score_passkey(gen.tokens, doc.gold);
    return cell;
}

PasskeySweep run_passkey_sweep(const ModelWeights& weights, const PasskeySpec& base,
                               std::span<const double> depths, std::span<const std::size_t> lengths,
                               std::span<const Token> instruction, const RunConfig& config) {
    PasskeySweep sweep;
    sweep.depths.assign(depths.begin(), depths.end());
    sweep.lengths.assign(lengths.begin(), lengths.end());
    sweep.cells.assign(depths.size(), std::vector<PasskeyCell>(lengths.size()));
    parallel_for(depths.size() * lengths.size(), [&](std::size_t index) {
        const std::size_t d = index / lengths.size();
        const std::size_t l = index % lengths.size();
        PasskeySpec spec = base;
        spec.depth_fraction = depths[d];
        spec.total_length = lengths[l];
        sweep.cells[d][l] = run_passkey_cell(weights, spec, instruction, config);
    });
    return sweep;
}

std::string sweep_csv(const PasskeySweep& sweep) {
    std::ostringstream out;
    out << "depth";
    for (auto len : sweep.lengths) out << ',' << len;
    out << '\n';
    for (std::size_t d = 0; d < sweep.depths.size(); ++d) {
        out << sweep.depths[d];
        for (const auto& cell : sweep.cells[d]) out << ',' << cell.score.exact;
        out << '\n';
    }
    return out.str();
}

std::size_t sweep_threads() {
    if (const char* env = std::getenv("CITRUS_THREADS")) {
        try {
            const long value = std::stol(env);
            if (value >= 1) return static_cast<std::size_t>(value);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

PerplexityResult eval_perplexity(const ModelWeights& weights, std::span<const Token> stream, const RunConfig& config,
                                 std::span<const Token> instruction) {
    if (stream.size() < 2) {
        raise(ErrorKind::Config, "perplexity needs at least two tokens");
    }
    RunConfig cfg = config;
    cfg.keep_retention_log = false;
    cfg.keep_scores = false;

    std::vector<double> nll;
    nll.reserve(stream.size() - 1);
    std::vector<float> carry;  // last logits row of the previous chunk
    EncodeOptions options;
    options.finalize = false;
    options.on_chunk = [&](const Chunk& chunk, const StepOutput& out) {
        for (std::size_t i = 0; i < chunk.tokens.size(); ++i) {
            if (i == 0) {
                if (!carry.empty()) nll.push_back(token_nll(carry, chunk.tokens[0]));
            } else {
                nll.push_back(token_nll(out.logits.row(i - 1), chunk.tokens[i]));
            }
        }
        auto last = out.logits.row(chunk.tokens.size() - 1);
        carry.assign(last.begin(), last.end());
    };
    encode_document(weights, stream, instruction, cfg, options);
    return summarize(std::move(nll));
}

PerplexityResult oracle_perplexity(const ModelWeights& weights, std::span<const Token> stream) {
    if (stream.size() < 2) {
        raise(ErrorKind::Config, "perplexity needs at least two tokens");
    }
    const FullRun run = full_attention_run(weights, stream, 0);
    std::vector<double> nll;
    nll.reserve(stream.size() - 1);
    for (std::size_t t = 1; t < stream.size(); ++t) {
        nll.push_back(token_nll(run.logits.row(t - 1), stream[t]));
    }
    return summarize(std::move(nll));
}

ProbeReport probe_intersection(const ModelWeights& weights, std::span<const Token> context1,
                               std::span<const Token> context2, std::span<const Token> instruction, std::size_t k) {
    if (context2.size() != instruction.size()) {
        raise(ErrorKind::Config, "context2 (" + std::to_string(context2.size()) + " tokens) must match the instruction (" +
                                     std::to_string(instruction.size()) + " tokens)");
    }
    if (k < 1 || k > context1.size()) {
        raise(ErrorKind::Config, "probe k must lie in [1, |context1|]");
    }
    LayeredKVCache cache = LayeredKVCache::for_model(weights.config());
    const StepOutput encoded =
        forward_chunk(weights, cache.kv(), context1, assign_positions(0, context1.size()), TraceMode::None);
    std::vector<Origin> origins(context1.size());
    for (std::size_t i = 0; i < origins.size(); ++i) origins[i] = static_cast<Origin>(i);
    cache.append(encoded.new_kv, origins);

    const ImportanceScores by_context = instruction_scores(weights, cache, context2);
    const ImportanceScores by_instruction = instruction_scores(weights, cache, instruction);

    ProbeReport report;
    report.k = k;
    report.context1_len = context1.size();
    report.context2_len = context2.size();
    report.instruction_len = instruction.size();
    for (std::size_t l = 0; l < cache.n_layers(); ++l) {
        const RetentionSet a = stable_top_k(by_context[l], k);
        const RetentionSet b = stable_top_k(by_instruction[l], k);
        std::vector<std::size_t> both;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
        report.ratios.push_back(static_cast<double>(both.size()) / static_cast<double>(k));
    }
    return report;
}

std::uint64_t window_reach(std::uint64_t layers, std::uint64_t window) {
    return layers * window;
}

} // namespace citrus
