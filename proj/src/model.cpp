// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "citrus/error.hpp"
#include "citrus/numerics.hpp"

namespace citrus {

namespace {

constexpr float kNormEps = 1e-5f;
constexpr double kRopeBase = 10000.0;
// Floor added to the mock's token mass before taking the log.
constexpr float kMockMassFloor = 1e-6f;

// Box-Muller over mt19937_64 so weights do not depend on the standard
// library's normal_distribution implementation.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : m_engine(seed) {}

    float operator()(float stddev) {
        if (m_has_spare) {
            m_has_spare = false;
            return static_cast<float>(m_spare * stddev);
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        m_spare = radius * std::sin(angle);
        m_has_spare = true;
        return static_cast<float>(radius * std::cos(angle) * stddev);
    }

private:
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    std::mt19937_64 m_engine;
    double m_spare = 0.0;
    bool m_has_spare = false;
};

void fill_normal(Matrix& m, NormalSampler& sampler, float stddev) {
    for (float& v : m.data) {
        v = sampler(stddev);
    }
}

// out[n x b] = a[n x k] * b[k x b]
Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        float* dst = out.data.data() + i * out.cols;
        const float* src = a.data.data() + i * a.cols;
        for (std::size_t p = 0; p < a.cols; ++p) {
            const float scale = src[p];
            const float* brow = b.data.data() + p * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) {
                dst[j] += scale * brow[j];
            }
        }
    }
    return out;
}

Matrix rms_norm(const Matrix& x, const std::vector<float>& gain) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        auto src = x.row(i);
        float ss = 0.0f;
        for (float v : src) {
            ss += v * v;
        }
        const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.cols) + kNormEps);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) {
            dst[j] = src[j] * inv * gain[j];
        }
    }
    return out;
}

float gelu(float x) {
    constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

// Rotates consecutive pairs (2i, 2i+1) of one head vector in place.
void apply_rope(const ModelWeights& w, float* vec, std::size_t d_head, std::size_t position) {
    for (std::size_t pair = 0; pair < d_head / 2; ++pair) {
        const float c = w.rope_cos(position, pair);
        const float s = w.rope_sin(position, pair);
        const float a = vec[2 * pair];
        const float b = vec[2 * pair + 1];
        vec[2 * pair] = a * c - b * s;
        vec[2 * pair + 1] = a * s + b * c;
    }
}

void validate_inputs(const ModelWeights& weights,
                     std::span<const LayerKv> cache,
                     std::span<const Token> chunk,
                     const Positions& positions) {
    const auto& cfg = weights.config();
    if (cache.size() != cfg.n_layers) {
        raise(ErrorKind::Shape, "cache has " + std::to_string(cache.size()) + " layers, model has " +
                                    std::to_string(cfg.n_layers));
    }
    for (const auto& layer : cache) {
        if (layer.n_heads() != cfg.n_heads || layer.dim != cfg.kv_dim()) {
            raise(ErrorKind::Shape, "cache layer head layout does not match the model");
        }
        if (layer.slots() != positions.cache.size()) {
            raise(ErrorKind::Shape, "cache positions: expected " + std::to_string(layer.slots()) + ", got " +
                                        std::to_string(positions.cache.size()));
        }
    }
    if (positions.chunk.size() != chunk.size()) {
        raise(ErrorKind::Shape, "chunk positions: expected " + std::to_string(chunk.size()) + ", got " +
                                    std::to_string(positions.chunk.size()));
    }
    std::int64_t previous = -1;
    auto check = [&](std::int32_t p) {
        if (p <= previous) {
            raise(ErrorKind::Shape, "positions must be strictly increasing");
        }
        if (static_cast<std::size_t>(p) >= cfg.max_positions) {
            raise(ErrorKind::Length, "position " + std::to_string(p) + " exceeds max_positions " +
                                         std::to_string(cfg.max_positions));
        }
        previous = p;
    };
    for (auto p : positions.cache) check(p);
    for (auto p : positions.chunk) check(p);
    for (Token t : chunk) {
        if (t >= cfg.vocab_size) {
            raise(ErrorKind::Vocab, "token " + std::to_string(t) + " outside vocabulary of " +
                                        std::to_string(cfg.vocab_size));
        }
    }
}

LayerTrace make_layer_trace(std::size_t n_heads, std::size_t n_queries, std::size_t n_cache, TraceMode mode) {
    LayerTrace trace;
    trace.n_heads = n_heads;
    trace.n_queries = n_queries;
    trace.n_cache = n_cache;
    if (mode == TraceMode::Full) {
        trace.probs.assign(n_heads * n_queries * (n_cache + n_queries), 0.0f);
    }
    return trace;
}

StepOutput forward_transformer(const ModelWeights& w,
                               std::span<const LayerKv> cache,
                               std::span<const Token> chunk,
                               const Positions& positions,
                               TraceMode trace_mode) {
    const auto& cfg = w.config();
    const std::size_t n = chunk.size();
    const std::size_t n_cache = positions.cache.size();
    const std::size_t dh = cfg.d_head;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    StepOutput out;
    out.new_kv.reserve(cfg.n_layers);
    out.trace.layers.reserve(cfg.n_layers);

    Matrix x(n, cfg.d_model);
    for (std::size_t i = 0; i < n; ++i) {
        auto src = w.embedding.row(chunk[i]);
        std::copy(src.begin(), src.end(), x.row(i).begin());
    }

    std::vector<float> scores(n_cache + n);
    std::vector<float> rotated_cache(n_cache * dh);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const auto& lw = w.layers[l];
        const Matrix h = rms_norm(x, lw.attn_norm);
        Matrix q = matmul(h, lw.wq);
        Matrix k = matmul(h, lw.wk);
        const Matrix v = matmul(h, lw.wv);

        LayerKv fresh(cfg.n_heads, dh);
        for (std::size_t head = 0; head < cfg.n_heads; ++head) {
            auto& kd = fresh.keys[head];
            auto& vd = fresh.values[head];
            kd.reserve(n * dh);
            vd.reserve(n * dh);
            for (std::size_t i = 0; i < n; ++i) {
                const float* kr = k.data.data() + i * cfg.d_model + head * dh;
                const float* vr = v.data.data() + i * cfg.d_model + head * dh;
                kd.insert(kd.end(), kr, kr + dh);
                vd.insert(vd.end(), vr, vr + dh);
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t head = 0; head < cfg.n_heads; ++head) {
                apply_rope(w, q.data.data() + i * cfg.d_model + head * dh, dh,
                           static_cast<std::size_t>(positions.chunk[i]));
                apply_rope(w, k.data.data() + i * cfg.d_model + head * dh, dh,
                           static_cast<std::size_t>(positions.chunk[i]));
            }
        }

        LayerTrace trace = make_layer_trace(cfg.n_heads, n, n_cache, trace_mode);
        Matrix attn(n, cfg.d_model);
        for (std::size_t head = 0; head < cfg.n_heads; ++head) {
            const auto& cache_keys = cache[l].keys[head];
            const auto& cache_values = cache[l].values[head];
            for (std::size_t j = 0; j < n_cache; ++j) {
                std::copy_n(cache_keys.data() + j * dh, dh, rotated_cache.data() + j * dh);
                apply_rope(w, rotated_cache.data() + j * dh, dh, static_cast<std::size_t>(positions.cache[j]));
            }
            for (std::size_t i = 0; i < n; ++i) {
                const float* qi = q.data.data() + i * cfg.d_model + head * dh;
                const std::size_t visible = n_cache + i + 1;
                for (std::size_t j = 0; j < n_cache; ++j) {
                    const float* kj = rotated_cache.data() + j * dh;
                    float dot = 0.0f;
                    for (std::size_t d = 0; d < dh; ++d) dot += qi[d] * kj[d];
                    scores[j] = dot * scale;
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const float* kj = k.data.data() + j * cfg.d_model + head * dh;
                    float dot = 0.0f;
                    for (std::size_t d = 0; d < dh; ++d) dot += qi[d] * kj[d];
                    scores[n_cache + j] = dot * scale;
                }
                std::span<float> probs(scores.data(), visible);
                softmax_inplace(probs);
                if (trace_mode == TraceMode::Full) {
                    std::copy(probs.begin(), probs.end(), trace.row(head, i).begin());
                }
                float* dst = attn.data.data() + i * cfg.d_model + head * dh;
                for (std::size_t j = 0; j < n_cache; ++j) {
                    const float p = probs[j];
                    const float* vj = cache_values.data() + j * dh;
                    for (std::size_t d = 0; d < dh; ++d) dst[d] += p * vj[d];
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const float p = probs[n_cache + j];
                    const float* vj = v.data.data() + j * cfg.d_model + head * dh;
                    for (std::size_t d = 0; d < dh; ++d) dst[d] += p * vj[d];
                }
            }
        }

        const Matrix projected = matmul(attn, lw.wo);
        for (std::size_t e = 0; e < x.data.size(); ++e) x.data[e] += projected.data[e];

        const Matrix h2 = rms_norm(x, lw.ffn_norm);
        Matrix up = matmul(h2, lw.w1);
        for (float& u : up.data) u = gelu(u);
        const Matrix down = matmul(up, lw.w2);
        for (std::size_t e = 0; e < x.data.size(); ++e) x.data[e] += down.data[e];

        out.new_kv.push_back(std::move(fresh));
        out.trace.layers.push_back(std::move(trace));
    }

    out.logits = matmul(rms_norm(x, w.final_norm), w.unembedding);
    return out;
}

StepOutput forward_mock(const ModelWeights& w,
                        std::span<const LayerKv> cache,
                        std::span<const Token> chunk,
                        const Positions& positions,
                        TraceMode trace_mode) {
    const auto& cfg = w.config();
    const std::size_t n = chunk.size();
    const std::size_t n_cache = positions.cache.size();

    StepOutput out;
    out.logits = Matrix(n, cfg.vocab_size);
    std::vector<float> scores(n_cache + n);
    std::vector<Token> keys(n_cache + n);
    Matrix mass(n, cfg.vocab_size);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerKv fresh(cfg.n_heads, 1);
        for (std::size_t head = 0; head < cfg.n_heads; ++head) {
            for (Token t : chunk) {
                fresh.keys[head].push_back(static_cast<float>(t));
                fresh.values[head].push_back(static_cast<float>(t));
            }
        }

        LayerTrace trace = make_layer_trace(cfg.n_heads, n, n_cache, trace_mode);
        const bool last_layer = l + 1 == cfg.n_layers;
        for (std::size_t head = 0; head < cfg.n_heads; ++head) {
            for (std::size_t j = 0; j < n_cache; ++j) {
                keys[j] = static_cast<Token>(cache[l].keys[head][j]);
            }
            for (std::size_t j = 0; j < n; ++j) {
                keys[n_cache + j] = chunk[j];
            }
            for (std::size_t i = 0; i < n; ++i) {
                const auto table_row = w.affinity.row(chunk[i]);
                const std::size_t visible = n_cache + i + 1;
                for (std::size_t j = 0; j < visible; ++j) {
                    scores[j] = table_row[keys[j]];
                }
                std::span<float> probs(scores.data(), visible);
                softmax_inplace(probs);
                if (trace_mode == TraceMode::Full) {
                    std::copy(probs.begin(), probs.end(), trace.row(head, i).begin());
                }
                if (last_layer) {
                    auto m = mass.row(i);
                    const float inv_heads = 1.0f / static_cast<float>(cfg.n_heads);
                    for (std::size_t j = 0; j < visible; ++j) {
                        // values are one-hot token embeddings
                        const Token value_token = j < n_cache
                                                      ? static_cast<Token>(cache[l].values[head][j])
                                                      : chunk[j - n_cache];
                        m[value_token] += probs[j] * inv_heads;
                    }
                }
            }
        }
        out.new_kv.push_back(std::move(fresh));
        out.trace.layers.push_back(std::move(trace));
    }

    for (std::size_t e = 0; e < mass.data.size(); ++e) {
        out.logits.data[e] = std::log(mass.data[e] + kMockMassFloor);
    }
    return out;
}

} // namespace

std::string_view to_string(Backend backend) {
    switch (backend) {
    case Backend::TinyTransformer: return "tiny-transformer";
    case Backend::AffinityMock: return "affinity-mock";
    }
    return "unknown";
}

Backend parse_backend(std::string_view name) {
    if (name == "tiny-transformer" || name == "tiny") return Backend::TinyTransformer;
    if (name == "affinity-mock" || name == "mock") return Backend::AffinityMock;
    raise(ErrorKind::Config, "unknown backend '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (n_layers < 1) raise(ErrorKind::Config, "n_layers must be >= 1");
    if (n_heads < 1) raise(ErrorKind::Config, "n_heads must be >= 1");
    if (vocab_size < 2) raise(ErrorKind::Config, "vocab_size must be >= 2");
    if (max_positions < 1) raise(ErrorKind::Config, "max_positions must be >= 1");
    if (d_model != n_heads * d_head) {
        raise(ErrorKind::Config, "d_model (" + std::to_string(d_model) + ") != n_heads x d_head (" +
                                     std::to_string(n_heads) + " x " + std::to_string(d_head) + ")");
    }
    if (backend == Backend::TinyTransformer && (d_head == 0 || d_head % 2 != 0)) {
        raise(ErrorKind::Config, "rotary embedding needs an even, non-zero d_head");
    }
    if (backend == Backend::AffinityMock && vocab_size > (std::size_t{1} << 24)) {
        raise(ErrorKind::Config, "affinity-mock vocab must fit exactly in a float");
    }
}

ModelWeights::ModelWeights(const ModelConfig& config) : m_config(config) {
    m_config.validate();
    if (m_config.backend == Backend::AffinityMock) {
        affinity = Matrix(m_config.vocab_size, m_config.vocab_size);
        return;
    }
    const std::size_t d = m_config.d_model;
    embedding = Matrix(m_config.vocab_size, d);
    layers.resize(m_config.n_layers);
    for (auto& layer : layers) {
        layer.attn_norm.assign(d, 1.0f);
        layer.ffn_norm.assign(d, 1.0f);
        layer.wq = Matrix(d, d);
        layer.wk = Matrix(d, d);
        layer.wv = Matrix(d, d);
        layer.wo = Matrix(d, d);
        layer.w1 = Matrix(d, m_config.d_ff());
        layer.w2 = Matrix(m_config.d_ff(), d);
    }
    final_norm.assign(d, 1.0f);
    unembedding = Matrix(d, m_config.vocab_size);

    const std::size_t pairs = m_config.d_head / 2;
    m_rope_cos.resize(m_config.max_positions * pairs);
    m_rope_sin.resize(m_config.max_positions * pairs);
    for (std::size_t pos = 0; pos < m_config.max_positions; ++pos) {
        for (std::size_t i = 0; i < pairs; ++i) {
            const double freq = std::pow(kRopeBase, -2.0 * static_cast<double>(i) /
                                                        static_cast<double>(m_config.d_head));
            const double angle = static_cast<double>(pos) * freq;
            m_rope_cos[pos * pairs + i] = static_cast<float>(std::cos(angle));
            m_rope_sin[pos * pairs + i] = static_cast<float>(std::sin(angle));
        }
    }
}

void ModelWeights::set_affinity(Token query, Token key, float logit) {
    if (m_config.backend != Backend::AffinityMock) {
        raise(ErrorKind::Backend, "set_affinity requires the affinity-mock backend");
    }
    if (query >= m_config.vocab_size || key >= m_config.vocab_size) {
        raise(ErrorKind::Vocab, "affinity token outside vocabulary");
    }
    if (!std::isfinite(logit)) {
        raise(ErrorKind::Numerical, "affinity logit must be finite");
    }
    affinity.at(query, key) = logit;
}

bool ModelWeights::operator==(const ModelWeights& other) const {
    return m_config == other.m_config && embedding == other.embedding && layers == other.layers &&
           final_norm == other.final_norm && unembedding == other.unembedding && affinity == other.affinity;
}

ModelWeights init_model(const ModelConfig& config) {
    ModelWeights w(config);
    if (config.backend == Backend::AffinityMock) {
        return w;
    }
    NormalSampler sampler(config.seed);
    const float stddev = 0.02f / std::sqrt(static_cast<float>(config.n_layers));
    fill_normal(w.embedding, sampler, stddev);
    for (auto& layer : w.layers) {
        fill_normal(layer.wq, sampler, stddev);
        fill_normal(layer.wk, sampler, stddev);
        fill_normal(layer.wv, sampler, stddev);
        fill_normal(layer.wo, sampler, stddev);
        fill_normal(layer.w1, sampler, stddev);
        fill_normal(layer.w2, sampler, stddev);
    }
    fill_normal(w.unembedding, sampler, stddev);
    return w;
}

StepOutput forward_chunk(const ModelWeights& weights,
                         std::span<const LayerKv> cache,
                         std::span<const Token> chunk,
                         const Positions& positions,
                         TraceMode trace_mode) {
    validate_inputs(weights, cache, chunk, positions);
    if (weights.config().backend == Backend::AffinityMock) {
        return forward_mock(weights, cache, chunk, positions, trace_mode);
    }
    return forward_transformer(weights, cache, chunk, positions, trace_mode);
}

ModelWeights set_affinity(ModelWeights weights, Token query, Token key, float logit) {
    weights.set_affinity(query, key, logit);
    return weights;
}

} // namespace citrus
