// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/weights_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "citrus/error.hpp"

namespace citrus {

namespace {

constexpr std::array<char, 4> kMagic = {'C', 'T', 'R', 'S'};

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) {
        raise(ErrorKind::Io, "truncated weight file");
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(bytes[i]) << (8 * i);
    }
    return value;
}

void put_u32(std::ostream& out, std::size_t value) {
    if (value > std::numeric_limits<std::uint32_t>::max()) {
        raise(ErrorKind::Config, "dimension does not fit the weight container");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(value));
}

void put_floats(std::ostream& out, const std::vector<float>& values) {
    for (float v : values) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
}

void get_floats(std::istream& in, std::vector<float>& values) {
    for (float& v : values) {
        v = std::bit_cast<float>(get_le<std::uint32_t>(in));
    }
}

} // namespace

void write_weights(std::ostream& out, const ModelWeights& weights) {
    const auto& cfg = weights.config();
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kWeightFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.backend));
    put_u32(out, cfg.n_layers);
    put_u32(out, cfg.n_heads);
    put_u32(out, cfg.d_model);
    put_u32(out, cfg.d_head);
    put_u32(out, cfg.vocab_size);
    put_u32(out, cfg.max_positions);
    put_le<std::uint64_t>(out, cfg.seed);

    if (cfg.backend == Backend::AffinityMock) {
        put_floats(out, weights.affinity.data);
    } else {
        put_floats(out, weights.embedding.data);
        for (const auto& layer : weights.layers) {
            put_floats(out, layer.attn_norm);
            put_floats(out, layer.wq.data);
            put_floats(out, layer.wk.data);
            put_floats(out, layer.wv.data);
            put_floats(out, layer.wo.data);
            put_floats(out, layer.ffn_norm);
            put_floats(out, layer.w1.data);
            put_floats(out, layer.w2.data);
        }
        put_floats(out, weights.final_norm);
        put_floats(out, weights.unembedding.data);
    }
    if (!out) {
        raise(ErrorKind::Io, "failed writing weights");
    }
}

ModelWeights read_weights(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        raise(ErrorKind::Io, "not a CTRS weight file");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kWeightFormatVersion) {
        raise(ErrorKind::Io, "unsupported weight format version " + std::to_string(version));
    }
    ModelConfig cfg;
    const auto backend = get_le<std::uint32_t>(in);
    if (backend > static_cast<std::uint32_t>(Backend::AffinityMock)) {
        raise(ErrorKind::Io, "unknown backend tag " + std::to_string(backend));
    }
    cfg.backend = static_cast<Backend>(backend);
    cfg.n_layers = get_le<std::uint32_t>(in);
    cfg.n_heads = get_le<std::uint32_t>(in);
    cfg.d_model = get_le<std::uint32_t>(in);
    cfg.d_head = get_le<std::uint32_t>(in);
    cfg.vocab_size = get_le<std::uint32_t>(in);
    cfg.max_positions = get_le<std::uint32_t>(in);
    cfg.seed = get_le<std::uint64_t>(in);

    ModelWeights w(cfg);
    if (cfg.backend == Backend::AffinityMock) {
        get_floats(in, w.affinity.data);
    } else {
        get_floats(in, w.embedding.data);
        for (auto& layer : w.layers) {
            get_floats(in, layer.attn_norm);
            get_floats(in, layer.wq.data);
            get_floats(in, layer.wk.data);
            get_floats(in, layer.wv.data);
            get_floats(in, layer.wo.data);
            get_floats(in, layer.ffn_norm);
            get_floats(in, layer.w1.data);
            get_floats(in, layer.w2.data);
        }
        get_floats(in, w.final_norm);
        get_floats(in, w.unembedding.data);
    }
    return w;
}

void save_weights(const std::filesystem::path& path, const ModelWeights& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        raise(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    write_weights(out, weights);
}

ModelWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorKind::Io, "cannot open " + path.string());
    }
    return read_weights(in);
}

} // namespace citrus
