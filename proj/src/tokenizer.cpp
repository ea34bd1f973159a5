// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/tokenizer.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include "citrus/error.hpp"

namespace citrus {

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(static_cast<Token>(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string detokenize(std::span<const Token> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) {
        if (t < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

std::vector<Token> read_token_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorKind::Io, "cannot open token file " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0) {
        raise(ErrorKind::Io, "token file " + path.string() + " is not a whole number of u32 ids");
    }
    std::vector<Token> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        Token t = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            t |= static_cast<Token>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
        }
        out[i] = t;
    }
    return out;
}

void write_token_file(const std::filesystem::path& path, std::span<const Token> tokens) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        raise(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    for (Token t : tokens) {
        const std::array<char, 4> bytes{static_cast<char>(t & 0xff), static_cast<char>((t >> 8) & 0xff),
                                        static_cast<char>((t >> 16) & 0xff), static_cast<char>((t >> 24) & 0xff)};
        out.write(bytes.data(), bytes.size());
    }
    if (!out) {
        raise(ErrorKind::Io, "failed writing " + path.string());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorKind::Io, "cannot open " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<Token> load_tokens(const std::filesystem::path& path) {
    if (path.extension() == ".tok") {
        return read_token_file(path);
    }
    return tokenize(read_text_file(path));
}

} // namespace citrus
