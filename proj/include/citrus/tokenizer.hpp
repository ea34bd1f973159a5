// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citrus/model.hpp"

namespace citrus {

/// Byte-level: token id == byte value. Ids 256 (BOS) and 257 (EOS) are
/// reserved and never produced by tokenize().
std::vector<Token> tokenize(std::string_view text);

/// Inverse of tokenize() for ids < 256; reserved and out-of-range ids are
/// dropped.
std::string detokenize(std::span<const Token> tokens);

/// Token files hold unsigned 32-bit little-endian ids.
std::vector<Token> read_token_file(const std::filesystem::path& path);
void write_token_file(const std::filesystem::path& path, std::span<const Token> tokens);

std::string read_text_file(const std::filesystem::path& path);

/// ".tok" files are read as raw ids, anything else as UTF-8 text through the
/// byte tokenizer.
std::vector<Token> load_tokens(const std::filesystem::path& path);

} // namespace citrus
