// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace citrus {

enum class ErrorKind {
    EmptyVector,
    Config,
    Shape,
    Vocab,
    Backend,
    Origin,
    Index,
    BudgetViolation,
    EmptyCache,
    EmptyDocument,
    Length,
    Numerical,
    Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI's
/// JSON error object) can dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), m_kind(kind) {}

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

} // namespace citrus
