// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/error.hpp"

namespace citrus {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::EmptyVector: return "EmptyVector";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Shape: return "ShapeError";
    case ErrorKind::Vocab: return "VocabError";
    case ErrorKind::Backend: return "BackendError";
    case ErrorKind::Origin: return "OriginError";
    case ErrorKind::Index: return "IndexError";
    case ErrorKind::BudgetViolation: return "BudgetViolation";
    case ErrorKind::EmptyCache: return "EmptyCache";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::Length: return "LengthError";
    case ErrorKind::Numerical: return "NumericalError";
    case ErrorKind::Io: return "IoError";
    }
    return "Unknown";
}

void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace citrus
