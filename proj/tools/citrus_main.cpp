// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/cli.hpp"

int main(int argc, char** argv) {
    return citrus::cli::run(argc, argv);
}
