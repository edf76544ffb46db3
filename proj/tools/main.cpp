// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmseek/cli.hpp"

int main(int argc, char** argv) { return mmseek::cli::run(argc, argv); }
