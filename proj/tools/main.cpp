// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashfield/io.hpp"

int main(int argc, char** argv) { return hashfield::cli_main(argc, argv); }
