// SPDX-License-Identifier: Apache-2.0

#include "cli_app.hpp"

int main(int argc, char** argv) { return markboard::cli::cli_main(argc, argv); }
