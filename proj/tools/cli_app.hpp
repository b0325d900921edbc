// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace markboard::cli {

// Exit code contract:
//   0  success (verify: leak flagged)
//   1  verify: not flagged / training phase failure
//   2  usage, schema, or load errors
//   3  duplicate user
//   4  signature space exhausted
int cli_main(const std::vector<std::string>& args);
int cli_main(int argc, char** argv);

}  // namespace markboard::cli
