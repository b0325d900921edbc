// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace markboard {

/// Lowercase hex SHA-256 digest of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace markboard
