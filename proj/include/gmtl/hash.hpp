#pragma once

#include <string>
#include <string_view>

namespace gmtl {

// Lowercase hex SHA-256 digests.
std::string sha256_hex(std::string_view bytes);
// Throws kNotFound when the file cannot be opened.
std::string sha256_file(const std::string& path);

}  // namespace gmtl
