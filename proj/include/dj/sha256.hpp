#pragma once

#include <string>

namespace dj {

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& data);

// SHA-256 of a file's bytes. Throws FormatError if unreadable.
std::string sha256_file(const std::string& path);

} // namespace dj
