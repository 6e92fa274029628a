#pragma once

#include <string>
#include <string_view>

namespace cascade {

// Writes to a sibling temp file and renames it over `path`.
// Throws IoError if the destination is not writable.
void write_file_atomic(const std::string& path, std::string_view contents);

std::string read_file(const std::string& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace cascade
