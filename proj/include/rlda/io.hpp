#pragma once

#include <string>
#include <string_view>

namespace rlda {

/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::string& path, std::string_view contents);

std::string read_file(const std::string& path);

}  // namespace rlda
