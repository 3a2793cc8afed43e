#pragma once

#include <filesystem>

#include "l3tc/common.hpp"

namespace l3tc {

Bytes read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place, so a
/// failed run never leaves a partial output behind.
void write_file_atomic(const std::filesystem::path& path, ByteView data);

}  // namespace l3tc
