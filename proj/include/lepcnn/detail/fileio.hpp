#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lepcnn::detail {

// Throws std::system_error on I/O failure.
std::vector<uint8_t> read_file(const std::filesystem::path& path);

// Writes to a temporary sibling, fsyncs it, renames over `path` and fsyncs
// the directory.
void write_file_durable(const std::filesystem::path& path,
                        std::span<const uint8_t> data);

void fsync_directory(const std::filesystem::path& dir);

}  // namespace lepcnn::detail
