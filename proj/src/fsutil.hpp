#pragma once

// Internal file helpers shared by the on-disk modules.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace lake::detail {

std::optional<std::string> read_file(const std::filesystem::path& path);

/// Write to a sibling temp file, then rename over `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);

/// Append one line with O_APPEND (single write call).
void append_line(const std::filesystem::path& path, std::string_view line);

/// Unique sibling temp name for `path`.
std::filesystem::path temp_sibling(const std::filesystem::path& path);

/// Exclusive advisory lock (flock) held for the object's lifetime. Each
/// instance opens its own descriptor, so it serializes threads as well as
/// processes.
class FileLock {
public:
    explicit FileLock(const std::filesystem::path& path);
    ~FileLock();

    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

} // namespace lake::detail
