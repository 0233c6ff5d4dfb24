#include "fsutil.hpp"

#include "lakekernel/error.hpp"
#include "lakekernel/hash.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lake::detail {

namespace fs = std::filesystem;

std::optional<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

fs::path temp_sibling(const fs::path& path) {
    static std::atomic<std::uint64_t> counter{0};
    return path.parent_path() / (".tmp." + path.filename().string() + "." +
                                 std::to_string(::getpid()) + "." +
                                 std::to_string(counter.fetch_add(1)));
}

namespace {

void write_all(int fd, std::string_view data, const fs::path& path) {
    while (!data.empty()) {
        ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::StorageFailure,
                        "write " + path.string() + ": " + std::strerror(errno));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

} // namespace

void atomic_write_file(const fs::path& path, std::string_view contents) {
    fs::path tmp = temp_sibling(path);
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::StorageFailure, "open " + tmp.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, contents, tmp);
    } catch (...) {
        ::close(fd);
        ::unlink(tmp.c_str());
        throw;
    }
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        int err = errno;
        ::unlink(tmp.c_str());
        throw Error(ErrorCode::StorageFailure, "rename " + path.string() + ": " + std::strerror(err));
    }
}

void append_line(const fs::path& path, std::string_view line) {
    std::string buf(line);
    buf.push_back('\n');
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::StorageFailure, "open " + path.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, buf, path);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

FileLock::FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw Error(ErrorCode::StorageFailure, "open " + path.string() + ": " + std::strerror(errno));
    }
    while (::flock(fd_, LOCK_EX) != 0) {
        if (errno != EINTR) {
            int err = errno;
            ::close(fd_);
            throw Error(ErrorCode::StorageFailure, "flock " + path.string() + ": " + std::strerror(err));
        }
    }
}

FileLock::~FileLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

} // namespace lake::detail
