#include "lakekernel/store.hpp"

#include "fsutil.hpp"
#include "lakekernel/error.hpp"
#include "lakekernel/hash.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace lake {

namespace fs = std::filesystem;

SnapshotStore::SnapshotStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_ / "objects", ec);
    if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + (root_ / "objects").string());
}

fs::path SnapshotStore::object_path(const SnapshotId& id) const {
    return root_ / "objects" / id.hex.substr(0, 2) / id.hex.substr(2);
}

SnapshotId SnapshotStore::put(const TableData& table) {
    std::string bytes = encode_table(table);
    SnapshotId id{sha256_hex(bytes)};
    fs::path path = object_path(id);
    if (fs::exists(path)) return id;

    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + path.parent_path().string());
    fs::path tmp = detail::temp_sibling(path);
    detail::atomic_write_file(tmp, bytes);
    // link() refuses to replace, so exactly one racing writer counts the write.
    if (::link(tmp.c_str(), path.c_str()) == 0) {
        writes_.fetch_add(1);
    } else if (errno != EEXIST) {
        int err = errno;
        ::unlink(tmp.c_str());
        throw Error(ErrorCode::StorageFailure, "link " + path.string() + ": " + std::strerror(err));
    }
    ::unlink(tmp.c_str());
    return id;
}

bool SnapshotStore::contains(const SnapshotId& id) const {
    return is_hex_digest(id.hex) && fs::exists(object_path(id));
}

TableData SnapshotStore::get(const SnapshotId& id) const {
    if (!is_hex_digest(id.hex)) throw Error(ErrorCode::NotFound, "malformed snapshot id '" + id.hex + "'");
    auto bytes = detail::read_file(object_path(id));
    if (!bytes) throw Error(ErrorCode::NotFound, "snapshot " + id.hex + " not found");
    reads_.fetch_add(1);
    if (sha256_hex(*bytes) != id.hex) {
        throw Error(ErrorCode::CorruptSnapshot, "snapshot " + id.hex + " content hash mismatch");
    }
    try {
        return decode_table(*bytes);
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptSnapshot, "snapshot " + id.hex + ": " + e.what());
    }
}

IoCounters SnapshotStore::io_counters() const {
    return {reads_.load(), writes_.load()};
}

} // namespace lake
