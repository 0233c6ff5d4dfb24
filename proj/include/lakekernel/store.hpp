#pragma once

#include "lakekernel/table.hpp"

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>

namespace lake {

/// 64-char lowercase hex digest, tagged so snapshot and commit ids don't mix.
template <class Tag>
struct Digest {
    std::string hex;

    auto operator<=>(const Digest&) const = default;
    bool empty() const { return hex.empty(); }
};

struct SnapshotTag {};
using SnapshotId = Digest<SnapshotTag>;

struct IoCounters {
    std::uint64_t data_reads = 0;
    std::uint64_t data_writes = 0;

    bool operator==(const IoCounters&) const = default;
};

/// Append-only content-addressed snapshot storage rooted at a directory.
/// Layout: `<root>/objects/<first 2 hex>/<remaining 62 hex>`.
///
/// Safe for concurrent callers, including other processes: objects are
/// written to a temp file and hard-linked into place, so a reader never sees
/// a partial object and racing writers of the same content are benign.
class SnapshotStore {
public:
    explicit SnapshotStore(std::filesystem::path root);

    SnapshotStore(const SnapshotStore&) = delete;
    SnapshotStore& operator=(const SnapshotStore&) = delete;

    SnapshotId put(const TableData& table);
    TableData get(const SnapshotId& id) const;
    bool contains(const SnapshotId& id) const;

    /// Snapshot-content reads/writes since this store was opened.
    IoCounters io_counters() const;

    std::filesystem::path object_path(const SnapshotId& id) const;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    mutable std::atomic<std::uint64_t> reads_{0};
    std::atomic<std::uint64_t> writes_{0};
};

} // namespace lake
