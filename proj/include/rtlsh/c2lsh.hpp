#pragma once

#include "rtlsh/io_stats.hpp"
#include "rtlsh/manifest.hpp"
#include "rtlsh/projections.hpp"
#include "rtlsh/vectors.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace rtlsh::c2lsh {

/// One projection's index file: [int32 bucket_count] header, then
/// bucket_count x ([int32 bucket_number][int32 offset]) ascending by
/// bucket number, then the point ids as int32, grouped per bucket with
/// ids ascending. Offsets count ids into the payload (byte offset = x4).
/// The directory lives in memory; payload reads seek the file.
class ProjectionFile {
public:
    struct DirEntry {
        std::int32_t bucket;
        std::int32_t offset;

        friend bool operator==(const DirEntry&, const DirEntry&) = default;
    };

    ProjectionFile() = default;
    ProjectionFile(ProjectionFile&&) noexcept;
    ProjectionFile& operator=(ProjectionFile&&) noexcept;
    ~ProjectionFile();
    ProjectionFile(const ProjectionFile&) = delete;
    ProjectionFile& operator=(const ProjectionFile&) = delete;

    /// Writes the file from (bucket, id) pairs sorted ascending by
    /// (bucket, id). Bucket numbers must fit int32.
    static void write(const std::filesystem::path& path,
                      std::span<const std::pair<std::int64_t, std::uint32_t>> sorted_pairs);

    static ProjectionFile open(const std::filesystem::path& path);

    std::size_t bucket_count() const { return dir_.size(); }
    std::size_t id_count() const { return payload_count_; }
    std::int64_t min_bucket() const { return dir_.front().bucket; }
    std::int64_t max_bucket() const { return dir_.back().bucket; }
    const std::vector<DirEntry>& directory() const { return dir_; }

    /// Payload bytes a read of buckets [lo, hi] would touch. No I/O.
    std::uint64_t range_payload_bytes(std::int64_t lo, std::int64_t hi) const;

    /// Ids of all existing buckets in [lo, hi] via one directory-guided
    /// seek; `io` is charged the payload span touched.
    std::vector<std::uint32_t> read_bucket_range(std::int64_t lo, std::int64_t hi,
                                                 IoStats& io) const;

private:
    std::vector<DirEntry> dir_;
    std::size_t payload_count_ = 0;
    std::size_t payload_base_ = 0; // byte offset where ids start
    int fd_ = -1;

    // payload index range [first, last) for buckets in [lo, hi]
    std::pair<std::size_t, std::size_t> payload_span(std::int64_t lo, std::int64_t hi) const;
};

/// Collision-counting index: m projection files plus the shared manifest
/// and projection sidecar. Read-only once built; queries are safe
/// concurrently and own their counters.
class C2lshIndex {
public:
    static C2lshIndex build(std::shared_ptr<const Dataset> data, const LshParams& params,
                            const ProjectionSet& proj, const std::filesystem::path& dir,
                            std::size_t page_size = 4096);
    static C2lshIndex open(const std::filesystem::path& dir, std::shared_ptr<const Dataset> data);

    /// Top-k by true distance via collision counting with virtual
    /// rehashing. Requires 1 <= k <= size(); may return fewer than k
    /// when the candidate budget runs out first.
    std::vector<Neighbor> query(std::span<const float> q, std::size_t k) const;

    /// Page-size rule for the starting radius given the query's base
    /// bucket per projection.
    std::int64_t initial_radius(std::span<const std::int64_t> query_base_buckets) const;

    const ProjectionFile& file(std::size_t i) const { return files_[i]; }
    const LshParams& params() const { return params_; }
    const ProjectionSet& projections() const { return proj_; }
    std::size_t page_size() const { return page_size_; }
    std::size_t size() const { return n_; }
    const std::filesystem::path& dir() const { return dir_; }
    const Dataset& dataset() const { return *data_; }

    IoStats io_stats() const { return io_.snapshot(); }
    void reset_io_stats() const { io_.reset(); }
    void charge_io(const IoStats& s) const { io_.add(s); }

    static std::string file_name(std::size_t proj_index);

private:
    std::filesystem::path dir_;
    LshParams params_;
    ProjectionSet proj_;
    std::shared_ptr<const Dataset> data_;
    std::vector<ProjectionFile> files_;
    std::size_t page_size_ = 4096;
    std::size_t n_ = 0;
    mutable IoCounter io_;
};

} // namespace rtlsh::c2lsh
