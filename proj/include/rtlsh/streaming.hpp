#pragma once

#include "rtlsh/c2lsh.hpp"
#include "rtlsh/qalsh.hpp"

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <vector>

namespace rtlsh::stream {

enum class Algo { c2lsh, qalsh };

/// When the in-memory delta is merged into the on-disk main component:
/// at max_points entries, or at max_fraction of the main size, whichever
/// triggers first. At least one trigger must be configured.
struct MergePolicy {
    std::optional<std::size_t> max_points = 4096;
    std::optional<double> max_fraction = 0.1;

    bool triggered(std::size_t delta_size, std::size_t main_size) const {
        if (max_points && delta_size >= *max_points) return true;
        if (max_fraction && static_cast<double>(delta_size) >=
                                *max_fraction * static_cast<double>(main_size))
            return true;
        return false;
    }
};

/// Two-component index: an on-disk main component (batch-built) plus an
/// insert-optimized in-memory delta per projection that absorbs arrivals
/// and merges into the main component under the policy.
///
/// Parameters are sized for the final expected cardinality, so the
/// projection count never changes at runtime; arrivals beyond that
/// cardinality are rejected. One writer (insert/merge) and any number of
/// concurrent readers; readers see either the pre- or post-merge state,
/// never a torn one.
class StreamingIndex {
public:
    StreamingIndex(Algo algo, std::shared_ptr<Dataset> preload, const LshParams& params,
                   const ProjectionSet& proj, MergePolicy policy,
                   const std::filesystem::path& dir, std::size_t page_size = 4096,
                   qalsh::SearchMode mode = qalsh::SearchMode::corrected);
    ~StreamingIndex();

    StreamingIndex(const StreamingIndex&) = delete;
    StreamingIndex& operator=(const StreamingIndex&) = delete;

    /// Hashes the point into all m delta structures; no main-component
    /// I/O. The record's id must be the next arrival id. Runs merge()
    /// before returning if the policy fires.
    void insert(const VectorRecord& point);

    /// Folds the delta into the main component (write-new-then-swap) and
    /// empties it. No-op on an empty delta. Queries before and after see
    /// the same point set.
    void merge();

    /// Collision counting across both components per projection with a
    /// single counter per id; termination evaluates against the combined
    /// cardinality.
    std::vector<Neighbor> query(std::span<const float> q, std::size_t k) const;

    /// Reference baseline: append the point and rebuild the whole main
    /// component from scratch.
    void naive_rebuild_insert(const VectorRecord& point);

    /// Merges any pending delta so the on-disk state is a valid batch
    /// index. Called by the destructor.
    void close();

    std::size_t size() const;
    std::size_t main_size() const;
    std::size_t delta_size() const;
    std::size_t final_cardinality() const { return params_.n; }
    IoStats io_stats() const;
    const Dataset& dataset() const { return *data_; }
    const LshParams& params() const { return params_; }

private:
    void insert_unlocked(const VectorRecord& point);
    void merge_unlocked();
    void rebuild_main_unlocked();
    std::vector<Neighbor> query_c2lsh(std::span<const float> q, std::size_t k) const;
    std::vector<Neighbor> query_qalsh(std::span<const float> q, std::size_t k) const;

    mutable std::shared_mutex mutex_;
    Algo algo_;
    LshParams params_;
    ProjectionSet proj_;
    MergePolicy policy_;
    std::filesystem::path dir_;
    std::size_t page_size_;
    qalsh::SearchMode mode_;
    std::shared_ptr<Dataset> data_;

    std::optional<c2lsh::C2lshIndex> main_c2_;
    std::optional<qalsh::QalshIndex> main_qa_;
    std::size_t main_n_ = 0;

    // delta structures, one per projection: ordered by bucket number for
    // the bucketed design, by raw hash value for the query-aware one
    std::vector<std::map<std::int64_t, std::vector<std::uint32_t>>> delta_buckets_;
    std::vector<std::multimap<double, std::uint32_t>> delta_values_;
    std::size_t delta_n_ = 0;

    // counters accumulated before the current main component existed
    // (merges replace the main object; totals must stay monotone)
    IoStats io_base_;
};

} // namespace rtlsh::stream
