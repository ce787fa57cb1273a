#pragma once

#include "rtlsh/io_stats.hpp"
#include "rtlsh/manifest.hpp"
#include "rtlsh/projections.hpp"
#include "rtlsh/vectors.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace rtlsh::qalsh {

/// Node capacities for a page size, per the documented accounting:
/// a leaf page spends 4 bytes per entry id after a 24-byte header, an
/// index page 8 bytes per (key, child) entry after a 16-byte header.
/// 4096 -> (1018, 510).
struct NodeCapacities {
    std::size_t leaf;
    std::size_t index;
};
NodeCapacities node_capacities(std::size_t page_size);

enum class SearchMode { legacy, corrected };

/// Paged B+-tree over one projection's sorted (hash value, id) array,
/// built bottom-up: leaves packed left-to-right at full capacity, index
/// levels packed the same way over the children's minimum hash values.
///
/// Persistence splits the pair array across two files: proj_<i>.qt holds
/// the header page plus one page per node (leaf pages store the ids,
/// index pages float32 keys and child ordinals), and a sibling
/// proj_<i>.qv holds the exact float64 hash values in sorted order.
/// Node keys are rebuilt from the value file on load, so a round trip
/// is exact.
///
/// Query-time node accesses are charged to the tree's I/O counters at
/// page granularity whether the tree is memory- or file-resident.
class QalshTree {
public:
    struct IndexNode {
        std::vector<double> keys;         // child minimum hash values
        std::vector<std::int32_t> children; // ordinals within the level below
    };

    QalshTree() = default;

    /// Bulk build from pairs sorted ascending by (hash value, id).
    static QalshTree build(std::span<const std::pair<double, std::uint32_t>> sorted_pairs,
                           std::size_t page_size);

    void save(const std::filesystem::path& qt_path) const;
    static QalshTree load(const std::filesystem::path& qt_path);

    std::size_t size() const { return values_.size(); }
    std::size_t page_size() const { return page_size_; }
    NodeCapacities capacities() const { return node_capacities(page_size_); }

    std::size_t leaf_count() const;
    std::size_t index_node_count() const; // all index nodes, root included
    std::size_t nonroot_index_node_count() const;
    std::size_t level_count() const { return levels_.size(); } // index levels above leaves
    std::size_t node_count() const { return leaf_count() + index_node_count(); }

    const std::vector<double>& values() const { return values_; }
    const std::vector<std::uint32_t>& ids() const { return ids_; }
    const std::vector<std::vector<IndexNode>>& index_levels() const { return levels_; }

    std::size_t leaf_of(std::size_t position) const;
    std::size_t leaf_begin(std::size_t leaf) const;
    std::size_t leaf_end(std::size_t leaf) const;
    std::size_t leaf_entry_count(std::size_t leaf) const;
    double leaf_min_key(std::size_t leaf) const { return values_[leaf_begin(leaf)]; }

    /// Leaf containing hval's key range plus the insertion position
    /// within it (values below the global minimum map to the first leaf,
    /// above the maximum to the last). Errors on an empty tree.
    struct LeafPos {
        std::size_t leaf;
        std::size_t pos;
    };
    LeafPos locate_leaf(double hval) const;

    /// Global insertion position: first entry with value >= hval.
    std::size_t lower_position(double hval) const;
    /// First entry with value > hval.
    std::size_t upper_position(double hval) const;

    /// Root-to-leaf descent charged one page per index node touched.
    /// Returns the leaf the key-range descent lands on.
    std::size_t descend(double hval) const;
    void charge_page() const { io_.charge(page_size_); }

    IoStats io_stats() const { return io_.snapshot(); }
    void reset_io_stats() const { io_.reset(); }

    friend bool operator==(const QalshTree& a, const QalshTree& b) {
        return a.page_size_ == b.page_size_ && a.values_ == b.values_ && a.ids_ == b.ids_ &&
               a.levels_size_equal(b);
    }

private:
    std::size_t page_size_ = 4096;
    std::vector<double> values_;
    std::vector<std::uint32_t> ids_;
    std::vector<std::vector<IndexNode>> levels_; // levels_[0] sits over the leaves

    bool levels_size_equal(const QalshTree& other) const;
    void rebuild_index_levels();

    mutable IoCounter io_;
};

/// Incremental range search around one query hash value; cursor state
/// persists across radii.
///
/// corrected: exact value-range semantics over [q - t, q + t] with
/// t = w*R/2, one backward and one forward cursor advancing monotonically;
/// each touched page is charged once per scan.
///
/// legacy: reproduces the documented defective behavior: node-granular
/// bidirectional retrieval keyed on node minimum values, starting from
/// the node after the query's when the query sits at its end, re-seeking
/// (and re-charging) the whole node range every radius.
class RangeScan {
public:
    RangeScan(const QalshTree& tree, double q_hval, SearchMode mode, double w);

    /// Ids newly covered at this schedule radius (first call: everything
    /// the mode covers at that radius). Never repeats an id.
    std::vector<std::uint32_t> advance(std::int64_t radius);

    bool exhausted() const;

private:
    const QalshTree& tree_;
    double q_;
    SearchMode mode_;
    double w_;

    // corrected-mode cursors: covered entries are (back_, fwd_) exclusive
    std::ptrdiff_t back_ = -1;
    std::size_t fwd_ = 0;
    std::ptrdiff_t charged_lo_ = -1; // charged leaf range, -1 = none
    std::ptrdiff_t charged_hi_ = -1;

    // legacy-mode covered leaves
    std::size_t start_leaf_ = 0;
    std::ptrdiff_t cov_lo_ = -1;
    std::ptrdiff_t cov_hi_ = -1;

    void touch_leaf(std::size_t leaf);
    std::vector<std::uint32_t> advance_corrected(std::int64_t radius);
    std::vector<std::uint32_t> advance_legacy(std::int64_t radius);
};

/// Single-shot range query at one radius (a fresh scan).
std::vector<std::uint32_t> range_collect(const QalshTree& tree, double q_hval,
                                         std::int64_t radius, SearchMode mode, double w);

/// Query-aware index: one tree per projection over the raw projection
/// values (no offset, no flooring), queried by collision counting across
/// the m trees.
class QalshIndex {
public:
    static QalshIndex build(std::shared_ptr<const Dataset> data, const LshParams& params,
                            const ProjectionSet& proj, const std::filesystem::path& dir,
                            std::size_t page_size = 4096,
                            SearchMode mode = SearchMode::corrected);
    static QalshIndex open(const std::filesystem::path& dir, std::shared_ptr<const Dataset> data,
                           SearchMode mode = SearchMode::corrected);

    std::vector<Neighbor> query(std::span<const float> q, std::size_t k) const;

    const QalshTree& tree(std::size_t i) const { return trees_[i]; }
    const LshParams& params() const { return params_; }
    const ProjectionSet& projections() const { return proj_; }
    SearchMode mode() const { return mode_; }
    void set_mode(SearchMode mode) { mode_ = mode; }
    std::size_t page_size() const { return page_size_; }
    std::size_t size() const { return n_; }
    const std::filesystem::path& dir() const { return dir_; }
    const Dataset& dataset() const { return *data_; }

    IoStats io_stats() const;
    void reset_io_stats() const;

    static std::string tree_name(std::size_t proj_index);

private:
    std::filesystem::path dir_;
    LshParams params_;
    ProjectionSet proj_;
    std::shared_ptr<const Dataset> data_;
    std::vector<QalshTree> trees_;
    SearchMode mode_ = SearchMode::corrected;
    std::size_t page_size_ = 4096;
    std::size_t n_ = 0;
};

} // namespace rtlsh::qalsh
