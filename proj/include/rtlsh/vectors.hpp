#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtlsh {

/// Raised on malformed or truncated binary vector files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a file cannot be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One point: id assigned by arrival order (0-based) plus its coordinates.
struct VectorRecord {
    std::uint32_t id = 0;
    std::vector<float> coords;
};

/// An ordered collection of equal-dimension points. Record order is load
/// order; ids are implicit and contiguous from 0. Immutable once built
/// except for append(), which assigns the next id.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const { return data_.empty(); }

    std::span<const float> point(std::size_t id) const {
        return {data_.data() + id * dim_, dim_};
    }

    /// Appends a point; its id is the previous size(). An empty dataset
    /// adopts the dimension of the first appended point.
    std::uint32_t append(std::span<const float> coords);

    VectorRecord record(std::size_t id) const {
        auto p = point(id);
        return {static_cast<std::uint32_t>(id), {p.begin(), p.end()}};
    }

    const std::vector<float>& raw() const { return data_; }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

/// A neighbor candidate or ground-truth entry. Ordered by (dist, id).
struct Neighbor {
    std::uint32_t id = 0;
    double dist = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.id < b.id;
    }
};

/// Exact k-NN lists for a query set, ascending by distance, ties by id.
struct GroundTruth {
    std::size_t k = 0;
    std::vector<std::vector<Neighbor>> rows;
};

/// Reads an fvecs file: repeated [int32 LE dim][dim x float32 LE].
/// Throws FormatError naming the byte offset on truncation, and on
/// records whose dimension differs from the first.
Dataset load_fvecs(const std::filesystem::path& path);

/// Writes the dataset in fvecs layout; load_fvecs(write_fvecs(d)) == d.
void write_fvecs(const Dataset& dataset, const std::filesystem::path& path);

/// ivecs: same framing as fvecs with int32 payload.
std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path);
void write_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                 const std::filesystem::path& path);

/// Euclidean distance, accumulated in extended precision.
/// Throws std::invalid_argument on dimension mismatch.
double euclidean(std::span<const float> a, std::span<const float> b);

/// Exact k nearest neighbors by full scan; the ground-truth oracle.
/// Requires 1 <= k <= dataset.size().
std::vector<Neighbor> brute_force_knn(const Dataset& dataset,
                                      std::span<const float> query,
                                      std::size_t k);

/// Ground truth for the first `query_count` dataset points, k entries each.
GroundTruth compute_ground_truth(const Dataset& dataset,
                                 std::size_t query_count,
                                 std::size_t k);

/// Persists/loads ground truth as paired files: ids in ivecs layout,
/// distances in fvecs layout (one record per query).
void save_ground_truth(const GroundTruth& gt,
                       const std::filesystem::path& ids_path,
                       const std::filesystem::path& dists_path);
GroundTruth load_ground_truth(const std::filesystem::path& ids_path,
                              const std::filesystem::path& dists_path);

} // namespace rtlsh
