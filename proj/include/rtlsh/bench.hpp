#pragma once

#include "rtlsh/streaming.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rtlsh::bench {

using stream::Algo;
using stream::MergePolicy;

/// Mean over i of (returned i-th distance / true i-th distance).
/// A zero true distance contributes 1 when the returned distance is also
/// zero; otherwise the query is flagged and carries no mean value.
struct RatioResult {
    double value = 0.0;
    bool flagged = false;
};
RatioResult ratio(std::span<const Neighbor> results, std::span<const Neighbor> truth,
                  std::size_t k);

/// One benchmark measurement; one CSV row.
struct BenchRecord {
    std::string algo;
    std::string dataset;
    std::size_t cardinality = 0;
    std::size_t k = 0;
    double mean_ratio = 0.0; // over unflagged queries
    std::size_t flagged_queries = 0;
    double indexing_ms = 0.0;
    double mean_query_ms = 0.0;
    std::uint64_t bytes_read = 0;
    std::uint64_t seeks = 0;
    std::uint64_t seed = 0;
};

/// Fixed column order:
/// algo,dataset,cardinality,k,mean_ratio,flagged_queries,indexing_ms,
/// mean_query_ms,bytes_read,seeks,seed
void export_csv(std::span<const BenchRecord> records, const std::filesystem::path& path);

struct BatchConfig {
    Algo algo = Algo::c2lsh;
    std::string dataset_name = "data";
    std::shared_ptr<Dataset> data;
    std::size_t query_count = 50;
    std::vector<std::size_t> ks = {1, 10, 50};
    double c = 2.0;
    double w = 2.7191;
    double delta = 0.1;
    std::optional<double> beta_override;
    std::optional<std::size_t> sizing_n; // parameter cardinality; default data size
    std::size_t page_size = 4096;
    std::uint64_t seed = 1;
    qalsh::SearchMode mode = qalsh::SearchMode::corrected;
    std::filesystem::path out_dir;
    const GroundTruth* gt = nullptr; // preloaded file truth; computed fresh when null
};

/// Builds the batch index, resolves ground truth (its cost is excluded
/// from the timers), runs the query set per k, one record per k. The
/// queries are the first `query_count` dataset points.
std::vector<BenchRecord> run_batch(const BatchConfig& cfg);

/// Simulation checkpoints: preload is batch-built, the rest arrive one
/// at a time. preload must equal the first checkpoint.
struct StreamSchedule {
    std::size_t preload = 0;
    std::vector<std::size_t> checkpoints;

    std::size_t final_cardinality() const { return checkpoints.back(); }
    void validate(std::size_t dataset_size) const;
};

struct StreamConfig {
    Algo algo = Algo::c2lsh;
    std::string dataset_name = "data";
    std::shared_ptr<Dataset> data;
    StreamSchedule schedule;
    std::size_t query_count = 50;
    std::vector<std::size_t> ks = {1, 10, 50};
    double c = 2.0;
    double w = 2.7191;
    double delta = 0.1;
    std::optional<double> beta_override;
    std::size_t page_size = 4096;
    std::uint64_t seed = 1;
    qalsh::SearchMode mode = qalsh::SearchMode::corrected;
    MergePolicy policy;
    bool baseline = false; // also run the naive-rebuild reference
    std::filesystem::path out_dir;
};

/// Parameters are sized for the schedule's final cardinality. At each
/// checkpoint the query set runs against the combined index; insert time
/// between checkpoints is attributed to the following checkpoint's
/// records. With `baseline`, the naive-rebuild path runs the same
/// schedule and emits records with "-naive" appended to the algo name.
std::vector<BenchRecord> run_stream(const StreamConfig& cfg);

/// Ground truth files for the first `query_count` points: ids in ivecs
/// layout, distances in fvecs layout.
void make_ground_truth(const std::filesystem::path& data_path, std::size_t query_count,
                       std::size_t max_k, const std::filesystem::path& ids_path,
                       const std::filesystem::path& dists_path);

/// Synthetic datasets so benchmarks run without the published corpora.
Dataset synth_uniform(std::size_t n, std::size_t dim, std::uint64_t seed);
Dataset synth_clusters(std::size_t n, std::size_t dim, std::size_t n_clusters,
                       std::uint64_t seed, double sigma = 0.1);

const char* algo_name(Algo algo);

} // namespace rtlsh::bench
