#include "rtlsh/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace rtlsh::bench {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

const char* algo_name(Algo algo) { return algo == Algo::c2lsh ? "c2lsh" : "qalsh"; }

RatioResult ratio(std::span<const Neighbor> results, std::span<const Neighbor> truth,
                  std::size_t k) {
    if (results.size() < k)
        throw std::invalid_argument("ratio: only " + std::to_string(results.size()) +
                                    " results for k=" + std::to_string(k));
    if (truth.size() < k)
        throw std::invalid_argument("ratio: ground truth shorter than k=" + std::to_string(k));
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double true_dist = truth[i].dist;
        const double got_dist = results[i].dist;
        if (true_dist == 0.0) {
            if (got_dist == 0.0) {
                sum += 1.0;
            } else {
                return {0.0, true};
            }
        } else {
            sum += got_dist / true_dist;
        }
    }
    return {sum / static_cast<double>(k), false};
}

void export_csv(std::span<const BenchRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "algo,dataset,cardinality,k,mean_ratio,flagged_queries,indexing_ms,"
           "mean_query_ms,bytes_read,seeks,seed\n";
    for (const auto& r : records) {
        out << csv_field(r.algo) << ',' << csv_field(r.dataset) << ',' << r.cardinality << ','
            << r.k << ',' << fmt_double(r.mean_ratio) << ',' << r.flagged_queries << ','
            << fmt_double(r.indexing_ms) << ',' << fmt_double(r.mean_query_ms) << ','
            << r.bytes_read << ',' << r.seeks << ',' << r.seed << '\n';
    }
    if (!out) throw IoError("write failed on " + path.string());
}

namespace {

LshParams resolve_params(std::size_t sizing_n, double c, double w, double delta,
                         std::span<const std::size_t> ks, std::optional<double> beta_override) {
    if (ks.empty()) throw std::invalid_argument("bench: empty k list");
    const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
    auto params = derive_parameters(sizing_n, c, w, delta, max_k);
    if (beta_override) params.beta = *beta_override;
    return params;
}

// One query pass at a fixed k over an arbitrary query function.
template <typename QueryFn, typename IoFn>
BenchRecord measure_queries(const Dataset& data, const GroundTruth& truth, std::size_t query_count,
                            std::size_t k, QueryFn&& run_query, IoFn&& io_snapshot,
                            bool cast_float32) {
    BenchRecord rec;
    rec.k = k;
    const IoStats io_before = io_snapshot();
    double query_ms = 0.0;
    double ratio_sum = 0.0;
    std::size_t unflagged = 0;
    for (std::size_t q = 0; q < query_count; ++q) {
        const auto start = Clock::now();
        auto results = run_query(data.point(q), k);
        query_ms += ms_since(start);
        if (cast_float32)
            for (auto& nb : results) nb.dist = static_cast<double>(static_cast<float>(nb.dist));
        const auto r = ratio(results, truth.rows[q], k);
        if (r.flagged) {
            ++rec.flagged_queries;
        } else {
            ratio_sum += r.value;
            ++unflagged;
        }
    }
    const IoStats io_delta = io_snapshot() - io_before;
    rec.mean_ratio = unflagged > 0 ? ratio_sum / static_cast<double>(unflagged) : 0.0;
    rec.mean_query_ms = query_count > 0 ? query_ms / static_cast<double>(query_count) : 0.0;
    rec.bytes_read = io_delta.bytes_read;
    rec.seeks = io_delta.seeks;
    return rec;
}

} // namespace

std::vector<BenchRecord> run_batch(const BatchConfig& cfg) {
    if (!cfg.data || cfg.data->empty()) throw std::invalid_argument("run_batch: empty dataset");
    const std::size_t n = cfg.data->size();
    if (cfg.query_count > n)
        throw std::invalid_argument("run_batch: query count exceeds dataset size");
    auto params = resolve_params(cfg.sizing_n.value_or(n), cfg.c, cfg.w, cfg.delta, cfg.ks,
                                 cfg.beta_override);
    if (params.n < n) throw std::invalid_argument("run_batch: sizing cardinality below dataset size");
    const std::size_t max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());
    if (max_k > n) throw std::invalid_argument("run_batch: k exceeds dataset size");

    auto proj = generate_projections(cfg.data->dim(), params.m, cfg.w, cfg.seed);

    const auto build_start = Clock::now();
    std::optional<c2lsh::C2lshIndex> c2;
    std::optional<qalsh::QalshIndex> qa;
    if (cfg.algo == Algo::c2lsh)
        c2 = c2lsh::C2lshIndex::build(cfg.data, params, proj, cfg.out_dir, cfg.page_size);
    else
        qa = qalsh::QalshIndex::build(cfg.data, params, proj, cfg.out_dir, cfg.page_size, cfg.mode);
    const double build_ms = ms_since(build_start);

    GroundTruth computed;
    const GroundTruth* truth = cfg.gt;
    if (!truth) {
        computed = compute_ground_truth(*cfg.data, cfg.query_count, max_k);
        truth = &computed;
    }
    if (truth->rows.size() < cfg.query_count || truth->k < max_k)
        throw std::invalid_argument("run_batch: ground truth smaller than the query set");

    auto run_query = [&](std::span<const float> q, std::size_t k) {
        return c2 ? c2->query(q, k) : qa->query(q, k);
    };
    auto io_snapshot = [&]() { return c2 ? c2->io_stats() : qa->io_stats(); };

    std::vector<BenchRecord> records;
    for (std::size_t k : cfg.ks) {
        auto rec = measure_queries(*cfg.data, *truth, cfg.query_count, k, run_query, io_snapshot,
                                   cfg.gt != nullptr);
        rec.algo = algo_name(cfg.algo);
        rec.dataset = cfg.dataset_name;
        rec.cardinality = n;
        rec.indexing_ms = build_ms;
        rec.seed = cfg.seed;
        records.push_back(std::move(rec));
    }
    return records;
}

void StreamSchedule::validate(std::size_t dataset_size) const {
    if (checkpoints.empty()) throw std::invalid_argument("schedule: no checkpoints");
    if (preload != checkpoints.front())
        throw std::invalid_argument("schedule: preload must equal the first checkpoint");
    for (std::size_t i = 1; i < checkpoints.size(); ++i)
        if (checkpoints[i] <= checkpoints[i - 1])
            throw std::invalid_argument("schedule: checkpoints must be strictly ascending");
    if (checkpoints.back() > dataset_size)
        throw std::invalid_argument("schedule: final cardinality " +
                                    std::to_string(checkpoints.back()) +
                                    " exceeds dataset size " + std::to_string(dataset_size));
}

namespace {

std::shared_ptr<Dataset> prefix_dataset(const Dataset& data, std::size_t count) {
    auto out = std::make_shared<Dataset>(data.dim());
    for (std::size_t i = 0; i < count; ++i) out->append(data.point(i));
    return out;
}

std::vector<BenchRecord> run_stream_variant(const StreamConfig& cfg, const LshParams& params,
                                            const ProjectionSet& proj, bool naive) {
    const auto dir = naive ? cfg.out_dir / "naive" : cfg.out_dir;
    auto preload = prefix_dataset(*cfg.data, cfg.schedule.preload);

    const auto build_start = Clock::now();
    stream::StreamingIndex index(cfg.algo, preload, params, proj, cfg.policy, dir, cfg.page_size,
                                 cfg.mode);
    double segment_ms = ms_since(build_start);

    const std::size_t max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());
    std::vector<BenchRecord> records;
    for (std::size_t checkpoint : cfg.schedule.checkpoints) {
        if (checkpoint > index.size()) {
            const auto insert_start = Clock::now();
            for (std::size_t id = index.size(); id < checkpoint; ++id) {
                VectorRecord rec = cfg.data->record(id);
                if (naive)
                    index.naive_rebuild_insert(rec);
                else
                    index.insert(rec);
            }
            segment_ms = ms_since(insert_start);
        }
        const auto truth = compute_ground_truth(index.dataset(), cfg.query_count, max_k);
        auto run_query = [&](std::span<const float> q, std::size_t k) { return index.query(q, k); };
        auto io_snapshot = [&]() { return index.io_stats(); };
        for (std::size_t k : cfg.ks) {
            auto rec = measure_queries(index.dataset(), truth, cfg.query_count, k, run_query,
                                       io_snapshot, false);
            rec.algo = std::string(algo_name(cfg.algo)) + (naive ? "-naive" : "");
            rec.dataset = cfg.dataset_name;
            rec.cardinality = checkpoint;
            rec.indexing_ms = segment_ms;
            rec.seed = cfg.seed;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

} // namespace

std::vector<BenchRecord> run_stream(const StreamConfig& cfg) {
    if (!cfg.data || cfg.data->empty()) throw std::invalid_argument("run_stream: empty dataset");
    cfg.schedule.validate(cfg.data->size());
    if (cfg.query_count > cfg.schedule.preload)
        throw std::invalid_argument("run_stream: query set larger than the preload prefix");
    auto params = resolve_params(cfg.schedule.final_cardinality(), cfg.c, cfg.w, cfg.delta, cfg.ks,
                                 cfg.beta_override);
    auto proj = generate_projections(cfg.data->dim(), params.m, cfg.w, cfg.seed);

    auto records = run_stream_variant(cfg, params, proj, false);
    if (cfg.baseline) {
        auto naive_records = run_stream_variant(cfg, params, proj, true);
        records.insert(records.end(), naive_records.begin(), naive_records.end());
    }
    return records;
}

void make_ground_truth(const std::filesystem::path& data_path, std::size_t query_count,
                       std::size_t max_k, const std::filesystem::path& ids_path,
                       const std::filesystem::path& dists_path) {
    auto data = load_fvecs(data_path);
    if (query_count > data.size())
        throw std::invalid_argument("make_ground_truth: query count exceeds dataset size");
    if (max_k > data.size())
        throw std::invalid_argument("make_ground_truth: k exceeds dataset size");
    const auto gt = compute_ground_truth(data, query_count, max_k);
    save_ground_truth(gt, ids_path, dists_path);
}

Dataset synth_uniform(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    Dataset ds(dim);
    std::vector<float> point(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : point) v = static_cast<float>(uniform_unit(eng));
        ds.append(point);
    }
    return ds;
}

Dataset synth_clusters(std::size_t n, std::size_t dim, std::size_t n_clusters, std::uint64_t seed,
                       double sigma) {
    if (n_clusters < 1) throw std::invalid_argument("synth_clusters: need at least one cluster");
    std::mt19937_64 eng(seed);
    GaussianSource gauss(eng);
    std::vector<std::vector<double>> centers(n_clusters, std::vector<double>(dim));
    for (auto& center : centers)
        for (auto& v : center) v = uniform_unit(eng);
    Dataset ds(dim);
    std::vector<float> point(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& center = centers[eng() % n_clusters];
        for (std::size_t d = 0; d < dim; ++d)
            point[d] = static_cast<float>(center[d] + sigma * gauss.next());
        ds.append(point);
    }
    return ds;
}

} // namespace rtlsh::bench
