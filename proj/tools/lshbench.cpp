#include "CLI11.hpp"

#include "rtlsh/bench.hpp"

#include <iostream>

using namespace rtlsh;
using bench::Algo;

namespace {

struct CommonOpts {
    std::string algo = "c2lsh";
    std::string data;
    std::string out = "index";
    double c = 2.0;
    double w = 2.7191;
    double delta = 0.1;
    double beta = -1.0; // < 0: derived
    std::vector<std::size_t> ks = {1, 10, 50};
    std::size_t queries = 50;
    std::size_t page_size = 4096;
    std::uint64_t seed = 1;
    std::string mode = "corrected";
    std::string csv;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_ks) {
    cmd->add_option("--algo", opts.algo, "index design")->check(CLI::IsMember({"c2lsh", "qalsh"}));
    cmd->add_option("--data", opts.data, "dataset in fvecs layout")->required();
    cmd->add_option("--out", opts.out, "index directory");
    cmd->add_option("--c", opts.c, "approximation ratio");
    cmd->add_option("--w", opts.w, "bucket width");
    cmd->add_option("--delta", opts.delta, "failure probability");
    cmd->add_option("--beta", opts.beta, "candidate-fraction budget (default: derived)");
    if (with_ks) cmd->add_option("--k", opts.ks, "top-k values")->delimiter(',');
    cmd->add_option("--queries", opts.queries, "query count (first points of the dataset)");
    cmd->add_option("--page-size", opts.page_size, "page size in bytes");
    cmd->add_option("--seed", opts.seed, "projection seed");
    cmd->add_option("--mode", opts.mode, "qalsh search mode")
        ->check(CLI::IsMember({"legacy", "corrected"}));
    cmd->add_option("--csv", opts.csv, "write records to this CSV file");
}

Algo parse_algo(const std::string& name) {
    return name == "qalsh" ? Algo::qalsh : Algo::c2lsh;
}

qalsh::SearchMode parse_mode(const std::string& name) {
    return name == "legacy" ? qalsh::SearchMode::legacy : qalsh::SearchMode::corrected;
}

stream::MergePolicy parse_policy(const std::string& text) {
    stream::MergePolicy policy; // defaults when the flag is absent
    if (text.empty()) return policy;
    policy.max_points.reset();
    policy.max_fraction.reset();
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--policy", "expected points=<N>,frac=<F>");
        const auto key = part.substr(0, eq);
        const auto value = part.substr(eq + 1);
        if (key == "points")
            policy.max_points = std::stoull(value);
        else if (key == "frac")
            policy.max_fraction = std::stod(value);
        else
            throw CLI::ValidationError("--policy", "unknown trigger '" + key + "'");
    }
    return policy;
}

void emit(const std::vector<bench::BenchRecord>& records, const std::string& csv) {
    for (const auto& r : records)
        std::cout << r.algo << " " << r.dataset << " n=" << r.cardinality << " k=" << r.k
                  << " ratio=" << r.mean_ratio << " flagged=" << r.flagged_queries
                  << " index_ms=" << r.indexing_ms << " query_ms=" << r.mean_query_ms
                  << " bytes=" << r.bytes_read << " seeks=" << r.seeks << " seed=" << r.seed
                  << "\n";
    if (!csv.empty()) bench::export_csv(records, csv);
}

std::string dataset_label(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LSH index benchmark harness"};
    app.require_subcommand(1);

    // synth
    struct {
        std::size_t n = 10000;
        std::size_t dim = 32;
        std::string kind = "clusters";
        std::size_t clusters = 20;
        double sigma = 0.1;
        std::uint64_t seed = 1;
        std::string out = "data.fvecs";
    } synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--n", synth.n, "point count");
    synth_cmd->add_option("--dim", synth.dim, "dimensionality");
    synth_cmd->add_option("--kind", synth.kind, "distribution")
        ->check(CLI::IsMember({"uniform", "clusters"}));
    synth_cmd->add_option("--clusters", synth.clusters, "cluster count");
    synth_cmd->add_option("--sigma", synth.sigma, "cluster spread");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--out", synth.out, "output fvecs file")->required();

    // gt
    struct {
        std::string data;
        std::size_t queries = 50;
        std::size_t k = 50;
        std::string out = ".";
    } gt;
    auto* gt_cmd = app.add_subcommand("gt", "write ground-truth files");
    gt_cmd->add_option("--data", gt.data, "dataset in fvecs layout")->required();
    gt_cmd->add_option("--queries", gt.queries, "query count");
    gt_cmd->add_option("--k", gt.k, "neighbors per query");
    gt_cmd->add_option("--out", gt.out, "output directory");

    // build
    CommonOpts build_opts;
    std::size_t sizing_n = 0;
    auto* build_cmd = app.add_subcommand("build", "build a batch index");
    add_common(build_cmd, build_opts, false);
    build_cmd->add_option("--sizing-n", sizing_n,
                          "derive parameters for this cardinality (default: dataset size)");

    // query
    CommonOpts query_opts;
    std::string gt_dir;
    bool no_gt = false;
    auto* query_cmd = app.add_subcommand("query", "build, query and report the ratio");
    add_common(query_cmd, query_opts, true);
    query_cmd->add_option("--gt", gt_dir, "directory with gt_ids.ivecs / gt_dists.fvecs");
    query_cmd->add_flag("--no-gt", no_gt, "never compute ground truth in-process");

    // stream
    CommonOpts stream_opts;
    std::vector<std::size_t> checkpoints;
    std::string policy_text;
    bool baseline = false;
    auto* stream_cmd = app.add_subcommand("stream", "run the streaming simulation");
    add_common(stream_cmd, stream_opts, true);
    stream_cmd->add_option("--schedule", checkpoints, "cardinality checkpoints (first = preload)")
        ->required()
        ->delimiter(',');
    stream_cmd->add_option("--policy", policy_text, "merge policy, points=<N>,frac=<F>");
    stream_cmd->add_flag("--baseline", baseline, "also run the naive rebuild-per-insert path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            Dataset ds = synth.kind == "uniform"
                             ? bench::synth_uniform(synth.n, synth.dim, synth.seed)
                             : bench::synth_clusters(synth.n, synth.dim, synth.clusters,
                                                     synth.seed, synth.sigma);
            write_fvecs(ds, synth.out);
            std::cout << "wrote " << synth.n << " x " << synth.dim << " points to " << synth.out
                      << "\n";
        } else if (gt_cmd->parsed()) {
            std::filesystem::create_directories(gt.out);
            const auto ids = std::filesystem::path(gt.out) / "gt_ids.ivecs";
            const auto dists = std::filesystem::path(gt.out) / "gt_dists.fvecs";
            bench::make_ground_truth(gt.data, gt.queries, gt.k, ids, dists);
            std::cout << "wrote " << ids.string() << " and " << dists.string() << "\n";
        } else if (build_cmd->parsed()) {
            auto data = std::make_shared<Dataset>(load_fvecs(build_opts.data));
            const std::size_t n = sizing_n > 0 ? sizing_n : data->size();
            auto params = derive_parameters(n, build_opts.c, build_opts.w, build_opts.delta,
                                            *std::max_element(build_opts.ks.begin(),
                                                              build_opts.ks.end()));
            if (build_opts.beta >= 0.0) params.beta = build_opts.beta;
            auto proj = generate_projections(data->dim(), params.m, build_opts.w, build_opts.seed);
            if (parse_algo(build_opts.algo) == Algo::c2lsh)
                (void)c2lsh::C2lshIndex::build(data, params, proj, build_opts.out,
                                               build_opts.page_size);
            else
                (void)qalsh::QalshIndex::build(data, params, proj, build_opts.out,
                                               build_opts.page_size,
                                               parse_mode(build_opts.mode));
            std::cout << "built " << build_opts.algo << " index over " << data->size()
                      << " points (m=" << params.m << ", l=" << params.l << ") in "
                      << build_opts.out << "\n";
        } else if (query_cmd->parsed()) {
            bench::BatchConfig cfg;
            cfg.algo = parse_algo(query_opts.algo);
            cfg.dataset_name = dataset_label(query_opts.data);
            cfg.data = std::make_shared<Dataset>(load_fvecs(query_opts.data));
            cfg.query_count = query_opts.queries;
            cfg.ks = query_opts.ks;
            cfg.c = query_opts.c;
            cfg.w = query_opts.w;
            cfg.delta = query_opts.delta;
            if (query_opts.beta >= 0.0) cfg.beta_override = query_opts.beta;
            cfg.page_size = query_opts.page_size;
            cfg.seed = query_opts.seed;
            cfg.mode = parse_mode(query_opts.mode);
            cfg.out_dir = query_opts.out;
            GroundTruth loaded;
            if (!gt_dir.empty()) {
                loaded = load_ground_truth(std::filesystem::path(gt_dir) / "gt_ids.ivecs",
                                           std::filesystem::path(gt_dir) / "gt_dists.fvecs");
                cfg.gt = &loaded;
            } else if (no_gt) {
                throw std::invalid_argument("--no-gt set but no --gt directory given");
            }
            emit(bench::run_batch(cfg), query_opts.csv);
        } else if (stream_cmd->parsed()) {
            bench::StreamConfig cfg;
            cfg.algo = parse_algo(stream_opts.algo);
            cfg.dataset_name = dataset_label(stream_opts.data);
            cfg.data = std::make_shared<Dataset>(load_fvecs(stream_opts.data));
            cfg.schedule.checkpoints = checkpoints;
            cfg.schedule.preload = checkpoints.empty() ? 0 : checkpoints.front();
            cfg.query_count = stream_opts.queries;
            cfg.ks = stream_opts.ks;
            cfg.c = stream_opts.c;
            cfg.w = stream_opts.w;
            cfg.delta = stream_opts.delta;
            if (stream_opts.beta >= 0.0) cfg.beta_override = stream_opts.beta;
            cfg.page_size = stream_opts.page_size;
            cfg.seed = stream_opts.seed;
            cfg.mode = parse_mode(stream_opts.mode);
            cfg.policy = parse_policy(policy_text);
            cfg.baseline = baseline;
            cfg.out_dir = stream_opts.out;
            emit(bench::run_stream(cfg), stream_opts.csv);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
