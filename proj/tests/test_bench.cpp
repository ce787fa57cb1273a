#include "doctest.h"

#include "rtlsh/bench.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace rtlsh;
using namespace rtlsh::bench;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "rtlsh_bench_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<Neighbor> row(std::initializer_list<double> dists) {
    std::vector<Neighbor> out;
    std::uint32_t id = 0;
    for (double d : dists) out.push_back({id++, d});
    return out;
}

// independent evaluation of the mean-of-quotients metric
long double ratio_oracle(std::span<const Neighbor> results, std::span<const Neighbor> truth,
                         std::size_t k) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < k; ++i)
        acc += (long double)results[i].dist / (long double)truth[i].dist;
    return acc / (long double)k;
}

std::vector<std::vector<std::string>> parse_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char ch = line[i];
            if (quoted) {
                if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else if (ch == '"') {
                    quoted = false;
                } else {
                    field += ch;
                }
            } else if (ch == '"') {
                quoted = true;
            } else if (ch == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else {
                field += ch;
            }
        }
        fields.push_back(std::move(field));
        rows.push_back(std::move(fields));
    }
    return rows;
}

} // namespace

TEST_CASE("ratio: identity and the worked example") {
    auto truth = row({1.0, 4.0});
    CHECK(ratio(row({1.0, 4.0}), truth, 2).value == 1.0);
    // returned (2, 4) against true (1, 4): (2/1 + 4/4) / 2 = 1.5
    auto r = ratio(row({2.0, 4.0}), truth, 2);
    CHECK(!r.flagged);
    CHECK(r.value == 1.5);
}

TEST_CASE("ratio: zero-distance rules") {
    // both zero: the term contributes 1
    auto ok = ratio(row({0.0, 2.0}), row({0.0, 2.0}), 2);
    CHECK(!ok.flagged);
    CHECK(ok.value == 1.0);
    // true zero but returned nonzero: flagged, excluded from the mean
    auto flagged = ratio(row({0.5, 2.0}), row({0.0, 2.0}), 2);
    CHECK(flagged.flagged);
}

TEST_CASE("ratio errors on short inputs") {
    CHECK_THROWS_AS(ratio(row({1.0}), row({1.0, 2.0}), 2), std::invalid_argument);
    CHECK_THROWS_AS(ratio(row({1.0, 2.0}), row({1.0}), 2), std::invalid_argument);
}

TEST_CASE("ratio agrees with an independent evaluator on random instances") {
    std::mt19937_64 eng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t k = 1 + eng() % 10;
        std::vector<Neighbor> truth(k), results(k);
        double base = 0.1;
        for (std::size_t i = 0; i < k; ++i) {
            base += uniform_unit(eng);
            truth[i] = {static_cast<std::uint32_t>(i), base};
            results[i] = {static_cast<std::uint32_t>(i), base * (1.0 + uniform_unit(eng))};
        }
        const auto got = ratio(results, truth, k);
        CHECK(!got.flagged);
        CHECK(std::abs(got.value - (double)ratio_oracle(results, truth, k)) <= 1e-12);
    }
}

TEST_CASE("export_csv: header-only for no records, parse-back recovers fields") {
    auto dir = temp_dir("csv");
    export_csv({}, dir / "empty.csv");
    auto empty = parse_csv(dir / "empty.csv");
    REQUIRE(empty.size() == 1);
    CHECK(empty[0][0] == "algo");
    CHECK(empty[0].size() == 11);

    BenchRecord rec;
    rec.algo = "c2lsh";
    rec.dataset = "synth, desk"; // comma forces quoting
    rec.cardinality = 1234;
    rec.k = 10;
    rec.mean_ratio = 1.0625;
    rec.flagged_queries = 2;
    rec.indexing_ms = 12.5;
    rec.mean_query_ms = 0.75;
    rec.bytes_read = 4096;
    rec.seeks = 17;
    rec.seed = 99;
    std::vector<BenchRecord> recs{rec};
    export_csv(recs, dir / "one.csv");
    auto rows = parse_csv(dir / "one.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][0] == "c2lsh");
    CHECK(rows[1][1] == "synth, desk");
    CHECK(rows[1][2] == "1234");
    CHECK(rows[1][3] == "10");
    CHECK(std::stod(rows[1][4]) == 1.0625);
    CHECK(rows[1][5] == "2");
    CHECK(std::stod(rows[1][6]) == 12.5);
    CHECK(std::stod(rows[1][7]) == 0.75);
    CHECK(rows[1][8] == "4096");
    CHECK(rows[1][9] == "17");
    CHECK(rows[1][10] == "99");
}

TEST_CASE("make_ground_truth: self is nearest, regeneration is byte-identical") {
    auto dir = temp_dir("gt");
    auto data = synth_uniform(50, 4, 7);
    write_fvecs(data, dir / "data.fvecs");

    make_ground_truth(dir / "data.fvecs", 3, 5, dir / "gt1.ivecs", dir / "gt1.fvecs");
    make_ground_truth(dir / "data.fvecs", 3, 5, dir / "gt2.ivecs", dir / "gt2.fvecs");
    auto read_bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    };
    CHECK(read_bytes(dir / "gt1.ivecs") == read_bytes(dir / "gt2.ivecs"));
    CHECK(read_bytes(dir / "gt1.fvecs") == read_bytes(dir / "gt2.fvecs"));

    auto gt = load_ground_truth(dir / "gt1.ivecs", dir / "gt1.fvecs");
    CHECK(gt.rows[0][0].id == 0);
    CHECK(gt.rows[0][0].dist == 0.0);

    // spot-check a few rows against a fresh full sort
    for (std::size_t q = 0; q < 3; ++q) {
        auto want = brute_force_knn(data, data.point(q), 5);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(gt.rows[q][i].id == want[i].id);
            CHECK(gt.rows[q][i].dist ==
                  static_cast<double>(static_cast<float>(want[i].dist)));
        }
    }
}

TEST_CASE("synthetic generators are deterministic per seed") {
    auto a = synth_uniform(100, 8, 5);
    auto b = synth_uniform(100, 8, 5);
    CHECK(a == b);
    auto c = synth_clusters(100, 8, 4, 5);
    auto d = synth_clusters(100, 8, 4, 5);
    CHECK(c == d);
    CHECK(a.raw() != c.raw());
}

TEST_CASE("run_batch: smoke contract on a 10-point dataset") {
    BatchConfig cfg;
    cfg.algo = Algo::c2lsh;
    cfg.data = std::make_shared<Dataset>(synth_uniform(10, 4, 3));
    cfg.query_count = 1;
    cfg.ks = {1};
    cfg.seed = 3;
    cfg.out_dir = temp_dir("smoke");
    auto records = run_batch(cfg);
    REQUIRE(records.size() == 1);
    CHECK(records[0].k == 1);
    CHECK(records[0].cardinality == 10);
    CHECK(records[0].mean_ratio >= 1.0 - 1e-9);
    CHECK(records[0].indexing_ms >= 0.0);
    CHECK(records[0].mean_query_ms >= 0.0);
}

TEST_CASE("run_batch: same seed gives identical ratios and io counters") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        BatchConfig cfg;
        cfg.algo = algo;
        cfg.data = std::make_shared<Dataset>(synth_clusters(800, 8, 8, 21, 0.15));
        cfg.query_count = 25;
        cfg.ks = {1, 5};
        cfg.seed = 21;
        cfg.out_dir = temp_dir(algo == Algo::c2lsh ? "det_c2" : "det_qa");
        auto first = run_batch(cfg);
        auto second = run_batch(cfg);
        REQUIRE(first.size() == second.size());
        for (std::size_t i = 0; i < first.size(); ++i) {
            CHECK(first[i].mean_ratio == second[i].mean_ratio);
            CHECK(first[i].flagged_queries == second[i].flagged_queries);
            CHECK(first[i].bytes_read == second[i].bytes_read);
            CHECK(first[i].seeks == second[i].seeks);
        }
    }
}

TEST_CASE("run_batch: every emitted ratio is at least 1") {
    BatchConfig cfg;
    cfg.algo = Algo::qalsh;
    cfg.data = std::make_shared<Dataset>(synth_clusters(1500, 16, 12, 33, 0.12));
    cfg.query_count = 30;
    cfg.ks = {1, 10};
    cfg.seed = 33;
    cfg.out_dir = temp_dir("ratio_floor");
    for (const auto& rec : run_batch(cfg)) {
        CHECK(rec.mean_ratio >= 1.0 - 1e-9);
        CHECK(rec.mean_ratio <= 1.5); // clustered desk data stays accurate
    }
}

TEST_CASE("run_stream: a single checkpoint equal to the preload matches run_batch") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        auto full = std::make_shared<Dataset>(synth_clusters(500, 8, 6, 44, 0.15));

        StreamConfig scfg;
        scfg.algo = algo;
        scfg.data = full;
        scfg.schedule.preload = 500;
        scfg.schedule.checkpoints = {500};
        scfg.query_count = 20;
        scfg.ks = {1, 5};
        scfg.seed = 44;
        scfg.out_dir = temp_dir(algo == Algo::c2lsh ? "deg_c2" : "deg_qa");
        auto stream_records = run_stream(scfg);

        BatchConfig bcfg;
        bcfg.algo = algo;
        bcfg.data = full;
        bcfg.query_count = 20;
        bcfg.ks = {1, 5};
        bcfg.seed = 44;
        bcfg.out_dir = temp_dir(algo == Algo::c2lsh ? "deg_batch_c2" : "deg_batch_qa");
        auto batch_records = run_batch(bcfg);

        REQUIRE(stream_records.size() == batch_records.size());
        for (std::size_t i = 0; i < stream_records.size(); ++i) {
            CHECK(stream_records[i].mean_ratio == batch_records[i].mean_ratio);
            CHECK(stream_records[i].flagged_queries == batch_records[i].flagged_queries);
        }
    }
}

TEST_CASE("run_stream: checkpoint ratios equal paired batch builds at the same cardinality") {
    const std::size_t final_n = 600;
    auto full = std::make_shared<Dataset>(synth_clusters(final_n, 8, 6, 55, 0.15));

    StreamConfig scfg;
    scfg.algo = Algo::c2lsh;
    scfg.data = full;
    scfg.schedule.preload = 200;
    scfg.schedule.checkpoints = {200, 400, 600};
    scfg.query_count = 20;
    scfg.ks = {5};
    scfg.seed = 55;
    scfg.out_dir = temp_dir("paired_stream");
    auto stream_records = run_stream(scfg);
    REQUIRE(stream_records.size() == 3);

    for (std::size_t ci = 0; ci < 3; ++ci) {
        const std::size_t cardinality = scfg.schedule.checkpoints[ci];
        auto prefix = std::make_shared<Dataset>(full->dim());
        for (std::size_t i = 0; i < cardinality; ++i) prefix->append(full->point(i));

        BatchConfig bcfg;
        bcfg.algo = Algo::c2lsh;
        bcfg.data = prefix;
        bcfg.query_count = 20;
        bcfg.ks = {5};
        bcfg.seed = 55;
        bcfg.sizing_n = final_n; // the streaming run sizes parameters for the final cardinality
        bcfg.out_dir = temp_dir("paired_batch_" + std::to_string(cardinality));
        auto batch_records = run_batch(bcfg);
        REQUIRE(batch_records.size() == 1);
        CHECK(stream_records[ci].cardinality == cardinality);
        CHECK(stream_records[ci].mean_ratio == batch_records[0].mean_ratio);
    }
}

TEST_CASE("run_stream: schedule validation") {
    auto full = std::make_shared<Dataset>(synth_uniform(100, 4, 66));
    StreamConfig cfg;
    cfg.data = full;
    cfg.query_count = 10;
    cfg.ks = {1};
    cfg.out_dir = temp_dir("sched");

    cfg.schedule.preload = 50;
    cfg.schedule.checkpoints = {60, 80};
    CHECK_THROWS_AS(run_stream(cfg), std::invalid_argument); // preload != first

    cfg.schedule.preload = 50;
    cfg.schedule.checkpoints = {50, 200};
    CHECK_THROWS_AS(run_stream(cfg), std::invalid_argument); // beyond dataset

    cfg.schedule.checkpoints = {50, 40};
    CHECK_THROWS_AS(run_stream(cfg), std::invalid_argument); // not ascending
}

TEST_CASE("run_stream: table-style schedule emits one record group per checkpoint") {
    // scaled-down version of the published cardinality ladder
    auto full = std::make_shared<Dataset>(synth_clusters(3000, 8, 10, 77, 0.15));
    StreamConfig cfg;
    cfg.algo = Algo::qalsh;
    cfg.data = full;
    cfg.schedule.preload = 1000;
    cfg.schedule.checkpoints = {1000, 1500, 2000, 2500, 3000};
    cfg.query_count = 20;
    cfg.ks = {1, 10};
    cfg.seed = 77;
    cfg.policy.max_points = 256;
    cfg.out_dir = temp_dir("ladder");
    auto records = run_stream(cfg);
    REQUIRE(records.size() == 10); // 5 checkpoints x 2 k values
    for (std::size_t ci = 0; ci < 5; ++ci) {
        CHECK(records[2 * ci].cardinality == cfg.schedule.checkpoints[ci]);
        CHECK(records[2 * ci].k == 1);
        CHECK(records[2 * ci + 1].k == 10);
        CHECK(records[2 * ci].mean_ratio >= 1.0 - 1e-9);
    }
}

TEST_CASE("run_stream: baseline records appear with the -naive suffix") {
    auto full = std::make_shared<Dataset>(synth_uniform(120, 4, 88));
    StreamConfig cfg;
    cfg.algo = Algo::c2lsh;
    cfg.data = full;
    cfg.schedule.preload = 100;
    cfg.schedule.checkpoints = {100, 120};
    cfg.query_count = 10;
    cfg.ks = {1};
    cfg.seed = 88;
    cfg.baseline = true;
    cfg.out_dir = temp_dir("baseline");
    auto records = run_stream(cfg);
    REQUIRE(records.size() == 4);
    CHECK(records[0].algo == "c2lsh");
    CHECK(records[2].algo == "c2lsh-naive");
    // equal point sets give equal accuracy on both paths
    CHECK(records[1].mean_ratio == records[3].mean_ratio);
}
