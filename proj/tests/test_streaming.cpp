#include "doctest.h"

#include "rtlsh/bench.hpp"
#include "rtlsh/streaming.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace rtlsh;
using stream::Algo;
using stream::MergePolicy;
using stream::StreamingIndex;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "rtlsh_stream_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::shared_ptr<Dataset> share(Dataset ds) { return std::make_shared<Dataset>(std::move(ds)); }

std::shared_ptr<Dataset> prefix_of(const Dataset& data, std::size_t count) {
    auto out = std::make_shared<Dataset>(data.dim());
    for (std::size_t i = 0; i < count; ++i) out->append(data.point(i));
    return out;
}

// merges only when called explicitly
MergePolicy never_policy() {
    MergePolicy p;
    p.max_points = std::size_t(1) << 60;
    p.max_fraction.reset();
    return p;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool dirs_equal_files(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        if (!fs::exists(b / name)) return false;
        if (slurp(a / name) != slurp(b / name)) return false;
    }
    return true;
}

} // namespace

TEST_CASE("policy must configure at least one trigger") {
    auto data = share(bench::synth_uniform(10, 4, 1));
    auto params = derive_parameters(20, 2.0, 2.7191, 0.1, 1);
    auto proj = generate_projections(4, params.m, 2.7191, 1);
    MergePolicy none;
    none.max_points.reset();
    none.max_fraction.reset();
    CHECK_THROWS_AS(
        StreamingIndex(Algo::c2lsh, data, params, proj, none, temp_dir("nopolicy")),
        std::invalid_argument);
}

TEST_CASE("insert goes to the delta only; main storage is untouched") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        auto full = bench::synth_uniform(60, 6, 7);
        auto params = derive_parameters(60, 2.0, 2.7191, 0.1, 3);
        auto proj = generate_projections(6, params.m, 2.7191, 7);
        StreamingIndex index(algo, prefix_of(full, 50), params, proj, never_policy(),
                             temp_dir(algo == Algo::c2lsh ? "delta_c2" : "delta_qa"));
        const auto io_before = index.io_stats();
        index.insert(full.record(50));
        CHECK(index.delta_size() == 1);
        CHECK(index.main_size() == 50);
        CHECK(index.io_stats() == io_before);
    }
}

TEST_CASE("a points-threshold policy triggers exactly one merge across three inserts") {
    auto full = bench::synth_uniform(60, 6, 8);
    auto params = derive_parameters(60, 2.0, 2.7191, 0.1, 3);
    auto proj = generate_projections(6, params.m, 2.7191, 8);
    MergePolicy policy;
    policy.max_points = 2;
    policy.max_fraction.reset();
    StreamingIndex index(Algo::c2lsh, prefix_of(full, 50), params, proj, policy,
                         temp_dir("trigger"));
    index.insert(full.record(50));
    CHECK(index.delta_size() == 1);
    CHECK(index.main_size() == 50);
    index.insert(full.record(51)); // reaches 2: merge fires
    CHECK(index.delta_size() == 0);
    CHECK(index.main_size() == 52);
    index.insert(full.record(52));
    CHECK(index.delta_size() == 1);
    CHECK(index.main_size() == 52);
}

TEST_CASE("duplicate and out-of-order ids are rejected, as is overflow") {
    auto full = bench::synth_uniform(20, 4, 9);
    auto params = derive_parameters(12, 2.0, 2.7191, 0.1, 1);
    auto proj = generate_projections(4, params.m, 2.7191, 9);
    StreamingIndex index(Algo::c2lsh, prefix_of(full, 10), params, proj, never_policy(),
                         temp_dir("badids"));
    CHECK_THROWS_AS(index.insert(full.record(5)), std::invalid_argument);  // already present
    CHECK_THROWS_AS(index.insert(full.record(12)), std::invalid_argument); // skips arrivals
    index.insert(full.record(10));
    index.insert(full.record(11));
    // sized for final cardinality 12: the 13th arrival is refused
    CHECK_THROWS_AS(index.insert(full.record(12)), std::length_error);
}

TEST_CASE("merge with an empty delta leaves the main files byte-identical") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        auto data = share(bench::synth_uniform(80, 6, 10));
        auto params = derive_parameters(100, 2.0, 2.7191, 0.1, 3);
        auto proj = generate_projections(6, params.m, 2.7191, 10);
        auto dir = temp_dir(algo == Algo::c2lsh ? "noopmerge_c2" : "noopmerge_qa");
        StreamingIndex index(algo, data, params, proj, never_policy(), dir);
        auto before = slurp(dir / (algo == Algo::c2lsh ? "proj_0.c2i" : "proj_0.qt"));
        index.merge();
        auto after = slurp(dir / (algo == Algo::c2lsh ? "proj_0.c2i" : "proj_0.qt"));
        CHECK(before == after);
    }
}

TEST_CASE("merging a delta into an empty main equals a batch build of the delta alone") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        const char* tag = algo == Algo::c2lsh ? "c2" : "qa";
        auto full = bench::synth_uniform(70, 6, 11);
        auto params = derive_parameters(70, 2.0, 2.7191, 0.1, 3);
        auto proj = generate_projections(6, params.m, 2.7191, 11);

        auto stream_dir = temp_dir(std::string("emptymain_") + tag);
        StreamingIndex index(algo, share(Dataset(6)), params, proj, never_policy(), stream_dir);
        for (std::size_t i = 0; i < 70; ++i) index.insert(full.record(i));
        index.merge();

        auto batch_dir = temp_dir(std::string("emptymain_batch_") + tag);
        auto data = share(bench::synth_uniform(70, 6, 11));
        if (algo == Algo::c2lsh)
            (void)c2lsh::C2lshIndex::build(data, params, proj, batch_dir);
        else
            (void)qalsh::QalshIndex::build(data, params, proj, batch_dir);
        CHECK(dirs_equal_files(batch_dir, stream_dir));
    }
}

TEST_CASE("streaming/batch equivalence: build(A+B) equals build(A)+insert(B)+merge") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        const char* tag = algo == Algo::c2lsh ? "c2" : "qa";
        const std::size_t total = 400, preload = 250;
        auto full = bench::synth_clusters(total, 6, 6, 13, 0.2);
        auto params = derive_parameters(total, 2.0, 2.7191, 0.1, 5);
        auto proj = generate_projections(6, params.m, 2.7191, 13);

        StreamingIndex streamed(algo, prefix_of(full, preload), params, proj, never_policy(),
                                temp_dir(std::string("equiv_stream_") + tag));
        for (std::size_t i = preload; i < total; ++i) streamed.insert(full.record(i));
        streamed.merge();

        auto batch_data = share(bench::synth_clusters(total, 6, 6, 13, 0.2));
        auto batch_dir = temp_dir(std::string("equiv_batch_") + tag);
        std::optional<c2lsh::C2lshIndex> bc2;
        std::optional<qalsh::QalshIndex> bqa;
        if (algo == Algo::c2lsh)
            bc2 = c2lsh::C2lshIndex::build(batch_data, params, proj, batch_dir);
        else
            bqa = qalsh::QalshIndex::build(batch_data, params, proj, batch_dir);

        for (std::size_t q = 0; q < 50; ++q) {
            auto want = bc2 ? bc2->query(batch_data->point(q), 5)
                            : bqa->query(batch_data->point(q), 5);
            auto got = streamed.query(full.point(q), 5);
            CHECK(got == want);
        }
    }
}

TEST_CASE("combined query with an empty delta matches the main-only index") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        const char* tag = algo == Algo::c2lsh ? "c2" : "qa";
        auto data = share(bench::synth_uniform(300, 6, 14));
        auto params = derive_parameters(350, 2.0, 2.7191, 0.1, 5);
        auto proj = generate_projections(6, params.m, 2.7191, 14);
        auto dir = temp_dir(std::string("nodelta_") + tag);
        StreamingIndex index(algo, data, params, proj, never_policy(), dir);
        std::optional<c2lsh::C2lshIndex> bc2;
        std::optional<qalsh::QalshIndex> bqa;
        if (algo == Algo::c2lsh)
            bc2 = c2lsh::C2lshIndex::open(dir, data);
        else
            bqa = qalsh::QalshIndex::open(dir, data);
        for (std::size_t q = 0; q < 20; ++q) {
            auto want = bc2 ? bc2->query(data->point(q), 5) : bqa->query(data->point(q), 5);
            CHECK(index.query(data->point(q), 5) == want);
        }
    }
}

TEST_CASE("combined query over a delta-only index matches a batch build") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        const char* tag = algo == Algo::c2lsh ? "c2" : "qa";
        auto full = bench::synth_uniform(200, 6, 15);
        auto params = derive_parameters(200, 2.0, 2.7191, 0.1, 5);
        auto proj = generate_projections(6, params.m, 2.7191, 15);
        StreamingIndex index(algo, share(Dataset(6)), params, proj, never_policy(),
                             temp_dir(std::string("deltaonly_") + tag));
        for (std::size_t i = 0; i < 200; ++i) index.insert(full.record(i));

        auto data = share(bench::synth_uniform(200, 6, 15));
        auto batch_dir = temp_dir(std::string("deltaonly_batch_") + tag);
        std::optional<c2lsh::C2lshIndex> bc2;
        std::optional<qalsh::QalshIndex> bqa;
        if (algo == Algo::c2lsh)
            bc2 = c2lsh::C2lshIndex::build(data, params, proj, batch_dir);
        else
            bqa = qalsh::QalshIndex::build(data, params, proj, batch_dir);
        for (std::size_t q = 0; q < 20; ++q) {
            auto want = bc2 ? bc2->query(data->point(q), 5) : bqa->query(data->point(q), 5);
            CHECK(index.query(full.point(q), 5) == want);
        }
    }
}

TEST_CASE("query results are invariant across a merge boundary") {
    for (Algo algo : {Algo::c2lsh, Algo::qalsh}) {
        const char* tag = algo == Algo::c2lsh ? "c2" : "qa";
        auto full = bench::synth_clusters(300, 6, 5, 16, 0.2);
        auto params = derive_parameters(300, 2.0, 2.7191, 0.1, 5);
        auto proj = generate_projections(6, params.m, 2.7191, 16);
        StreamingIndex index(algo, prefix_of(full, 150), params, proj, never_policy(),
                             temp_dir(std::string("boundary_") + tag));
        for (std::size_t i = 150; i < 300; ++i) index.insert(full.record(i));

        std::vector<std::vector<Neighbor>> before;
        for (std::size_t q = 0; q < 50; ++q) before.push_back(index.query(full.point(q), 5));
        index.merge();
        for (std::size_t q = 0; q < 50; ++q) CHECK(index.query(full.point(q), 5) == before[q]);
    }
}

TEST_CASE("delta and main partition the id space") {
    auto full = bench::synth_uniform(120, 5, 17);
    auto params = derive_parameters(120, 2.0, 2.7191, 0.1, 1);
    auto proj = generate_projections(5, params.m, 2.7191, 17);
    StreamingIndex index(Algo::c2lsh, prefix_of(full, 80), params, proj, never_policy(),
                         temp_dir("partition"));
    for (std::size_t i = 80; i < 120; ++i) index.insert(full.record(i));
    CHECK(index.main_size() == 80);
    CHECK(index.delta_size() == 40);
    CHECK(index.size() == 120);
    // every id, old or new, is retrievable as its own nearest neighbor
    for (std::uint32_t id : {0u, 40u, 79u, 80u, 100u, 119u}) {
        auto res = index.query(full.point(id), 1);
        REQUIRE(res.size() == 1);
        CHECK(res[0].id == id);
        CHECK(res[0].dist == 0.0);
    }
}

TEST_CASE("after many inserts and a final merge every sampled id finds itself") {
    auto full = bench::synth_uniform(1000, 6, 18);
    auto params = derive_parameters(1000, 2.0, 2.7191, 0.1, 1);
    auto proj = generate_projections(6, params.m, 2.7191, 18);
    MergePolicy policy;
    policy.max_points = 256;
    policy.max_fraction.reset();
    StreamingIndex index(Algo::qalsh, share(Dataset(6)), params, proj, policy,
                         temp_dir("thousand"));
    for (std::size_t i = 0; i < 1000; ++i) index.insert(full.record(i));
    index.merge();
    CHECK(index.main_size() == 1000);
    std::mt19937_64 eng(19);
    for (int rep = 0; rep < 20; ++rep) {
        const auto id = static_cast<std::uint32_t>(eng() % 1000);
        auto res = index.query(full.point(id), 1);
        REQUIRE(res.size() == 1);
        CHECK(res[0].id == id);
        CHECK(res[0].dist == 0.0);
    }
}

TEST_CASE("naive rebuild path gives the same results as delta+merge") {
    auto full = bench::synth_uniform(140, 5, 20);
    auto params = derive_parameters(140, 2.0, 2.7191, 0.1, 3);
    auto proj = generate_projections(5, params.m, 2.7191, 20);

    StreamingIndex delta_path(Algo::c2lsh, prefix_of(full, 120), params, proj, never_policy(),
                              temp_dir("naive_delta"));
    StreamingIndex naive_path(Algo::c2lsh, prefix_of(full, 120), params, proj, never_policy(),
                              temp_dir("naive_naive"));
    for (std::size_t i = 120; i < 140; ++i) {
        delta_path.insert(full.record(i));
        naive_path.naive_rebuild_insert(full.record(i));
    }
    delta_path.merge();
    for (std::size_t q = 0; q < 30; ++q)
        CHECK(delta_path.query(full.point(q), 3) == naive_path.query(full.point(q), 3));
}

TEST_CASE("concurrent readers see a consistent snapshot while a writer inserts") {
    auto full = bench::synth_uniform(400, 5, 23);
    auto params = derive_parameters(400, 2.0, 2.7191, 0.1, 1);
    auto proj = generate_projections(5, params.m, 2.7191, 23);
    MergePolicy policy;
    policy.max_points = 64;
    policy.max_fraction.reset();
    StreamingIndex index(Algo::c2lsh, prefix_of(full, 200), params, proj, policy,
                         temp_dir("concurrent"));

    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t)
        readers.emplace_back([&, t] {
            std::mt19937_64 eng(100 + t);
            for (int rep = 0; rep < 200; ++rep) {
                const auto id = static_cast<std::uint32_t>(eng() % 200);
                auto res = index.query(full.point(id), 1);
                // preloaded points must always be their own nearest neighbor,
                // whichever side of a merge the reader lands on
                if (res.size() != 1 || res[0].id != id || res[0].dist != 0.0) bad.fetch_add(1);
            }
        });
    for (std::size_t i = 200; i < 400; ++i) index.insert(full.record(i));
    for (auto& r : readers) r.join();
    CHECK(bad.load() == 0);
    CHECK(index.size() == 400);
}

TEST_CASE("close() folds the delta so the on-disk state is a valid batch index") {
    auto full = bench::synth_uniform(90, 5, 22);
    auto params = derive_parameters(90, 2.0, 2.7191, 0.1, 3);
    auto proj = generate_projections(5, params.m, 2.7191, 22);
    auto dir = temp_dir("close");
    {
        StreamingIndex index(Algo::c2lsh, prefix_of(full, 60), params, proj, never_policy(), dir);
        for (std::size_t i = 60; i < 90; ++i) index.insert(full.record(i));
        index.close();
        CHECK(index.delta_size() == 0);
    }
    auto data = share(bench::synth_uniform(90, 5, 22));
    auto reopened = c2lsh::C2lshIndex::open(dir, data);
    CHECK(reopened.size() == 90);
    auto res = reopened.query(data->point(75), 1);
    REQUIRE(res.size() == 1);
    CHECK(res[0].id == 75);
}
