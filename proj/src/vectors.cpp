#include "rtlsh/vectors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rtlsh {

namespace {

std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    auto len = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<char> buf(len);
    if (len > 0 && !in.read(buf.data(), static_cast<std::streamsize>(len)))
        throw IoError("short read on " + path.string());
    return buf;
}

// Parses the shared fvecs/ivecs framing, invoking sink(dim, payload_ptr)
// per record. Element type is 4 bytes in both layouts.
template <typename Sink>
void parse_vecs(const std::vector<char>& buf, const std::filesystem::path& path, Sink&& sink) {
    std::size_t off = 0;
    std::int32_t dim0 = -1;
    while (off < buf.size()) {
        if (buf.size() - off < 4)
            throw FormatError(path.string() + ": truncated record header at byte offset " +
                              std::to_string(off));
        std::int32_t d;
        std::memcpy(&d, buf.data() + off, 4);
        if (d <= 0)
            throw FormatError(path.string() + ": invalid dimension " + std::to_string(d) +
                              " at byte offset " + std::to_string(off));
        if (dim0 < 0) {
            dim0 = d;
        } else if (d != dim0) {
            throw FormatError(path.string() + ": dimension mismatch at byte offset " +
                              std::to_string(off) + " (got " + std::to_string(d) +
                              ", expected " + std::to_string(dim0) + ")");
        }
        off += 4;
        const std::size_t payload = static_cast<std::size_t>(d) * 4;
        if (buf.size() - off < payload)
            throw FormatError(path.string() + ": truncated record payload at byte offset " +
                              std::to_string(off));
        sink(static_cast<std::size_t>(d), buf.data() + off);
        off += payload;
    }
}

void write_all(const std::filesystem::path& path, const char* data, std::size_t len) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    if (len > 0) out.write(data, static_cast<std::streamsize>(len));
    if (!out) throw IoError("write failed on " + path.string());
}

} // namespace

std::uint32_t Dataset::append(std::span<const float> coords) {
    if (dim_ == 0 && data_.empty()) {
        dim_ = coords.size();
    } else if (coords.size() != dim_) {
        throw std::invalid_argument("point dimension " + std::to_string(coords.size()) +
                                    " does not match dataset dimension " + std::to_string(dim_));
    }
    auto id = static_cast<std::uint32_t>(size());
    data_.insert(data_.end(), coords.begin(), coords.end());
    return id;
}

Dataset load_fvecs(const std::filesystem::path& path) {
    auto buf = read_all(path);
    Dataset ds;
    parse_vecs(buf, path, [&](std::size_t d, const char* payload) {
        std::vector<float> coords(d);
        std::memcpy(coords.data(), payload, d * 4);
        ds.append(coords);
    });
    return ds;
}

void write_fvecs(const Dataset& dataset, const std::filesystem::path& path) {
    std::vector<char> buf;
    buf.reserve(dataset.size() * (4 + dataset.dim() * 4));
    const auto d = static_cast<std::int32_t>(dataset.dim());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const char* dp = reinterpret_cast<const char*>(&d);
        buf.insert(buf.end(), dp, dp + 4);
        auto p = dataset.point(i);
        const char* cp = reinterpret_cast<const char*>(p.data());
        buf.insert(buf.end(), cp, cp + p.size() * 4);
    }
    write_all(path, buf.data(), buf.size());
}

std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path) {
    auto buf = read_all(path);
    std::vector<std::vector<std::int32_t>> rows;
    parse_vecs(buf, path, [&](std::size_t d, const char* payload) {
        std::vector<std::int32_t> row(d);
        std::memcpy(row.data(), payload, d * 4);
        rows.push_back(std::move(row));
    });
    return rows;
}

void write_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                 const std::filesystem::path& path) {
    std::vector<char> buf;
    for (const auto& row : rows) {
        const auto d = static_cast<std::int32_t>(row.size());
        const char* dp = reinterpret_cast<const char*>(&d);
        buf.insert(buf.end(), dp, dp + 4);
        const char* cp = reinterpret_cast<const char*>(row.data());
        buf.insert(buf.end(), cp, cp + row.size() * 4);
    }
    write_all(path, buf.data(), buf.size());
}

double euclidean(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("euclidean: dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    long double acc = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double diff = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
        acc += diff * diff;
    }
    return static_cast<double>(std::sqrt(acc));
}

std::vector<Neighbor> brute_force_knn(const Dataset& dataset,
                                      std::span<const float> query,
                                      std::size_t k) {
    const std::size_t n = dataset.size();
    if (k < 1 || k > n)
        throw std::invalid_argument("brute_force_knn: k=" + std::to_string(k) +
                                    " out of range for n=" + std::to_string(n));
    std::vector<Neighbor> all(n);
    for (std::size_t i = 0; i < n; ++i)
        all[i] = {static_cast<std::uint32_t>(i), euclidean(dataset.point(i), query)};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    all.resize(k);
    return all;
}

GroundTruth compute_ground_truth(const Dataset& dataset,
                                 std::size_t query_count,
                                 std::size_t k) {
    GroundTruth gt;
    gt.k = k;
    gt.rows.reserve(query_count);
    for (std::size_t q = 0; q < query_count; ++q)
        gt.rows.push_back(brute_force_knn(dataset, dataset.point(q), k));
    return gt;
}

void save_ground_truth(const GroundTruth& gt,
                       const std::filesystem::path& ids_path,
                       const std::filesystem::path& dists_path) {
    std::vector<std::vector<std::int32_t>> ids;
    Dataset dists(gt.k);
    for (const auto& row : gt.rows) {
        std::vector<std::int32_t> id_row;
        std::vector<float> dist_row;
        for (const auto& nb : row) {
            id_row.push_back(static_cast<std::int32_t>(nb.id));
            dist_row.push_back(static_cast<float>(nb.dist));
        }
        ids.push_back(std::move(id_row));
        dists.append(dist_row);
    }
    write_ivecs(ids, ids_path);
    write_fvecs(dists, dists_path);
}

GroundTruth load_ground_truth(const std::filesystem::path& ids_path,
                              const std::filesystem::path& dists_path) {
    auto ids = load_ivecs(ids_path);
    auto dists = load_fvecs(dists_path);
    if (ids.size() != dists.size())
        throw FormatError("ground truth files disagree on query count");
    GroundTruth gt;
    gt.k = dists.dim();
    for (std::size_t q = 0; q < ids.size(); ++q) {
        if (ids[q].size() != gt.k)
            throw FormatError("ground truth files disagree on k");
        std::vector<Neighbor> row(gt.k);
        auto drow = dists.point(q);
        for (std::size_t i = 0; i < gt.k; ++i)
            row[i] = {static_cast<std::uint32_t>(ids[q][i]), static_cast<double>(drow[i])};
        gt.rows.push_back(std::move(row));
    }
    return gt;
}

} // namespace rtlsh
