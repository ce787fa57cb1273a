#include "rtlsh/c2lsh.hpp"

#include "rtlsh/counting.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fcntl.h>
#include <unistd.h>

namespace rtlsh::c2lsh {


ProjectionFile::ProjectionFile(ProjectionFile&& other) noexcept
    : dir_(std::move(other.dir_)),
      payload_count_(other.payload_count_),
      payload_base_(other.payload_base_),
      fd_(std::exchange(other.fd_, -1)) {}

ProjectionFile& ProjectionFile::operator=(ProjectionFile&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        dir_ = std::move(other.dir_);
        payload_count_ = other.payload_count_;
        payload_base_ = other.payload_base_;
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

ProjectionFile::~ProjectionFile() {
    if (fd_ >= 0) ::close(fd_);
}

void ProjectionFile::write(const std::filesystem::path& path,
                           std::span<const std::pair<std::int64_t, std::uint32_t>> sorted_pairs) {
    // header: bucket count + per-bucket (number, first-id offset)
    std::vector<DirEntry> dir;
    for (std::size_t i = 0; i < sorted_pairs.size(); ++i) {
        if (i == 0 || sorted_pairs[i].first != sorted_pairs[i - 1].first) {
            const std::int64_t bucket = sorted_pairs[i].first;
            if (bucket < std::numeric_limits<std::int32_t>::min() ||
                bucket > std::numeric_limits<std::int32_t>::max())
                throw FormatError(path.string() + ": bucket number " + std::to_string(bucket) +
                                  " does not fit int32");
            dir.push_back({static_cast<std::int32_t>(bucket), static_cast<std::int32_t>(i)});
        }
    }

    std::vector<char> buf;
    buf.reserve(4 + dir.size() * 8 + sorted_pairs.size() * 4);
    auto put32 = [&buf](std::int32_t v) {
        const char* p = reinterpret_cast<const char*>(&v);
        buf.insert(buf.end(), p, p + 4);
    };
    put32(static_cast<std::int32_t>(dir.size()));
    for (const auto& e : dir) {
        put32(e.bucket);
        put32(e.offset);
    }
    for (const auto& [bucket, id] : sorted_pairs) put32(static_cast<std::int32_t>(id));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed on " + path.string());
}

ProjectionFile ProjectionFile::open(const std::filesystem::path& path) {
    ProjectionFile pf;
    pf.fd_ = ::open(path.c_str(), O_RDONLY);
    if (pf.fd_ < 0) throw IoError("cannot open " + path.string());

    auto read_at = [&](void* dst, std::size_t len, std::size_t off) {
        const ssize_t got = ::pread(pf.fd_, dst, len, static_cast<off_t>(off));
        if (got < 0 || static_cast<std::size_t>(got) != len)
            throw FormatError(path.string() + ": truncated index file at byte offset " +
                              std::to_string(off));
    };

    std::int32_t bucket_count = 0;
    read_at(&bucket_count, 4, 0);
    if (bucket_count < 0)
        throw FormatError(path.string() + ": negative bucket count");
    pf.dir_.resize(static_cast<std::size_t>(bucket_count));
    if (bucket_count > 0)
        read_at(pf.dir_.data(), pf.dir_.size() * sizeof(DirEntry), 4);
    pf.payload_base_ = 4 + pf.dir_.size() * 8;

    const auto file_size = std::filesystem::file_size(path);
    if (file_size < pf.payload_base_ || (file_size - pf.payload_base_) % 4 != 0)
        throw FormatError(path.string() + ": malformed payload size");
    pf.payload_count_ = (file_size - pf.payload_base_) / 4;

    std::int64_t prev_bucket = std::numeric_limits<std::int64_t>::min();
    std::int64_t prev_offset = -1;
    for (const auto& e : pf.dir_) {
        if (e.bucket <= prev_bucket || e.offset <= prev_offset ||
            static_cast<std::size_t>(e.offset) >= std::max<std::size_t>(pf.payload_count_, 1))
            throw FormatError(path.string() + ": malformed bucket directory");
        prev_bucket = e.bucket;
        prev_offset = e.offset;
    }
    if (!pf.dir_.empty() && pf.dir_.front().offset != 0)
        throw FormatError(path.string() + ": directory does not start at offset 0");
    return pf;
}

std::pair<std::size_t, std::size_t> ProjectionFile::payload_span(std::int64_t lo,
                                                                 std::int64_t hi) const {
    auto first = std::lower_bound(dir_.begin(), dir_.end(), lo,
                                  [](const DirEntry& e, std::int64_t v) { return e.bucket < v; });
    auto last = std::upper_bound(dir_.begin(), dir_.end(), hi,
                                 [](std::int64_t v, const DirEntry& e) { return v < e.bucket; });
    if (first >= last) return {0, 0};
    const std::size_t begin = static_cast<std::size_t>(first->offset);
    const std::size_t end =
        last == dir_.end() ? payload_count_ : static_cast<std::size_t>(last->offset);
    return {begin, end};
}

std::uint64_t ProjectionFile::range_payload_bytes(std::int64_t lo, std::int64_t hi) const {
    auto [begin, end] = payload_span(lo, hi);
    return (end - begin) * 4;
}

std::vector<std::uint32_t> ProjectionFile::read_bucket_range(std::int64_t lo, std::int64_t hi,
                                                             IoStats& io) const {
    auto [begin, end] = payload_span(lo, hi);
    if (begin == end) return {};
    const std::size_t count = end - begin;
    std::vector<std::uint32_t> ids(count);
    const std::size_t bytes = count * 4;
    const ssize_t got =
        ::pread(fd_, ids.data(), bytes, static_cast<off_t>(payload_base_ + begin * 4));
    if (got < 0 || static_cast<std::size_t>(got) != bytes)
        throw FormatError("short payload read on projection file");
    io.record(bytes);
    return ids;
}

std::string C2lshIndex::file_name(std::size_t proj_index) {
    return "proj_" + std::to_string(proj_index) + ".c2i";
}

C2lshIndex C2lshIndex::build(std::shared_ptr<const Dataset> data, const LshParams& params,
                             const ProjectionSet& proj, const std::filesystem::path& dir,
                             std::size_t page_size) {
    if (!data || data->empty()) throw std::invalid_argument("c2lsh build: empty dataset");
    if (params.n < data->size())
        throw std::invalid_argument("c2lsh build: params sized for cardinality " +
                                    std::to_string(params.n) + " < dataset size " +
                                    std::to_string(data->size()));
    if (proj.m != params.m)
        throw std::invalid_argument("c2lsh build: projection count does not match params.m");
    if (proj.dim != data->dim())
        throw std::invalid_argument("c2lsh build: projection dimension mismatch");

    std::filesystem::create_directories(dir);
    const std::size_t n = data->size();
    std::vector<std::pair<std::int64_t, std::uint32_t>> pairs(n);
    for (std::size_t i = 0; i < params.m; ++i) {
        for (std::size_t p = 0; p < n; ++p) {
            const double h = project(proj, i, data->point(p));
            pairs[p] = {static_cast<std::int64_t>(std::floor((h + proj.b[i]) / proj.w)),
                        static_cast<std::uint32_t>(p)};
        }
        std::sort(pairs.begin(), pairs.end()); // sorted in place, no copy
        try {
            ProjectionFile::write(dir / file_name(i), pairs);
        } catch (const IoError& e) {
            throw IoError("projection " + std::to_string(i) + ": " + e.what());
        }
    }
    save_projections(proj, dir / "projections.bin");
    save_manifest({params, data->dim(), page_size, proj.seed}, dir / "manifest.txt");
    return open(dir, std::move(data));
}

C2lshIndex C2lshIndex::open(const std::filesystem::path& dir, std::shared_ptr<const Dataset> data) {
    C2lshIndex idx;
    idx.dir_ = dir;
    auto man = load_manifest(dir / "manifest.txt");
    idx.params_ = man.params;
    idx.page_size_ = man.page_size;
    idx.proj_ = load_projections(dir / "projections.bin");
    idx.files_.reserve(idx.params_.m);
    for (std::size_t i = 0; i < idx.params_.m; ++i)
        idx.files_.push_back(ProjectionFile::open(dir / file_name(i)));
    idx.n_ = idx.files_.empty() ? 0 : idx.files_[0].id_count();
    if (!data || data->size() < idx.n_)
        throw std::invalid_argument("c2lsh open: dataset smaller than the indexed point set");
    idx.data_ = std::move(data);
    return idx;
}

std::int64_t C2lshIndex::initial_radius(std::span<const std::int64_t> query_base_buckets) const {
    return detail::initial_radius_walk(
        query_base_buckets, params_.c, page_size_,
        [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
            return files_[i].range_payload_bytes(lo, hi);
        },
        [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
            return files_[i].id_count() == 0 ||
                   (lo <= files_[i].min_bucket() && hi >= files_[i].max_bucket());
        });
}

std::vector<Neighbor> C2lshIndex::query(std::span<const float> q, std::size_t k) const {
    const std::size_t m = params_.m;
    std::vector<std::int64_t> base(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double h = project(proj_, i, q);
        base[i] = static_cast<std::int64_t>(std::floor((h + proj_.b[i]) / proj_.w));
    }
    const std::int64_t r0 = initial_radius(base);

    struct Cover {
        std::int64_t lo = 0;
        std::int64_t hi = -1;
        bool any = false;
    };
    std::vector<Cover> cov(m);
    IoStats local;

    auto fetch = [&](std::size_t i, std::int64_t radius, auto&& feed) {
        const auto [lo, hi] = detail::radius_window(base[i], radius);
        auto feed_range = [&](std::int64_t a, std::int64_t z) {
            if (a > z) return;
            for (std::uint32_t id : files_[i].read_bucket_range(a, z, local)) feed(id);
        };
        if (!cov[i].any) {
            feed_range(lo, hi);
            cov[i] = {lo, hi, true};
        } else {
            feed_range(lo, std::min(cov[i].lo - 1, hi));
            feed_range(std::max(cov[i].hi + 1, lo), hi);
            cov[i].lo = std::min(cov[i].lo, lo);
            cov[i].hi = std::max(cov[i].hi, hi);
        }
    };
    auto exhausted = [&]() {
        for (std::size_t i = 0; i < m; ++i) {
            if (files_[i].id_count() == 0) continue;
            if (!cov[i].any || cov[i].lo > files_[i].min_bucket() ||
                cov[i].hi < files_[i].max_bucket())
                return false;
        }
        return true;
    };

    auto result = detail::collision_count_query(*data_, q, k, params_, n_, r0, fetch, exhausted);
    charge_io(local);
    return result;
}

} // namespace rtlsh::c2lsh
