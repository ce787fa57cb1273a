#include "rtlsh/streaming.hpp"

#include "rtlsh/counting.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace rtlsh::stream {


StreamingIndex::StreamingIndex(Algo algo, std::shared_ptr<Dataset> preload,
                               const LshParams& params, const ProjectionSet& proj,
                               MergePolicy policy, const std::filesystem::path& dir,
                               std::size_t page_size, qalsh::SearchMode mode)
    : algo_(algo),
      params_(params),
      proj_(proj),
      policy_(policy),
      dir_(dir),
      page_size_(page_size),
      mode_(mode),
      data_(std::move(preload)) {
    if (!data_) throw std::invalid_argument("streaming: null dataset");
    if (!policy_.max_points && !policy_.max_fraction)
        throw std::invalid_argument("streaming: merge policy has no trigger configured");
    if (params_.n < data_->size())
        throw std::invalid_argument("streaming: final cardinality smaller than preload");
    std::filesystem::create_directories(dir_);
    main_n_ = data_->size();
    if (main_n_ > 0) {
        if (algo_ == Algo::c2lsh)
            main_c2_ = c2lsh::C2lshIndex::build(data_, params_, proj_, dir_, page_size_);
        else
            main_qa_ = qalsh::QalshIndex::build(data_, params_, proj_, dir_, page_size_, mode_);
    }
    if (algo_ == Algo::c2lsh)
        delta_buckets_.resize(params_.m);
    else
        delta_values_.resize(params_.m);
}

StreamingIndex::~StreamingIndex() {
    try {
        close();
    } catch (...) {
        // destructor must not throw; an unmerged delta only loses the
        // in-memory tail
    }
}

void StreamingIndex::close() {
    std::unique_lock lock(mutex_);
    if (delta_n_ > 0) merge_unlocked();
}

std::size_t StreamingIndex::size() const {
    std::shared_lock lock(mutex_);
    return main_n_ + delta_n_;
}

std::size_t StreamingIndex::main_size() const {
    std::shared_lock lock(mutex_);
    return main_n_;
}

std::size_t StreamingIndex::delta_size() const {
    std::shared_lock lock(mutex_);
    return delta_n_;
}

IoStats StreamingIndex::io_stats() const {
    std::shared_lock lock(mutex_);
    IoStats total = io_base_;
    if (main_c2_) total += main_c2_->io_stats();
    if (main_qa_) total += main_qa_->io_stats();
    return total;
}

void StreamingIndex::insert(const VectorRecord& point) {
    std::unique_lock lock(mutex_);
    insert_unlocked(point);
    if (policy_.triggered(delta_n_, main_n_) && delta_n_ > 0) merge_unlocked();
}

void StreamingIndex::insert_unlocked(const VectorRecord& point) {
    const std::size_t total = main_n_ + delta_n_;
    if (point.id != total)
        throw std::invalid_argument("insert: id " + std::to_string(point.id) +
                                    (point.id < total ? " already present" : " skips arrivals") +
                                    "; next id is " + std::to_string(total));
    if (total >= params_.n)
        throw std::length_error("insert: index sized for final cardinality " +
                                std::to_string(params_.n) + " is full");
    data_->append(point.coords);
    const auto span = data_->point(point.id);
    for (std::size_t i = 0; i < params_.m; ++i) {
        const double h = project(proj_, i, span);
        if (algo_ == Algo::c2lsh) {
            const auto bucket =
                static_cast<std::int64_t>(std::floor((h + proj_.b[i]) / proj_.w));
            delta_buckets_[i][bucket].push_back(point.id);
        } else {
            delta_values_[i].emplace(h, point.id);
        }
    }
    ++delta_n_;
}

void StreamingIndex::merge() {
    std::unique_lock lock(mutex_);
    merge_unlocked();
}

void StreamingIndex::merge_unlocked() {
    if (delta_n_ == 0) return;

    const auto tmp_dir = dir_ / "merge.tmp";
    std::filesystem::create_directories(tmp_dir);
    IoStats merge_io;

    if (algo_ == Algo::c2lsh) {
        for (std::size_t i = 0; i < params_.m; ++i) {
            std::vector<std::pair<std::int64_t, std::uint32_t>> merged;
            merged.reserve(main_n_ + delta_n_);
            const auto& delta = delta_buckets_[i];
            auto dit = delta.begin();
            if (main_c2_) {
                const auto& file = main_c2_->file(i);
                const auto& dir = file.directory();
                // one sequential pass over the old payload
                auto old_ids = file.read_bucket_range(
                    file.bucket_count() ? file.min_bucket() : 0,
                    file.bucket_count() ? file.max_bucket() : 0, merge_io);
                for (std::size_t e = 0; e < dir.size(); ++e) {
                    const std::int64_t bucket = dir[e].bucket;
                    const std::size_t begin = static_cast<std::size_t>(dir[e].offset);
                    const std::size_t end = e + 1 < dir.size()
                                                ? static_cast<std::size_t>(dir[e + 1].offset)
                                                : old_ids.size();
                    while (dit != delta.end() && dit->first < bucket) {
                        for (auto id : dit->second) merged.emplace_back(dit->first, id);
                        ++dit;
                    }
                    for (std::size_t p = begin; p < end; ++p) merged.emplace_back(bucket, old_ids[p]);
                    if (dit != delta.end() && dit->first == bucket) {
                        for (auto id : dit->second) merged.emplace_back(bucket, id);
                        ++dit;
                    }
                }
            }
            for (; dit != delta.end(); ++dit)
                for (auto id : dit->second) merged.emplace_back(dit->first, id);
            c2lsh::ProjectionFile::write(tmp_dir / c2lsh::C2lshIndex::file_name(i), merged);
        }
        io_base_ += merge_io;
        if (main_c2_) io_base_ += main_c2_->io_stats();
        main_c2_.reset(); // release fds before the swap
        for (std::size_t i = 0; i < params_.m; ++i) {
            const auto name = c2lsh::C2lshIndex::file_name(i);
            std::filesystem::rename(tmp_dir / name, dir_ / name);
        }
        save_projections(proj_, dir_ / "projections.bin");
        save_manifest({params_, data_->dim(), page_size_, proj_.seed}, dir_ / "manifest.txt");
        for (auto& map : delta_buckets_) map.clear();
        main_n_ += delta_n_;
        delta_n_ = 0;
        main_c2_ = c2lsh::C2lshIndex::open(dir_, data_);
    } else {
        for (std::size_t i = 0; i < params_.m; ++i) {
            std::vector<std::pair<double, std::uint32_t>> merged;
            merged.reserve(main_n_ + delta_n_);
            std::vector<std::pair<double, std::uint32_t>> delta_pairs;
            delta_pairs.reserve(delta_n_);
            for (const auto& [value, id] : delta_values_[i]) delta_pairs.emplace_back(value, id);
            std::sort(delta_pairs.begin(), delta_pairs.end());
            if (main_qa_) {
                const auto& tree = main_qa_->tree(i);
                std::vector<std::pair<double, std::uint32_t>> main_pairs;
                main_pairs.reserve(tree.size());
                for (std::size_t p = 0; p < tree.size(); ++p)
                    main_pairs.emplace_back(tree.values()[p], tree.ids()[p]);
                std::merge(main_pairs.begin(), main_pairs.end(), delta_pairs.begin(),
                           delta_pairs.end(), std::back_inserter(merged));
            } else {
                merged = std::move(delta_pairs);
            }
            auto tree = qalsh::QalshTree::build(merged, page_size_);
            tree.save(tmp_dir / qalsh::QalshIndex::tree_name(i));
        }
        if (main_qa_) io_base_ += main_qa_->io_stats();
        main_qa_.reset();
        for (std::size_t i = 0; i < params_.m; ++i) {
            auto qt = qalsh::QalshIndex::tree_name(i);
            auto qv = qt.substr(0, qt.size() - 3) + ".qv";
            std::filesystem::rename(tmp_dir / qt, dir_ / qt);
            std::filesystem::rename(tmp_dir / qv, dir_ / qv);
        }
        save_projections(proj_, dir_ / "projections.bin");
        save_manifest({params_, data_->dim(), page_size_, proj_.seed}, dir_ / "manifest.txt");
        for (auto& map : delta_values_) map.clear();
        main_n_ += delta_n_;
        delta_n_ = 0;
        main_qa_ = qalsh::QalshIndex::open(dir_, data_, mode_);
    }
    std::filesystem::remove_all(tmp_dir);
}

void StreamingIndex::naive_rebuild_insert(const VectorRecord& point) {
    std::unique_lock lock(mutex_);
    const std::size_t total = main_n_ + delta_n_;
    if (point.id != total)
        throw std::invalid_argument("naive_rebuild_insert: id " + std::to_string(point.id) +
                                    " is not the next arrival id " + std::to_string(total));
    if (total >= params_.n)
        throw std::length_error("naive_rebuild_insert: index sized for final cardinality " +
                                std::to_string(params_.n) + " is full");
    data_->append(point.coords);
    rebuild_main_unlocked();
}

void StreamingIndex::rebuild_main_unlocked() {
    // full batch rebuild over everything indexed so far; any pending
    // delta is folded in
    if (algo_ == Algo::c2lsh) {
        if (main_c2_) io_base_ += main_c2_->io_stats();
        main_c2_.reset();
        main_c2_ = c2lsh::C2lshIndex::build(data_, params_, proj_, dir_, page_size_);
        for (auto& map : delta_buckets_) map.clear();
    } else {
        if (main_qa_) io_base_ += main_qa_->io_stats();
        main_qa_.reset();
        main_qa_ = qalsh::QalshIndex::build(data_, params_, proj_, dir_, page_size_, mode_);
        for (auto& map : delta_values_) map.clear();
    }
    main_n_ = data_->size();
    delta_n_ = 0;
}

std::vector<Neighbor> StreamingIndex::query(std::span<const float> q, std::size_t k) const {
    std::shared_lock lock(mutex_);
    return algo_ == Algo::c2lsh ? query_c2lsh(q, k) : query_qalsh(q, k);
}

std::vector<Neighbor> StreamingIndex::query_c2lsh(std::span<const float> q, std::size_t k) const {
    const std::size_t m = params_.m;
    const std::size_t n_total = main_n_ + delta_n_;
    std::vector<std::int64_t> base(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double h = project(proj_, i, q);
        base[i] = static_cast<std::int64_t>(std::floor((h + proj_.b[i]) / proj_.w));
    }

    auto delta_count_in = [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
        std::uint64_t count = 0;
        const auto& map = delta_buckets_[i];
        for (auto it = map.lower_bound(lo); it != map.end() && it->first <= hi; ++it)
            count += it->second.size();
        return count;
    };
    auto delta_covered = [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
        const auto& map = delta_buckets_[i];
        return map.empty() || (lo <= map.begin()->first && hi >= map.rbegin()->first);
    };
    auto main_covered = [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
        if (!main_c2_) return true;
        const auto& file = main_c2_->file(i);
        return file.id_count() == 0 || (lo <= file.min_bucket() && hi >= file.max_bucket());
    };

    const std::int64_t r0 = detail::initial_radius_walk(
        base, params_.c, page_size_,
        [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
            std::uint64_t bytes = 4 * delta_count_in(i, lo, hi);
            if (main_c2_) bytes += main_c2_->file(i).range_payload_bytes(lo, hi);
            return bytes;
        },
        [&](std::size_t i, std::int64_t lo, std::int64_t hi) {
            return main_covered(i, lo, hi) && delta_covered(i, lo, hi);
        });

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
            if (main_c2_)
                for (std::uint32_t id : main_c2_->file(i).read_bucket_range(a, z, local)) feed(id);
            const auto& map = delta_buckets_[i];
            for (auto it = map.lower_bound(a); it != map.end() && it->first <= z; ++it)
                for (std::uint32_t id : it->second) feed(id);
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
            if (!cov[i].any) return false;
            if (!main_covered(i, cov[i].lo, cov[i].hi)) return false;
            if (!delta_covered(i, cov[i].lo, cov[i].hi)) return false;
        }
        return true;
    };

    auto result = detail::collision_count_query(*data_, q, k, params_, n_total, r0, fetch, exhausted);
    if (main_c2_) main_c2_->charge_io(local);
    return result;
}

std::vector<Neighbor> StreamingIndex::query_qalsh(std::span<const float> q, std::size_t k) const {
    const std::size_t m = params_.m;
    const std::size_t n_total = main_n_ + delta_n_;

    // per-projection cursors over the in-memory component
    struct DeltaScan {
        const std::multimap<double, std::uint32_t>* map;
        std::multimap<double, std::uint32_t>::const_iterator back, fwd;
    };
    std::vector<double> hvals(m);
    std::vector<DeltaScan> delta(m);
    std::vector<qalsh::RangeScan> scans;
    scans.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        hvals[i] = project(proj_, i, q);
        delta[i].map = &delta_values_[i];
        delta[i].fwd = delta_values_[i].lower_bound(hvals[i]);
        delta[i].back = delta[i].fwd;
        if (main_qa_) scans.emplace_back(main_qa_->tree(i), hvals[i], mode_, params_.w);
    }

    auto fetch = [&](std::size_t i, std::int64_t radius, auto&& feed) {
        if (main_qa_)
            for (std::uint32_t id : scans[i].advance(radius)) feed(id);
        const double t = params_.w * static_cast<double>(radius) / 2.0;
        auto& ds = delta[i];
        while (ds.back != ds.map->begin() && std::prev(ds.back)->first >= hvals[i] - t) {
            --ds.back;
            feed(ds.back->second);
        }
        while (ds.fwd != ds.map->end() && ds.fwd->first <= hvals[i] + t) {
            feed(ds.fwd->second);
            ++ds.fwd;
        }
    };
    auto exhausted = [&]() {
        for (std::size_t i = 0; i < m; ++i) {
            if (main_qa_ && !scans[i].exhausted()) return false;
            if (delta[i].back != delta[i].map->begin() || delta[i].fwd != delta[i].map->end())
                return false;
        }
        return true;
    };
    return detail::collision_count_query(*data_, q, k, params_, n_total, 1, fetch, exhausted);
}

} // namespace rtlsh::stream
