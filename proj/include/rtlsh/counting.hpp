#pragma once

#include "rtlsh/projections.hpp"
#include "rtlsh/vectors.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace rtlsh::detail {

/// Floor division for bucket arithmetic on negative bucket numbers.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    const std::int64_t q = a / b;
    const std::int64_t r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

/// Optional instrumentation filled in by collision_count_query.
struct QueryStats {
    std::uint32_t max_counter = 0;
    std::int64_t final_radius = 0;
    std::size_t radius_steps = 0;
    std::size_t candidate_count = 0;
};

/// The collision-counting loop shared by both index designs and by the
/// streaming combiner.
///
/// Per radius, fetch(proj_index, radius, feed) must feed every id that is
/// newly covered by that projection at that radius, and never an id twice
/// for the same projection; the engine promotes an id to candidate when
/// its counter reaches params.l and computes its true distance once.
///
/// Stops after a radius level when at least k candidates lie within
/// c*R*w (T1), when the candidate count reaches beta*n + k - 1 (T2), or
/// when exhausted() reports that no component has anything left. A budget
/// of the whole dataset (beta >= 1) disables the distance stop so the scan
/// runs to exhaustion, which makes the l=1, m=1 configuration exact.
template <typename Fetch, typename Exhausted>
std::vector<Neighbor> collision_count_query(const Dataset& data, std::span<const float> query,
                                            std::size_t k, const LshParams& params,
                                            std::size_t n_total, std::int64_t initial_radius,
                                            Fetch&& fetch, Exhausted&& exhausted,
                                            QueryStats* stats = nullptr) {
    if (k < 1 || k > n_total)
        throw std::invalid_argument("query: k=" + std::to_string(k) +
                                    " out of range for n=" + std::to_string(n_total));
    std::vector<std::uint32_t> counts(n_total, 0);
    std::vector<Neighbor> candidates;
    const double budget =
        params.beta * static_cast<double>(n_total) + static_cast<double>(k) - 1.0;
    const bool exhaustive = params.beta >= 1.0;
    const auto threshold = static_cast<std::uint32_t>(params.l);

    auto feed = [&](std::uint32_t id) {
        if (++counts[id] == threshold)
            candidates.push_back({id, euclidean(data.point(id), query)});
    };

    std::int64_t radius = initial_radius;
    std::size_t steps = 0;
    for (;;) {
        for (std::size_t i = 0; i < params.m; ++i) fetch(i, radius, feed);
        ++steps;
        if (!exhaustive) {
            const double bound = params.c * static_cast<double>(radius) * params.w;
            std::size_t within = 0;
            for (const auto& cand : candidates)
                if (cand.dist <= bound) ++within;
            if (within >= k) break; // T1
        }
        if (static_cast<double>(candidates.size()) >= budget) break; // T2
        if (exhausted()) break;
        radius = next_radius(radius, params.c);
    }

    if (stats) {
        stats->max_counter = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
        stats->final_radius = radius;
        stats->radius_steps = steps;
        stats->candidate_count = candidates.size();
    }

    std::sort(candidates.begin(), candidates.end());
    if (candidates.size() > k) candidates.resize(k);
    return candidates;
}

/// The base buckets a radius-R read touches: R - 1 buckets to each side
/// of the query's own bucket. This window contains the radius-R grid
/// cell, and unlike the grid cell it expands past bucket 0 in both
/// directions, so growing the radius eventually covers every bucket.
struct BucketWindow {
    std::int64_t lo;
    std::int64_t hi;
};
inline BucketWindow radius_window(std::int64_t base_bucket, std::int64_t radius) {
    return {base_bucket - (radius - 1), base_bucket + (radius - 1)};
}

/// Largest schedule radius whose per-projection coverage still fits
/// page_size bytes, clamped below at 1; stops growing once every
/// projection is fully covered.
template <typename BytesFn, typename CoversFn>
std::int64_t initial_radius_walk(std::span<const std::int64_t> base_buckets, double c,
                                 std::size_t page_size, BytesFn&& bytes, CoversFn&& covers) {
    std::int64_t best = 1;
    std::int64_t radius = 1;
    for (;;) {
        bool fits = true;
        bool all_covered = true;
        for (std::size_t i = 0; i < base_buckets.size(); ++i) {
            const auto [lo, hi] = radius_window(base_buckets[i], radius);
            if (bytes(i, lo, hi) > page_size) {
                fits = false;
                break;
            }
            if (!covers(i, lo, hi)) all_covered = false;
        }
        if (!fits) break;
        best = radius;
        if (all_covered) break;
        radius = next_radius(radius, c);
    }
    return best;
}

} // namespace rtlsh::detail
