#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace rtlsh {

/// Uniform double in [0, 1) from the engine's raw 64-bit output.
/// Bit-stable for a fixed seed: no distribution objects involved.
inline double uniform_unit(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Standard-normal sampler (Box-Muller), deterministic per engine state.
class GaussianSource {
public:
    explicit GaussianSource(std::mt19937_64& eng) : eng_(eng) {}

    double next();

private:
    std::mt19937_64& eng_;
    std::optional<double> spare_;
};

/// m random projections over d dimensions: directions a[i] with i.i.d.
/// standard-normal entries, offsets b[i] uniform in [0, w). Regenerating
/// from (seed, m, d, w) is bit-identical.
struct ProjectionSet {
    std::size_t m = 0;
    std::size_t dim = 0;
    double w = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> a; // m * dim, row-major
    std::vector<double> b; // m offsets

    std::span<const double> direction(std::size_t i) const { return {a.data() + i * dim, dim}; }

    friend bool operator==(const ProjectionSet&, const ProjectionSet&) = default;
};

ProjectionSet generate_projections(std::size_t dim, std::size_t m, double w, std::uint64_t seed);

/// Raw projection value a[i] . point — no offset, no flooring. This is
/// the value the query-aware index sorts.
double project(const ProjectionSet& proj, std::size_t proj_index, std::span<const float> point);

/// Geometric radius schedule 1, c, c^2, ... as integers (exact for
/// integer c; rounded with a strictly-increasing guard otherwise).
std::int64_t next_radius(std::int64_t radius, double c);
bool radius_on_schedule(std::int64_t radius, double c);

/// Bucket number floor((hval + b[i]) / (w * R)) at schedule radius R.
/// R = 1 gives the base bucket an index file stores.
std::int64_t bucket_id(const ProjectionSet& proj, std::size_t proj_index, double hval,
                       std::int64_t radius, double c);

/// Probability that two points at distance s share a base bucket under
/// this hash family; strictly decreasing in s. Requires s > 0, w > 0.
double collision_probability(double s, double w);

/// Index parameters shared by both designs.
struct LshParams {
    std::size_t n = 0;   // cardinality the parameters were sized for
    double c = 2.0;      // approximation ratio
    double w = 2.7191;   // bucket width
    double delta = 0.1;  // failure probability
    double beta = 0.0;   // candidate-fraction budget
    std::size_t m = 0;   // number of projections
    std::size_t l = 0;   // collision threshold
    double p1 = 0.0;     // collision probability at distance 1
    double p2 = 0.0;     // collision probability at distance c
    double alpha = 0.0;  // threshold fraction l/m was derived from
};

/// Sizes (m, l) so that, with probability terms bounded Chernoff-style,
/// a point at distance 1 reaches the collision threshold with probability
/// >= 1 - delta while points at distance c stay below it within the
/// beta*n candidate budget. beta = max(100/n, k/n). alpha equalizes the
/// two exponential bounds, minimizing m; l = ceil(alpha * m).
LshParams derive_parameters(std::size_t n, double c, double w, double delta, std::size_t k);

/// Binary sidecar: [int32 m][int32 d][float64 w][int64 seed] then
/// m x (d float64 direction + 1 float64 offset), little-endian.
void save_projections(const ProjectionSet& proj, const std::filesystem::path& path);
ProjectionSet load_projections(const std::filesystem::path& path);

} // namespace rtlsh
