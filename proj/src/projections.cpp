#include "rtlsh/projections.hpp"

#include "rtlsh/vectors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rtlsh {

double GaussianSource::next() {
    if (spare_) {
        double v = *spare_;
        spare_.reset();
        return v;
    }
    // Box-Muller on open-interval uniforms; u1 = 0 would take log(0).
    double u1;
    do {
        u1 = uniform_unit(eng_);
    } while (u1 == 0.0);
    const double u2 = uniform_unit(eng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
}

ProjectionSet generate_projections(std::size_t dim, std::size_t m, double w, std::uint64_t seed) {
    if (dim < 1 || m < 1) throw std::invalid_argument("generate_projections: d and m must be >= 1");
    if (!(w > 0.0)) throw std::invalid_argument("generate_projections: w must be > 0");
    ProjectionSet proj;
    proj.m = m;
    proj.dim = dim;
    proj.w = w;
    proj.seed = seed;
    std::mt19937_64 eng(seed);
    GaussianSource gauss(eng);
    proj.a.resize(m * dim);
    for (auto& v : proj.a) v = gauss.next();
    proj.b.resize(m);
    for (auto& v : proj.b) v = uniform_unit(eng) * w;
    return proj;
}

double project(const ProjectionSet& proj, std::size_t proj_index, std::span<const float> point) {
    if (point.size() != proj.dim)
        throw std::invalid_argument("project: point dimension " + std::to_string(point.size()) +
                                    " does not match projection dimension " +
                                    std::to_string(proj.dim));
    auto dir = proj.direction(proj_index);
    double acc = 0.0;
    for (std::size_t i = 0; i < proj.dim; ++i) acc += dir[i] * static_cast<double>(point[i]);
    return acc;
}

std::int64_t next_radius(std::int64_t radius, double c) {
    auto next = static_cast<std::int64_t>(std::llround(static_cast<double>(radius) * c));
    return next > radius ? next : radius + 1;
}

bool radius_on_schedule(std::int64_t radius, double c) {
    if (radius < 1) return false;
    for (std::int64_t r = 1; r <= radius; r = next_radius(r, c))
        if (r == radius) return true;
    return false;
}

std::int64_t bucket_id(const ProjectionSet& proj, std::size_t proj_index, double hval,
                       std::int64_t radius, double c) {
    if (!radius_on_schedule(radius, c))
        throw std::invalid_argument("bucket_id: radius " + std::to_string(radius) +
                                    " is not on the schedule for c=" + std::to_string(c));
    const double width = proj.w * static_cast<double>(radius);
    return static_cast<std::int64_t>(std::floor((hval + proj.b[proj_index]) / width));
}

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

} // namespace

double collision_probability(double s, double w) {
    if (!(s > 0.0)) throw std::invalid_argument("collision_probability: s must be > 0");
    if (!(w > 0.0)) throw std::invalid_argument("collision_probability: w must be > 0");
    const double t = w / s;
    return 2.0 * norm_cdf(t) - 1.0 -
           (2.0 / (std::sqrt(2.0 * std::numbers::pi) * t)) * (1.0 - std::exp(-t * t / 2.0));
}

LshParams derive_parameters(std::size_t n, double c, double w, double delta, std::size_t k) {
    if (n < 1) throw std::invalid_argument("derive_parameters: n must be >= 1");
    if (!(c > 1.0)) throw std::invalid_argument("derive_parameters: c must be > 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("derive_parameters: delta must be in (0,1)");
    if (k < 1) throw std::invalid_argument("derive_parameters: k must be >= 1");

    LshParams p;
    p.n = n;
    p.c = c;
    p.w = w;
    p.delta = delta;
    p.p1 = collision_probability(1.0, w);
    p.p2 = collision_probability(c, w);
    if (!(p.p1 > p.p2))
        throw std::domain_error("derive_parameters: infeasible, p1 <= p2");
    const double nd = static_cast<double>(n);
    p.beta = std::min(1.0, std::max(100.0 / nd, static_cast<double>(k) / nd));

    const double t_delta = std::log(1.0 / delta);
    const double t_beta = std::log(2.0 / p.beta);
    // alpha equalizes the two required m values: (p1-a)/(a-p2) = sqrt(t_delta/t_beta).
    const double eta = std::sqrt(t_delta / t_beta);
    p.alpha = (p.p1 + eta * p.p2) / (1.0 + eta);
    const double m_real = (std::sqrt(t_beta) + std::sqrt(t_delta)) * (std::sqrt(t_beta) + std::sqrt(t_delta)) /
                          (2.0 * (p.p1 - p.p2) * (p.p1 - p.p2));
    p.m = static_cast<std::size_t>(std::ceil(m_real));
    if (p.m < 1) p.m = 1;
    p.l = static_cast<std::size_t>(std::ceil(p.alpha * static_cast<double>(p.m)));
    if (p.l < 1) p.l = 1;
    if (p.l > p.m) p.l = p.m;
    const double lm = static_cast<double>(p.l) / static_cast<double>(p.m);
    if (!(p.p2 < lm && lm < p.p1))
        throw std::domain_error("derive_parameters: threshold fraction " + std::to_string(lm) +
                                " escaped (p2, p1)");
    return p;
}

void save_projections(const ProjectionSet& proj, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const auto m32 = static_cast<std::int32_t>(proj.m);
    const auto d32 = static_cast<std::int32_t>(proj.dim);
    const auto seed64 = static_cast<std::int64_t>(proj.seed);
    out.write(reinterpret_cast<const char*>(&m32), 4);
    out.write(reinterpret_cast<const char*>(&d32), 4);
    out.write(reinterpret_cast<const char*>(&proj.w), 8);
    out.write(reinterpret_cast<const char*>(&seed64), 8);
    for (std::size_t i = 0; i < proj.m; ++i) {
        out.write(reinterpret_cast<const char*>(proj.a.data() + i * proj.dim),
                  static_cast<std::streamsize>(proj.dim * 8));
        out.write(reinterpret_cast<const char*>(&proj.b[i]), 8);
    }
    if (!out) throw IoError("write failed on " + path.string());
}

ProjectionSet load_projections(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::int32_t m32 = 0, d32 = 0;
    std::int64_t seed64 = 0;
    double w = 0.0;
    in.read(reinterpret_cast<char*>(&m32), 4);
    in.read(reinterpret_cast<char*>(&d32), 4);
    in.read(reinterpret_cast<char*>(&w), 8);
    in.read(reinterpret_cast<char*>(&seed64), 8);
    if (!in || m32 < 1 || d32 < 1)
        throw FormatError(path.string() + ": malformed projection header");
    ProjectionSet proj;
    proj.m = static_cast<std::size_t>(m32);
    proj.dim = static_cast<std::size_t>(d32);
    proj.w = w;
    proj.seed = static_cast<std::uint64_t>(seed64);
    proj.a.resize(proj.m * proj.dim);
    proj.b.resize(proj.m);
    for (std::size_t i = 0; i < proj.m; ++i) {
        in.read(reinterpret_cast<char*>(proj.a.data() + i * proj.dim),
                static_cast<std::streamsize>(proj.dim * 8));
        in.read(reinterpret_cast<char*>(&proj.b[i]), 8);
    }
    if (!in) throw FormatError(path.string() + ": truncated projection data");
    return proj;
}

} // namespace rtlsh
