#include "rtlsh/manifest.hpp"

#include "rtlsh/vectors.hpp"

#include <fstream>
#include <map>
#include <string>

namespace rtlsh {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void save_manifest(const Manifest& man, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "n=" << man.params.n << "\n";
    out << "d=" << man.dim << "\n";
    out << "m=" << man.params.m << "\n";
    out << "w=" << fmt_double(man.params.w) << "\n";
    out << "c=" << fmt_double(man.params.c) << "\n";
    out << "delta=" << fmt_double(man.params.delta) << "\n";
    out << "beta=" << fmt_double(man.params.beta) << "\n";
    out << "l=" << man.params.l << "\n";
    out << "page_size=" << man.page_size << "\n";
    out << "seed=" << man.seed << "\n";
    if (!out) throw IoError("write failed on " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path.string() + ": malformed manifest line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw FormatError(path.string() + ": manifest missing key " + key);
        return it->second;
    };
    Manifest man;
    man.params.n = std::stoull(get("n"));
    man.dim = std::stoull(get("d"));
    man.params.m = std::stoull(get("m"));
    man.params.w = std::stod(get("w"));
    man.params.c = std::stod(get("c"));
    man.params.delta = std::stod(get("delta"));
    man.params.beta = std::stod(get("beta"));
    man.params.l = std::stoull(get("l"));
    man.page_size = std::stoull(get("page_size"));
    man.seed = std::stoull(get("seed"));
    man.params.p1 = collision_probability(1.0, man.params.w);
    man.params.p2 = collision_probability(man.params.c, man.params.w);
    if (man.params.m > 0)
        man.params.alpha =
            static_cast<double>(man.params.l) / static_cast<double>(man.params.m);
    return man;
}

} // namespace rtlsh
