#include "rtlsh/qalsh.hpp"

#include "rtlsh/counting.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace rtlsh::qalsh {

namespace {

constexpr std::size_t kLeafHeaderBytes = 24;
constexpr std::size_t kIndexHeaderBytes = 16;

std::filesystem::path values_path(const std::filesystem::path& qt_path) {
    auto p = qt_path;
    p.replace_extension(".qv");
    return p;
}

void put_bytes(std::vector<char>& buf, const void* src, std::size_t len) {
    const char* p = static_cast<const char*>(src);
    buf.insert(buf.end(), p, p + len);
}

template <typename T>
T get_as(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

} // namespace

NodeCapacities node_capacities(std::size_t page_size) {
    if (page_size < 32)
        throw std::invalid_argument("node_capacities: page size " + std::to_string(page_size) +
                                    " too small");
    NodeCapacities caps{(page_size - kLeafHeaderBytes) / 4, (page_size - kIndexHeaderBytes) / 8};
    if (caps.leaf < 1 || caps.index < 2)
        throw std::invalid_argument("node_capacities: page size " + std::to_string(page_size) +
                                    " too small");
    return caps;
}

QalshTree QalshTree::build(std::span<const std::pair<double, std::uint32_t>> sorted_pairs,
                           std::size_t page_size) {
    node_capacities(page_size); // validates page_size
    QalshTree tree;
    tree.page_size_ = page_size;
    tree.values_.reserve(sorted_pairs.size());
    tree.ids_.reserve(sorted_pairs.size());
    for (std::size_t i = 0; i < sorted_pairs.size(); ++i) {
        if (i > 0 && sorted_pairs[i] < sorted_pairs[i - 1])
            throw std::invalid_argument("qalsh build_tree: input pairs not sorted at position " +
                                        std::to_string(i));
        tree.values_.push_back(sorted_pairs[i].first);
        tree.ids_.push_back(sorted_pairs[i].second);
    }
    tree.rebuild_index_levels();
    return tree;
}

std::size_t QalshTree::leaf_count() const {
    const auto cap = capacities().leaf;
    return (values_.size() + cap - 1) / cap;
}

std::size_t QalshTree::index_node_count() const {
    std::size_t total = 0;
    for (const auto& level : levels_) total += level.size();
    return total;
}

std::size_t QalshTree::nonroot_index_node_count() const {
    const std::size_t total = index_node_count();
    return total == 0 ? 0 : total - 1;
}

std::size_t QalshTree::leaf_of(std::size_t position) const {
    return position / capacities().leaf;
}

std::size_t QalshTree::leaf_begin(std::size_t leaf) const {
    return leaf * capacities().leaf;
}

std::size_t QalshTree::leaf_end(std::size_t leaf) const {
    return std::min(values_.size(), (leaf + 1) * capacities().leaf);
}

std::size_t QalshTree::leaf_entry_count(std::size_t leaf) const {
    return leaf_end(leaf) - leaf_begin(leaf);
}

void QalshTree::rebuild_index_levels() {
    levels_.clear();
    const std::size_t leaves = leaf_count();
    if (leaves <= 1) return; // a single leaf doubles as the root
    const std::size_t cap = capacities().index;

    std::vector<double> child_keys(leaves);
    for (std::size_t j = 0; j < leaves; ++j) child_keys[j] = leaf_min_key(j);

    std::size_t child_count = leaves;
    while (child_count > 1) {
        const std::size_t nodes = (child_count + cap - 1) / cap;
        std::vector<IndexNode> level(nodes);
        std::vector<double> next_keys(nodes);
        for (std::size_t v = 0; v < nodes; ++v) {
            const std::size_t begin = v * cap;
            const std::size_t end = std::min(child_count, begin + cap);
            level[v].keys.assign(child_keys.begin() + static_cast<std::ptrdiff_t>(begin),
                                 child_keys.begin() + static_cast<std::ptrdiff_t>(end));
            level[v].children.resize(end - begin);
            for (std::size_t e = 0; e < end - begin; ++e)
                level[v].children[e] = static_cast<std::int32_t>(begin + e);
            next_keys[v] = child_keys[begin];
        }
        levels_.push_back(std::move(level));
        child_keys = std::move(next_keys);
        child_count = nodes;
    }
}

bool QalshTree::levels_size_equal(const QalshTree& other) const {
    if (levels_.size() != other.levels_.size()) return false;
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        if (levels_[i].size() != other.levels_[i].size()) return false;
        for (std::size_t v = 0; v < levels_[i].size(); ++v)
            if (levels_[i][v].keys != other.levels_[i][v].keys ||
                levels_[i][v].children != other.levels_[i][v].children)
                return false;
    }
    return true;
}

std::size_t QalshTree::lower_position(double hval) const {
    return static_cast<std::size_t>(
        std::lower_bound(values_.begin(), values_.end(), hval) - values_.begin());
}

std::size_t QalshTree::upper_position(double hval) const {
    return static_cast<std::size_t>(
        std::upper_bound(values_.begin(), values_.end(), hval) - values_.begin());
}

QalshTree::LeafPos QalshTree::locate_leaf(double hval) const {
    if (values_.empty()) throw std::invalid_argument("locate_leaf: empty tree");
    const std::size_t p = lower_position(hval);
    const std::size_t leaf = p == values_.size() ? leaf_count() - 1 : leaf_of(p);
    return {leaf, p - leaf_begin(leaf)};
}

std::size_t QalshTree::descend(double hval) const {
    if (levels_.empty()) return 0;
    std::size_t child = 0;
    for (std::size_t depth = levels_.size(); depth-- > 0;) {
        const IndexNode& node = levels_[depth][child];
        charge_page();
        auto it = std::upper_bound(node.keys.begin(), node.keys.end(), hval);
        const std::size_t pos =
            it == node.keys.begin() ? 0 : static_cast<std::size_t>(it - node.keys.begin() - 1);
        child = static_cast<std::size_t>(node.children[pos]);
    }
    return child;
}

void QalshTree::save(const std::filesystem::path& qt_path) const {
    const std::size_t leaves = leaf_count();
    const std::size_t nodes = node_count();
    std::vector<char> out;
    out.reserve((1 + nodes) * page_size_);

    auto pad_to = [&](std::size_t target) { out.resize(target, 0); };

    // header page: page size, node count, zero fill
    {
        const auto ps32 = static_cast<std::int32_t>(page_size_);
        const auto nc32 = static_cast<std::int32_t>(nodes);
        put_bytes(out, &ps32, 4);
        put_bytes(out, &nc32, 4);
        pad_to(page_size_);
    }

    // leaf pages
    for (std::size_t j = 0; j < leaves; ++j) {
        const std::size_t page_start = out.size();
        const auto count32 = static_cast<std::int32_t>(leaf_entry_count(j));
        const float key32 = static_cast<float>(leaf_min_key(j));
        const auto ord32 = static_cast<std::int32_t>(j);
        const std::int32_t left = j > 0 ? static_cast<std::int32_t>(j - 1) : -1;
        const std::int32_t right = j + 1 < leaves ? static_cast<std::int32_t>(j + 1) : -1;
        put_bytes(out, &count32, 4);
        put_bytes(out, &key32, 4);
        put_bytes(out, &ord32, 4);
        put_bytes(out, &left, 4);
        put_bytes(out, &right, 4);
        pad_to(page_start + kLeafHeaderBytes);
        for (std::size_t p = leaf_begin(j); p < leaf_end(j); ++p) {
            const auto id32 = static_cast<std::int32_t>(ids_[p]);
            put_bytes(out, &id32, 4);
        }
        pad_to(page_start + page_size_);
    }

    // index pages, bottom level first, children as absolute node ordinals
    std::size_t child_base = 0; // leaves occupy ordinals [0, leaves)
    std::size_t level_base = leaves;
    for (std::size_t depth = 0; depth < levels_.size(); ++depth) {
        for (const auto& node : levels_[depth]) {
            const std::size_t page_start = out.size();
            const auto count32 = static_cast<std::int32_t>(node.keys.size());
            const auto level32 = static_cast<std::int32_t>(depth + 1);
            put_bytes(out, &count32, 4);
            put_bytes(out, &level32, 4);
            pad_to(page_start + kIndexHeaderBytes);
            for (std::size_t e = 0; e < node.keys.size(); ++e) {
                const float key32 = static_cast<float>(node.keys[e]);
                const auto child32 =
                    static_cast<std::int32_t>(child_base + static_cast<std::size_t>(node.children[e]));
                put_bytes(out, &key32, 4);
                put_bytes(out, &child32, 4);
            }
            pad_to(page_start + page_size_);
        }
        child_base = level_base;
        level_base += levels_[depth].size();
    }

    std::ofstream qt(qt_path, std::ios::binary | std::ios::trunc);
    if (!qt) throw IoError("cannot open " + qt_path.string() + " for writing");
    qt.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!qt) throw IoError("write failed on " + qt_path.string());

    std::ofstream qv(values_path(qt_path), std::ios::binary | std::ios::trunc);
    if (!qv) throw IoError("cannot open " + values_path(qt_path).string() + " for writing");
    const auto n64 = static_cast<std::int64_t>(values_.size());
    qv.write(reinterpret_cast<const char*>(&n64), 8);
    qv.write(reinterpret_cast<const char*>(values_.data()),
             static_cast<std::streamsize>(values_.size() * 8));
    if (!qv) throw IoError("write failed on " + values_path(qt_path).string());
}

QalshTree QalshTree::load(const std::filesystem::path& qt_path) {
    std::ifstream qt(qt_path, std::ios::binary);
    if (!qt) throw IoError("cannot open " + qt_path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(qt)), std::istreambuf_iterator<char>());

    if (buf.size() < 8) throw FormatError(qt_path.string() + ": missing header page");
    const auto page_size = static_cast<std::size_t>(get_as<std::int32_t>(buf.data()));
    const auto node_count_stored = static_cast<std::size_t>(get_as<std::int32_t>(buf.data() + 4));
    const auto caps = node_capacities(page_size);
    if (buf.size() != (1 + node_count_stored) * page_size)
        throw FormatError(qt_path.string() + ": file size does not match header page + " +
                          std::to_string(node_count_stored) + " node pages");

    // values sidecar
    std::ifstream qv(values_path(qt_path), std::ios::binary);
    if (!qv) throw IoError("cannot open " + values_path(qt_path).string());
    std::int64_t n64 = 0;
    qv.read(reinterpret_cast<char*>(&n64), 8);
    if (!qv || n64 < 0) throw FormatError(values_path(qt_path).string() + ": malformed header");
    std::vector<double> values(static_cast<std::size_t>(n64));
    qv.read(reinterpret_cast<char*>(values.data()), n64 * 8);
    if (!qv && n64 > 0) throw FormatError(values_path(qt_path).string() + ": truncated values");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] < values[i - 1])
            throw FormatError(values_path(qt_path).string() + ": values not sorted at entry " +
                              std::to_string(i));

    QalshTree tree;
    tree.page_size_ = page_size;
    tree.values_ = std::move(values);
    tree.ids_.resize(tree.values_.size());

    const std::size_t leaves = tree.leaf_count();
    auto page = [&](std::size_t node_ordinal) { return buf.data() + (1 + node_ordinal) * page_size; };

    for (std::size_t j = 0; j < leaves; ++j) {
        const char* p = page(j);
        const auto count = static_cast<std::size_t>(get_as<std::int32_t>(p));
        if (count != tree.leaf_entry_count(j))
            throw FormatError(qt_path.string() + ": corrupt page " + std::to_string(j) +
                              " (leaf entry count)");
        const float stored_key = get_as<float>(p + 4);
        if (stored_key != static_cast<float>(tree.leaf_min_key(j)))
            throw FormatError(qt_path.string() + ": corrupt page " + std::to_string(j) +
                              " (leaf key mismatch)");
        if (get_as<std::int32_t>(p + 8) != static_cast<std::int32_t>(j))
            throw FormatError(qt_path.string() + ": corrupt page " + std::to_string(j) +
                              " (leaf ordinal)");
        for (std::size_t e = 0; e < count; ++e) {
            const auto id = get_as<std::int32_t>(p + kLeafHeaderBytes + e * 4);
            if (id < 0)
                throw FormatError(qt_path.string() + ": corrupt page " + std::to_string(j) +
                                  " (negative id)");
            tree.ids_[tree.leaf_begin(j) + e] = static_cast<std::uint32_t>(id);
        }
    }

    tree.rebuild_index_levels();
    if (tree.node_count() != node_count_stored)
        throw FormatError(qt_path.string() + ": header node count " +
                          std::to_string(node_count_stored) + " does not match rebuilt tree (" +
                          std::to_string(tree.node_count()) + ")");

    // validate index pages against the rebuilt levels
    std::size_t ordinal = leaves;
    std::size_t child_base = 0;
    for (std::size_t depth = 0; depth < tree.levels_.size(); ++depth) {
        for (const auto& node : tree.levels_[depth]) {
            const char* p = page(ordinal);
            const auto count = static_cast<std::size_t>(get_as<std::int32_t>(p));
            if (count != node.keys.size() ||
                get_as<std::int32_t>(p + 4) != static_cast<std::int32_t>(depth + 1))
                throw FormatError(qt_path.string() + ": corrupt page " + std::to_string(ordinal) +
                                  " (index node header)");
            for (std::size_t e = 0; e < count; ++e) {
                const float key = get_as<float>(p + kIndexHeaderBytes + e * 8);
                const auto child = get_as<std::int32_t>(p + kIndexHeaderBytes + e * 8 + 4);
                if (key != static_cast<float>(node.keys[e]) ||
                    child != static_cast<std::int32_t>(child_base +
                                                       static_cast<std::size_t>(node.children[e])))
                    throw FormatError(qt_path.string() + ": corrupt page " +
                                      std::to_string(ordinal) + " (index entry " +
                                      std::to_string(e) + ")");
            }
            ++ordinal;
        }
        child_base = depth == 0 ? leaves : child_base + tree.levels_[depth - 1].size();
    }
    (void)caps;
    return tree;
}

RangeScan::RangeScan(const QalshTree& tree, double q_hval, SearchMode mode, double w)
    : tree_(tree), q_(q_hval), mode_(mode), w_(w) {
    if (tree_.size() == 0) {
        fwd_ = 0;
        back_ = -1;
        cov_lo_ = 0;
        cov_hi_ = -1;
        return;
    }
    if (mode_ == SearchMode::corrected) {
        const std::size_t p = tree_.lower_position(q_);
        back_ = static_cast<std::ptrdiff_t>(p) - 1;
        fwd_ = p;
        tree_.descend(q_); // locate the query's leaf once
    } else {
        // Defective start rule: a query sitting at the end of node X
        // starts from node X+1.
        const std::size_t up = tree_.upper_position(q_);
        start_leaf_ = up >= tree_.size() ? tree_.leaf_count() - 1 : tree_.leaf_of(up);
    }
}

void RangeScan::touch_leaf(std::size_t leaf) {
    const auto l = static_cast<std::ptrdiff_t>(leaf);
    if (charged_lo_ < 0) {
        charged_lo_ = charged_hi_ = l;
        tree_.charge_page();
    } else if (l < charged_lo_) {
        charged_lo_ = l;
        tree_.charge_page();
    } else if (l > charged_hi_) {
        charged_hi_ = l;
        tree_.charge_page();
    }
}

std::vector<std::uint32_t> RangeScan::advance(std::int64_t radius) {
    if (tree_.size() == 0) return {};
    return mode_ == SearchMode::corrected ? advance_corrected(radius) : advance_legacy(radius);
}

std::vector<std::uint32_t> RangeScan::advance_corrected(std::int64_t radius) {
    const double t = w_ * static_cast<double>(radius) / 2.0;
    const double lo = q_ - t;
    const double hi = q_ + t;
    const auto& values = tree_.values();
    const auto& ids = tree_.ids();
    std::vector<std::uint32_t> out;
    while (back_ >= 0 && values[static_cast<std::size_t>(back_)] >= lo) {
        touch_leaf(tree_.leaf_of(static_cast<std::size_t>(back_)));
        out.push_back(ids[static_cast<std::size_t>(back_)]);
        --back_;
    }
    while (fwd_ < values.size() && values[fwd_] <= hi) {
        touch_leaf(tree_.leaf_of(fwd_));
        out.push_back(ids[fwd_]);
        ++fwd_;
    }
    return out;
}

std::vector<std::uint32_t> RangeScan::advance_legacy(std::int64_t radius) {
    const double t = w_ * static_cast<double>(radius) / 2.0;
    const std::size_t leaves = tree_.leaf_count();

    tree_.descend(q_); // re-seeks the query node every radius

    std::size_t lo_leaf = start_leaf_;
    while (lo_leaf > 0 && tree_.leaf_min_key(lo_leaf - 1) >= q_ - t) --lo_leaf;
    std::size_t hi_leaf = start_leaf_;
    while (hi_leaf + 1 < leaves && tree_.leaf_min_key(hi_leaf + 1) <= q_ + t) ++hi_leaf;

    for (std::size_t j = lo_leaf; j <= hi_leaf; ++j) tree_.charge_page();

    const auto& ids = tree_.ids();
    std::vector<std::uint32_t> out;
    auto emit_leaves = [&](std::ptrdiff_t a, std::ptrdiff_t b) {
        for (std::ptrdiff_t j = a; j <= b; ++j) {
            const auto leaf = static_cast<std::size_t>(j);
            for (std::size_t p = tree_.leaf_begin(leaf); p < tree_.leaf_end(leaf); ++p)
                out.push_back(ids[p]);
        }
    };
    const auto lo = static_cast<std::ptrdiff_t>(lo_leaf);
    const auto hi = static_cast<std::ptrdiff_t>(hi_leaf);
    if (cov_lo_ > cov_hi_) {
        emit_leaves(lo, hi);
        cov_lo_ = lo;
        cov_hi_ = hi;
    } else {
        emit_leaves(lo, std::min(cov_lo_ - 1, hi));
        emit_leaves(std::max(cov_hi_ + 1, lo), hi);
        cov_lo_ = std::min(cov_lo_, lo);
        cov_hi_ = std::max(cov_hi_, hi);
    }
    return out;
}

bool RangeScan::exhausted() const {
    if (tree_.size() == 0) return true;
    if (mode_ == SearchMode::corrected) return back_ < 0 && fwd_ >= tree_.size();
    return cov_lo_ == 0 && cov_hi_ == static_cast<std::ptrdiff_t>(tree_.leaf_count()) - 1;
}

std::vector<std::uint32_t> range_collect(const QalshTree& tree, double q_hval,
                                         std::int64_t radius, SearchMode mode, double w) {
    RangeScan scan(tree, q_hval, mode, w);
    auto ids = scan.advance(radius);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string QalshIndex::tree_name(std::size_t proj_index) {
    return "proj_" + std::to_string(proj_index) + ".qt";
}

QalshIndex QalshIndex::build(std::shared_ptr<const Dataset> data, const LshParams& params,
                             const ProjectionSet& proj, const std::filesystem::path& dir,
                             std::size_t page_size, SearchMode mode) {
    if (!data || data->empty()) throw std::invalid_argument("qalsh build: empty dataset");
    if (params.n < data->size())
        throw std::invalid_argument("qalsh build: params sized for cardinality " +
                                    std::to_string(params.n) + " < dataset size " +
                                    std::to_string(data->size()));
    if (proj.m != params.m)
        throw std::invalid_argument("qalsh build: projection count does not match params.m");
    if (proj.dim != data->dim())
        throw std::invalid_argument("qalsh build: projection dimension mismatch");

    std::filesystem::create_directories(dir);
    QalshIndex idx;
    idx.dir_ = dir;
    idx.params_ = params;
    idx.proj_ = proj;
    idx.page_size_ = page_size;
    idx.mode_ = mode;
    idx.n_ = data->size();

    const std::size_t n = data->size();
    std::vector<std::pair<double, std::uint32_t>> pairs(n);
    for (std::size_t i = 0; i < params.m; ++i) {
        for (std::size_t p = 0; p < n; ++p)
            pairs[p] = {project(proj, i, data->point(p)), static_cast<std::uint32_t>(p)};
        std::sort(pairs.begin(), pairs.end());
        auto tree = QalshTree::build(pairs, page_size);
        try {
            tree.save(dir / tree_name(i));
        } catch (const IoError& e) {
            throw IoError("projection " + std::to_string(i) + ": " + e.what());
        }
        idx.trees_.push_back(std::move(tree));
    }
    save_projections(proj, dir / "projections.bin");
    save_manifest({params, data->dim(), page_size, proj.seed}, dir / "manifest.txt");
    idx.data_ = std::move(data);
    return idx;
}

QalshIndex QalshIndex::open(const std::filesystem::path& dir, std::shared_ptr<const Dataset> data,
                            SearchMode mode) {
    QalshIndex idx;
    idx.dir_ = dir;
    auto man = load_manifest(dir / "manifest.txt");
    idx.params_ = man.params;
    idx.page_size_ = man.page_size;
    idx.mode_ = mode;
    idx.proj_ = load_projections(dir / "projections.bin");
    idx.trees_.reserve(idx.params_.m);
    for (std::size_t i = 0; i < idx.params_.m; ++i)
        idx.trees_.push_back(QalshTree::load(dir / tree_name(i)));
    idx.n_ = idx.trees_.empty() ? 0 : idx.trees_[0].size();
    if (!data || data->size() < idx.n_)
        throw std::invalid_argument("qalsh open: dataset smaller than the indexed point set");
    idx.data_ = std::move(data);
    return idx;
}

std::vector<Neighbor> QalshIndex::query(std::span<const float> q, std::size_t k) const {
    const std::size_t m = params_.m;
    std::vector<RangeScan> scans;
    scans.reserve(m);
    for (std::size_t i = 0; i < m; ++i)
        scans.emplace_back(trees_[i], project(proj_, i, q), mode_, params_.w);

    auto fetch = [&](std::size_t i, std::int64_t radius, auto&& feed) {
        for (std::uint32_t id : scans[i].advance(radius)) feed(id);
    };
    auto exhausted = [&]() {
        for (const auto& scan : scans)
            if (!scan.exhausted()) return false;
        return true;
    };
    return detail::collision_count_query(*data_, q, k, params_, n_, 1, fetch, exhausted);
}

IoStats QalshIndex::io_stats() const {
    IoStats total;
    for (const auto& tree : trees_) total += tree.io_stats();
    return total;
}

void QalshIndex::reset_io_stats() const {
    for (const auto& tree : trees_) tree.reset_io_stats();
}

} // namespace rtlsh::qalsh
