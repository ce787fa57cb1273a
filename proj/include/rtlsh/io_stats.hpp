#pragma once

#include <atomic>
#include <cstdint>

namespace rtlsh {

/// Disk-access counters. `seeks` counts repositioned reads, `bytes_read`
/// the payload volume they touched. Counters are monotone until reset().
struct IoStats {
    std::uint64_t bytes_read = 0;
    std::uint64_t seeks = 0;

    void record(std::uint64_t bytes) {
        bytes_read += bytes;
        seeks += 1;
    }

    void reset() { *this = IoStats{}; }

    IoStats& operator+=(const IoStats& other) {
        bytes_read += other.bytes_read;
        seeks += other.seeks;
        return *this;
    }

    friend IoStats operator-(IoStats a, const IoStats& b) {
        a.bytes_read -= b.bytes_read;
        a.seeks -= b.seeks;
        return a;
    }

    friend bool operator==(const IoStats&, const IoStats&) = default;
};

/// Thread-safe counter pair; copies and moves transfer the current value
/// so index objects stay movable.
class IoCounter {
public:
    IoCounter() = default;
    IoCounter(const IoCounter& other)
        : bytes_(other.bytes_.load()), seeks_(other.seeks_.load()) {}
    IoCounter& operator=(const IoCounter& other) {
        bytes_ = other.bytes_.load();
        seeks_ = other.seeks_.load();
        return *this;
    }

    void charge(std::uint64_t bytes) {
        bytes_ += bytes;
        seeks_ += 1;
    }
    void add(const IoStats& s) {
        bytes_ += s.bytes_read;
        seeks_ += s.seeks;
    }
    IoStats snapshot() const { return {bytes_.load(), seeks_.load()}; }
    void reset() {
        bytes_ = 0;
        seeks_ = 0;
    }

private:
    std::atomic<std::uint64_t> bytes_{0};
    std::atomic<std::uint64_t> seeks_{0};
};

} // namespace rtlsh
