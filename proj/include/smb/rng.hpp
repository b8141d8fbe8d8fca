#pragma once

#include <cstdint>

namespace smb {

// Counter-based generator (SplitMix64 mixing of key + counter). State is
// explicit, so traces replay bit-identically across refactors; independent
// streams come from fork() rather than from sharing one sequence.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t next_u64() {
        return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
    }

    // Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Independent stream derived from this generator's key; the parent's
    // counter is untouched.
    CounterRng fork(std::uint64_t stream) const {
        return CounterRng(mix(key_ ^ mix(stream + 0x517cc1b727220a95ULL)));
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace smb
