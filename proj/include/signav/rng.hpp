#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "signav/error.hpp"

namespace signav {

// mt19937_64 with our own bounded mappings: the engine's bit stream is pinned
// by the standard, the std distributions are not.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
    uint64_t below(uint64_t n) {
        if (n == 0) throw InternalError("Rng::below(0)");
        return eng_() % n;
    }

    int range(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi_inclusive - lo + 1)));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Draw an index from an unnormalized nonnegative weight vector.
    size_t categorical(const std::vector<double>& w) {
        double total = 0;
        for (double x : w) total += x;
        if (total <= 0) throw InternalError("categorical: nonpositive weight sum");
        double u = uniform() * total;
        double acc = 0;
        for (size_t i = 0; i < w.size(); ++i) {
            acc += w[i];
            if (u < acc) return i;
        }
        return w.size() - 1;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace signav
