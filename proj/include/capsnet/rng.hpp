#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace capsnet {

// mt19937_64 engine with explicit value mappings. The standard pins the
// engine's output stream but not the distributions, so the mappings are
// done here to keep runs bit-reproducible across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [lo, hi) using the top 53 bits.
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = (0 - n) % n; // 2^64 mod n
        std::uint64_t r = next();
        while (r < limit) r = next();
        return r % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace capsnet
