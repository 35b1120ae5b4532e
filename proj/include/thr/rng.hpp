#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace thr {

/// splitmix64 step; used both as a mixer for stream derivation and to
/// expand a single seed into engine state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seedable random stream. Sub-streams are derived by hashing the root
/// seed together with a list of indices, so replication r of scenario s
/// always sees the same draws no matter which worker runs it.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    /// Derive a child stream from (seed, indices...). Order-sensitive.
    static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
        std::uint64_t s = seed;
        std::uint64_t h = splitmix64(s);
        for (std::uint64_t idx : indices) {
            s ^= idx + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
            h ^= splitmix64(s);
        }
        return RngStream(h);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1) with fully specified mapping (53 mantissa bits).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (lo, hi), endpoints excluded.
    double uniform_open(double lo, double hi) {
        double u;
        do {
            u = uniform01();
        } while (u == 0.0);
        return lo + u * (hi - lo);
    }

    /// Standard normal via Box-Muller, one spare value cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace thr
