#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikefuse {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

/// Row-major strides for a shape.
inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        s[i] = s[i + 1] * shape[i + 1];
    return s;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {
inline void str_cat(std::ostringstream&) {}
template <typename T, typename... Rest>
void str_cat(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    str_cat(os, rest...);
}
}  // namespace detail

/// Concatenate arbitrary arguments into a string (used for error messages).
template <typename... Args>
std::string strcat_args(const Args&... args) {
    std::ostringstream os;
    detail::str_cat(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
    throw std::invalid_argument(strcat_args(args...));
}

template <typename... Args>
void check(bool cond, const Args&... args) {
    if (!cond) fail(args...);
}

/// Deterministic RNG used everywhere; Box-Muller normals keep the stream
/// independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() { return state_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(state_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // rejection sampling avoids modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = state_();
        } while (x >= limit);
        return x % n;
    }

    double normal() {
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[uniform_int(i)]);
    }

    /// Derive an independent stream, e.g. one per sample.
    Rng fork(std::uint64_t stream) const {
        return Rng(mix(state_.seed_, stream));
    }

private:
    // splitmix64; tiny, fast, and identical on every platform
    struct SplitMix {
        explicit SplitMix(std::uint64_t s) : seed_(s), x_(s) {}
        std::uint64_t operator()() {
            std::uint64_t z = (x_ += 0x9e3779b97f4a7c15ull);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            return z ^ (z >> 31);
        }
        std::uint64_t seed_;
        std::uint64_t x_;
    };

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        SplitMix m(a ^ (b * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull));
        return m();
    }

    SplitMix state_;
};

}  // namespace spikefuse
