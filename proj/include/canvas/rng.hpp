#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace canvas {

namespace detail {

// SplitMix64 finalizer. Used as a PRF over (key, counter) so that every
// stream is addressable by its key alone and draws never depend on the
// order in which sibling streams are consumed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t key, std::uint64_t sub) {
    return mix64(key ^ (0x9E3779B97F4A7C15ull + mix64(sub)));
}

}  // namespace detail

/// Counter-based random stream: output i is a pure function of (key, i).
/// Streams for parallel work are derived by keying with the work's
/// coordinates (step, sample index, rater id, ...), so reordering or
/// parallelizing the work cannot change any realized draw.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : key_(detail::mix64(seed)) {}

    RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> subkeys)
        : key_(detail::mix64(seed)) {
        for (std::uint64_t s : subkeys) key_ = detail::combine(key_, s);
    }

    /// Child stream addressed by an extra subkey; leaves this stream untouched.
    RngStream child(std::uint64_t subkey) const {
        RngStream s(*this);
        s.key_ = detail::combine(s.key_, subkey);
        s.counter_ = 0;
        return s;
    }

    std::uint64_t next_u64() { return detail::mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms and
    /// keeps no cached spare, so the draw count stays counter-exact.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // guard log(0)
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    float normal_f() { return static_cast<float>(normal()); }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace canvas
