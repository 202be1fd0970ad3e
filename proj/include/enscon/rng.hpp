#pragma once

// Counter-based random streams (Philox4x32-10). A stream is identified by
// (seed, stream id); draws advance a per-stream block counter, so trials that
// run in parallel reproduce bit-identically in any schedule.

#include <cmath>
#include <cstdint>

namespace enscon {

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_(stream) {}

    std::uint64_t next_u64() {
        if (buffered_ == 0) refill();
        return buffer_[--buffered_];
    }

    /// Uniform on [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double next_double_open_low() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per pair.
    double next_normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = next_double_open_low();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.28318530717958647692 * u2;
        cached_normal_ = r * std::sin(a);
        has_cached_normal_ = true;
        return r * std::cos(a);
    }

    /// Exponential with the given rate (inversion).
    double next_exponential(double rate) {
        return -std::log(next_double_open_low()) / rate;
    }

private:
    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
        std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }

    void refill() {
        // Philox4x32-10: counter = (stream, block index), key = seed.
        std::uint32_t c0 = static_cast<std::uint32_t>(stream_);
        std::uint32_t c1 = static_cast<std::uint32_t>(stream_ >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(block_);
        std::uint32_t c3 = static_cast<std::uint32_t>(block_ >> 32);
        std::uint32_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            std::uint32_t hi0, lo0, hi1, lo1;
            mulhilo(0xD2511F53u, c0, hi0, lo0);
            mulhilo(0xCD9E8D57u, c2, hi1, lo1);
            std::uint32_t n0 = hi1 ^ c1 ^ k0;
            std::uint32_t n1 = lo1;
            std::uint32_t n2 = hi0 ^ c3 ^ k1;
            std::uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        ++block_;
        buffer_[0] = (static_cast<std::uint64_t>(c1) << 32) | c0;
        buffer_[1] = (static_cast<std::uint64_t>(c3) << 32) | c2;
        buffered_ = 2;
    }

    std::uint32_t key0_, key1_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::uint64_t buffer_[2] = {0, 0};
    int buffered_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace enscon
