// SPDX-License-Identifier: Apache-2.0

#include "markboard/rng.hpp"

#include <cmath>

#include "markboard/errors.hpp"

namespace markboard {

namespace {
constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed) {
    inc_ = (stream << 1u) | 1u;
    state_ = 0u;
    next_u32();
    state_ += seed;
    next_u32();
}

std::uint32_t Rng::next_u32() {
    const std::uint64_t old = state_;
    state_ = old * kMultiplier + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

double Rng::uniform() {
    // 53-bit mantissa from two draws.
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw DomainError("uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    const auto un = static_cast<std::uint32_t>(n);
    const std::uint32_t threshold = (0u - un) % un;
    for (;;) {
        const std::uint32_t r = next_u32();
        if (r >= threshold) return static_cast<int>(r % un);
    }
}

double Rng::gaussian() {
    if (have_cached_) {
        have_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double mag = std::sqrt(-2.0 * std::log(u1));
    cached_ = mag * std::sin(2.0 * M_PI * u2);
    have_cached_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k > n) throw DomainError("sample_without_replacement: k > n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const int j = i + uniform_int(n - i);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        out.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace markboard
