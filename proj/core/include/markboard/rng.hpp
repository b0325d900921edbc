// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace markboard {

/// PCG32 (O'Neill's pcg_xsh_rr_64_32). Counter-based, portable: the same
/// (seed, stream) yields the same draw sequence on every platform. All
/// randomness in training, minting, and dataset synthesis flows through this
/// so the seed in the run config reproduces a run exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    static std::string algorithm() { return "pcg32"; }
    std::uint64_t seed() const { return seed_; }

    std::uint32_t next_u32();
    /// Uniform in [0, 1).
    double uniform();
    float uniform_f() { return static_cast<float>(uniform()); }
    /// Uniform integer in [0, n).
    int uniform_int(int n);
    /// Standard normal via Box-Muller (pair cached).
    double gaussian();
    float gaussian_f() { return static_cast<float>(gaussian()); }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    /// k distinct indices from [0, n), in draw order.
    std::vector<int> sample_without_replacement(int n, int k);

private:
    std::uint64_t state_;
    std::uint64_t inc_;
    std::uint64_t seed_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace markboard
