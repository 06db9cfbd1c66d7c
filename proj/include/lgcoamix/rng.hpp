#pragma once

#include <array>
#include <cstdint>

namespace lgcoamix {

/// One step of SplitMix64; used for seeding and for deriving child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a master seed with a stream index into an independent child seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// xoshiro256** seeded through SplitMix64.
///
/// The integer stream depends only on the seed, never on the platform or the
/// standard library. uniform_int uses Lemire's multiply-shift with rejection,
/// uniform uses the top 53 bits, normal uses Box-Muller (this last one goes
/// through libm, so it is reproducible per platform rather than bit-exact
/// across platforms).
///
/// An Rng has one owner at a time. To split work, derive a child per unit.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();

    /// Uniform integer in [lo, hi], inclusive. Throws InvalidInput if lo > hi.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Uniform real in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p) { return uniform() < p; }

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] Rng child(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::int64_t rng_uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

}  // namespace lgcoamix
