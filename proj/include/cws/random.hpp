#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace cws {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

/// Seeded generator with platform-independent derived distributions.
///
/// The standard distributions are implementation-defined, so uniform reals,
/// bounded integers and shuffles are derived here from raw engine output.
/// That keeps trajectories bit-identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : m_engine(splitmix64(seed)) {}

    std::uint64_t next() { return m_engine(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(m_engine() >> 11U) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::size_t index(std::size_t n)
    {
        auto const bound = static_cast<std::uint64_t>(n);
        std::uint64_t const limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t draw = m_engine();
        while (draw >= limit) {
            draw = m_engine();
        }
        return static_cast<std::size_t>(draw % bound);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    /// Independent stream keyed by `stream`; does not advance this generator.
    [[nodiscard]] Rng derive(std::uint64_t stream) const
    {
        Rng copy = *this;
        return Rng(copy.m_engine() ^ splitmix64(stream + 0x5DEECE66DULL));
    }

  private:
    std::mt19937_64 m_engine;
};

}  // namespace cws
