#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace vwmdvi {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Folds a list of words into one key. Order sensitive.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto w : words) h = mix64(h ^ mix64(w));
    return h;
}

/// FNV-1a, used to turn labels into stream tags.
constexpr std::uint64_t hash_label(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Purpose tags separating the random streams of different algorithm phases.
enum class StreamTag : std::uint64_t {
    hard_mdp = 1,
    tabular = 2,
    wls_first = 3,
    wls_second = 4,
    variance_y = 5,
    variance_z = 6,
    user = 7,
};

/**
 * Counter-based generator: the i-th output is a pure function of (key, i).
 *
 * Outputs do not depend on the platform or the standard library, unlike the
 * std:: distributions, so sample paths are bit-reproducible everywhere.
 */
class Generator {
public:
    constexpr explicit Generator(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform on [0, 1) with 53 random bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/**
 * Splittable source of generators keyed by (master seed, purpose, iteration,
 * pair index). Each (iteration, pair) stream is independent of every other,
 * so sampling order and thread scheduling never change the draws.
 */
class StreamFactory {
public:
    constexpr explicit StreamFactory(std::uint64_t master_seed) noexcept : seed_(master_seed) {}

    constexpr Generator stream(StreamTag tag, std::uint64_t iteration,
                               std::uint64_t pair) const noexcept {
        return Generator(hash_words({seed_, static_cast<std::uint64_t>(tag), iteration, pair}));
    }

    constexpr Generator stream(StreamTag tag, std::uint64_t iteration = 0) const noexcept {
        return stream(tag, iteration, ~std::uint64_t{0});
    }

    constexpr std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace vwmdvi
