#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tokann/error.hpp"
#include "tokann/types.hpp"

namespace tokann {

/// Sign-random-projection banding parameters. Defaults balance candidate
/// recall against posting-list fan-out at ~10^5-document scale.
struct LshConfig {
    std::uint32_t dim = 0;            ///< embedding dimension D (0 = infer at build)
    std::uint32_t num_bands = 32;     ///< B
    std::uint32_t bits_per_band = 8;  ///< r
    std::uint64_t seed = 0;

    friend bool operator==(const LshConfig&, const LshConfig&) = default;
};

/// One LSH token: which band it came from and the r-bit sign pattern.
struct LshToken {
    std::uint32_t band = 0;
    std::uint64_t pattern = 0;

    friend bool operator==(const LshToken&, const LshToken&) = default;
};

namespace detail {

/// SplitMix64 output mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// n-th output of SplitMix64 seeded with `seed` (counter mode: position is
/// independent of iteration order, so hyperplane coordinates are stable).
inline std::uint64_t splitmix_at(std::uint64_t seed, std::uint64_t n) {
    return mix64(seed + n * 0x9E3779B97F4A7C15ULL);
}

/// Standard normal deviate from the counter stream via Box-Muller.
/// Consumes counters 2c+1 and 2c+2 for draw index c.
inline double normal_at(std::uint64_t seed, std::uint64_t draw) {
    const std::uint64_t a = splitmix_at(seed, 2 * draw + 1);
    const std::uint64_t b = splitmix_at(seed, 2 * draw + 2);
    // u1 in (0, 1] so log(u1) is finite; u2 in [0, 1).
    const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Deterministic bank of B*r unit-norm random hyperplanes and the token /
/// binary-code transforms built on them. Construction depends only on the
/// config, never on platform or call order.
class LshHasher {
public:
    explicit LshHasher(const LshConfig& config) : config_(config) {
        if (config.dim == 0) throw ConfigError("lsh: dim must be positive");
        if (config.num_bands == 0) throw ConfigError("lsh: num_bands must be positive");
        if (config.bits_per_band == 0) throw ConfigError("lsh: bits_per_band must be positive");
        if (config.bits_per_band > 64)
            throw ConfigError("lsh: bits_per_band must be at most 64");
        if (static_cast<std::uint64_t>(config.num_bands) * config.bits_per_band > 4096)
            throw ConfigError("lsh: num_bands * bits_per_band must be at most 4096");

        const std::uint64_t planes = std::uint64_t{config.num_bands} * config.bits_per_band;
        hyperplanes_.resize(planes * config.dim);
        std::uint64_t draw = 0;
        for (std::uint64_t p = 0; p < planes; ++p) {
            double* row = hyperplanes_.data() + p * config.dim;
            double norm_sq = 0.0;
            for (std::uint32_t d = 0; d < config.dim; ++d) {
                row[d] = detail::normal_at(config.seed, draw++);
                norm_sq += row[d] * row[d];
            }
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (std::uint32_t d = 0; d < config.dim; ++d) row[d] *= inv;
        }
    }

    const LshConfig& config() const noexcept { return config_; }

    std::uint64_t hyperplane_count() const noexcept {
        return std::uint64_t{config_.num_bands} * config_.bits_per_band;
    }

    /// Row-major [band*r + bit][dim] hyperplane coordinates.
    std::span<const double> hyperplane(std::uint32_t band, std::uint32_t bit) const {
        const std::uint64_t p = std::uint64_t{band} * config_.bits_per_band + bit;
        return {hyperplanes_.data() + p * config_.dim, config_.dim};
    }

    /// All B tokens for an embedding. Bit j of a band's pattern is 1 when the
    /// dot product with hyperplane j is >= 0 (boundary counts as positive).
    std::vector<LshToken> tokens(std::span<const float> embedding) const {
        check_dim(embedding.size());
        std::vector<LshToken> out;
        out.reserve(config_.num_bands);
        std::uint64_t plane = 0;
        for (std::uint32_t band = 0; band < config_.num_bands; ++band) {
            std::uint64_t pattern = 0;
            for (std::uint32_t bit = 0; bit < config_.bits_per_band; ++bit, ++plane) {
                if (dot(plane, embedding) >= 0.0) pattern |= std::uint64_t{1} << bit;
            }
            out.push_back(LshToken{band, pattern});
        }
        return out;
    }

private:
    void check_dim(std::size_t got) const {
        if (got != config_.dim)
            throw ConfigError("lsh: embedding has dimension " + std::to_string(got) +
                              ", expected " + std::to_string(config_.dim));
    }

    double dot(std::uint64_t plane, std::span<const float> embedding) const {
        const double* row = hyperplanes_.data() + plane * config_.dim;
        double acc = 0.0;
        for (std::uint32_t d = 0; d < config_.dim; ++d)
            acc += row[d] * static_cast<double>(embedding[d]);
        return acc;
    }

    LshConfig config_;
    std::vector<double> hyperplanes_;
};

/// Posting-key text for a token: "b<band>:<hex>" with minimal lowercase hex.
inline std::string token_text(const LshToken& token) {
    static constexpr char digits[] = "0123456789abcdef";
    char buf[16];
    int n = 0;
    std::uint64_t v = token.pattern;
    do {
        buf[n++] = digits[v & 0xF];
        v >>= 4;
    } while (v != 0);
    std::string out = "b" + std::to_string(token.band) + ":";
    while (n > 0) out.push_back(buf[--n]);
    return out;
}

/// Per-dimension sign code of an embedding: bit i = 1 iff values[i] > 0
/// (zero maps to 0). Length equals the embedding dimension.
inline BinaryCode binarize(std::span<const float> values) {
    BinaryCode code(static_cast<std::uint32_t>(values.size()));
    for (std::uint32_t i = 0; i < values.size(); ++i) {
        if (values[i] > 0.0f) code.set(i);
    }
    return code;
}

/// Hamming distance between two equal-length binary codes.
inline std::uint32_t hamming_distance(const BinaryCode& a, const BinaryCode& b) {
    if (a.size() != b.size())
        throw ConfigError("hamming_distance: codes have different lengths");
    std::uint32_t dist = 0;
    auto wa = a.words();
    auto wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i)
        dist += static_cast<std::uint32_t>(std::popcount(wa[i] ^ wb[i]));
    return dist;
}

/// Cosine distance 1 - cos(a, b), in [0, 2]. Zero vectors have no direction,
/// so they are rejected.
inline double cosine_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw ConfigError("cosine_distance: vectors have different lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ConfigError("cosine_distance: zero vector");
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace tokann
