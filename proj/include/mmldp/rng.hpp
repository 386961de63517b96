#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace mmldp {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over a tag, so streams can be named ("ldp-verify", "naive", ...).
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng;

/// Hierarchical counter-based key. A trajectory is fully determined by the
/// root seed and the path of child indices leading to its key, so results do
/// not depend on how work is split between threads.
class StreamKey {
public:
    constexpr explicit StreamKey(std::uint64_t seed) noexcept : state_(mix64(seed)) {}

    constexpr StreamKey child(std::uint64_t index) const noexcept {
        return StreamKey(Raw{}, mix64(state_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
    }
    constexpr StreamKey child(std::string_view tag) const noexcept { return child(tag_hash(tag)); }

    constexpr std::uint64_t value() const noexcept { return state_; }

    Rng rng() const;

    friend constexpr bool operator==(StreamKey, StreamKey) = default;

private:
    struct Raw {};
    constexpr StreamKey(Raw, std::uint64_t state) noexcept : state_(state) {}

    std::uint64_t state_;
};

class Rng {
public:
    // the key is already a mixed 64-bit hash, so it seeds the engine directly
    explicit Rng(StreamKey key) : engine_(key.value()) {}

    /// Uniform on the open interval (0, 1).
    double uniform() {
        // 53 random bits, offset by half an ulp so 0 is never returned
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    double normal() { return normal_(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Rng StreamKey::rng() const { return Rng(*this); }

} // namespace mmldp
