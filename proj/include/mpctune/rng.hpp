#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mpctune {

// splitmix64 finalizer, used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// All randomness flows from one root seed through named sub-streams
// (e.g. "episode-noise", "context", "lhs", "pso", "hyperopt").  Deriving
// a stream is pure: the same (root, name, index) always yields the same
// seed, so episodes can be dispatched in any order.
class SeedStream {
public:
    explicit SeedStream(std::uint64_t root) : root_(root) {}

    std::uint64_t derive(std::string_view name, std::uint64_t index = 0) const {
        std::uint64_t h = root_;
        for (char c : name) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        return mix64(h ^ index);
    }

    SeedStream child(std::string_view name, std::uint64_t index = 0) const {
        return SeedStream(derive(name, index));
    }

    std::uint64_t root() const { return root_; }

private:
    std::uint64_t root_;
};

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace mpctune
