#pragma once

#include <cstdint>
#include <random>

namespace qse {

// splitmix64: used to whiten seeds and derive independent per-task streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic stream for (master seed, task index); independent of how
// tasks are scheduled across threads.
inline std::mt19937_64 make_stream(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master ^ (0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL);
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

} // namespace qse
