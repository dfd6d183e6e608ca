#include "fde/grid.hpp"

namespace fde {

double pairwise_sum(const double* values, size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += values[i];
        return s;
    }
    size_t half = n / 2;
    return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

double pairwise_sum(const std::vector<double>& values) {
    return pairwise_sum(values.data(), values.size());
}

namespace {

inline uint64_t splitmix64_step(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t stable_hash64(uint64_t seed, const std::string& key) {
    // FNV-1a over the key bytes, seed folded in, splitmix64 finalizer for
    // avalanche. Pure integer ops, so the value is platform-independent.
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    uint64_t state = h;
    return splitmix64_step(state);
}

uint64_t NormalSampler::next_u64() {
    return splitmix64_step(state_);
}

double NormalSampler::next_uniform() {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
}

double NormalSampler::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

}  // namespace fde
