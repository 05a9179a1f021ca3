#pragma once

// Seeded RNG with a pinned algorithm (xoshiro256++) and hand-rolled
// distributions, so that a given seed produces the same byte stream on
// every platform. std::mt19937 + std::*_distribution would not give that
// guarantee across standard libraries.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace edrain {

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // splitmix64 expands the seed into the 256-bit state
        std::uint64_t z = seed;
        for (auto& s : state_) {
            z += 0x9e3779b97f4a7c15ULL;
            std::uint64_t t = z;
            t = (t ^ (t >> 30)) * 0xbf58476d1ce4e5b9ULL;
            t = (t ^ (t >> 27)) * 0x94d049bb133111ebULL;
            s = t ^ (t >> 31);
        }
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0)
            state_[0] = 1;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53 bits of precision
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform in (0, 1], used where log(u) must stay finite
    double uniform_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    // uniform integer in [0, n), multiply-shift reduction
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // standard normal, Box-Muller (second value discarded)
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi() * u2);
    }

    // Gamma(alpha, 1), Marsaglia-Tsang squeeze for alpha >= 1,
    // boosted by u^(1/alpha) for alpha < 1
    double gamma(double alpha) {
        if (!(alpha > 0.0)) throw std::invalid_argument("gamma: alpha must be positive");
        if (alpha < 1.0)
            return gamma(alpha + 1.0) * std::pow(uniform_pos(), 1.0 / alpha);
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        const double ga = gamma(a);
        const double gb = gamma(b);
        return ga / (ga + gb);
    }

    // Dirichlet(alpha): normalized independent gammas, out sums to 1
    void dirichlet(std::span<const double> alpha, std::span<double> out) {
        if (alpha.size() != out.size() || alpha.empty())
            throw std::invalid_argument("dirichlet: alpha/out size mismatch");
        double total = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            out[i] = gamma(alpha[i]);
            total += out[i];
        }
        for (auto& w : out) w /= total;
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

private:
    static constexpr double pi() { return 3.141592653589793238462643383279502884; }
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

} // namespace edrain
