#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace cesyn {

// mt19937 with hand-rolled output mappings so value sequences depend only on
// the engine state, not on library distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed = 1) : engine_(static_cast<uint32_t>(seed)) {}

    uint32_t next_u32() { return engine_(); }

    // uniform in (0,1)
    double uniform() { return (static_cast<double>(engine_()) + 0.5) * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(engine_() % span);
    }

    // Box-Muller, no cached spare so serialized state fully determines the stream
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent stream (study seeds, per-run seeds).
    uint64_t split() { return (static_cast<uint64_t>(engine_()) << 32) ^ engine_(); }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937 engine_;
};

}  // namespace cesyn
