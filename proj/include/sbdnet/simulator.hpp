#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "sbdnet/model.hpp"

namespace sbd {

// Counter-based generator: draw k is the SplitMix64 finalizer of key + k*golden.
// Any (seed, counter) pair can be evaluated without replaying the stream.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed) : key_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return at(key_, counter_++); }

    static result_type at(std::uint64_t key, std::uint64_t counter) {
        std::uint64_t z = key + (counter + 1) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform on (0,1)
    double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
    // uniform on {0..n-1}
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

enum class SimMode { ExactEvent, DiscreteStep };

struct SimOptions {
    SimMode mode = SimMode::ExactEvent;
    double step = 0.0;  // seconds; 0 selects step_rule_epsilon
    std::uint64_t horizon = 1'000'000;  // events (exact) or steps (discrete)
    int n_bands = 1;
    std::uint64_t seed = 1;
    double warmup_fraction = 0.2;
    double divergence_threshold = 0.0;  // users per band; 0 selects default_divergence_threshold
    bool stop_on_divergence = true;
    std::uint64_t snapshot_every = 1000;
    int n_annuli = 32;
    double observer_zone = 0.25;  // origin zone r < z R, edge zone r > (1 - z) R
    long hit_target = 0;  // stop when N_t reaches this level (exact mode)
    std::vector<double> initial_radii;  // users present at t = 0 (exact mode)

    void validate() const;
};

struct TracePoint {
    double t = 0.0;
    long n = 0;
};

struct TraceSummary {
    std::vector<TracePoint> trace;
    std::uint64_t seed = 0;
    std::uint64_t events = 0;  // accepted events (exact) or steps (discrete)
    double t_end = 0.0;
    double t_warm = 0.0;
    double nbar = 0.0;  // time average after warmup, per band
    long final_n = 0;
    long max_n = 0;
    int n_bands = 1;

    std::vector<double> annulus_edges;
    std::vector<double> intensity;  // users/m^2 per annulus, per band
    std::vector<double> cond_origin;  // users/m^2 seen by an observer in the origin zone
    std::vector<double> cond_edge;
    double origin_exposure = 0.0;  // observer-seconds backing each profile
    double edge_exposure = 0.0;

    // conservation accounting after warmup
    std::vector<double> departed_bits;
    double measured_time = 0.0;
    std::uint64_t departures = 0;

    std::optional<double> hit_time;
    bool diverged = false;
    double divergence_threshold = 0.0;  // value actually used
};

double step_rule_epsilon(const NetworkParams& p);

// 50x the lower-branch first-order mean, floored at 100 users; 1000 when no
// stable solution exists.
double default_divergence_threshold(const NetworkParams& p);

TraceSummary run(const NetworkParams& p, const SimOptions& o);
TraceSummary multi_band_run(const NetworkParams& p, const SimOptions& o);

// Replica i uses seed o.seed + i. threads <= 1 runs sequentially.
std::vector<TraceSummary> run_replicas(const NetworkParams& p, const SimOptions& o, int replicas, int threads);

struct ConservationReport {
    double aggregate_error = 0.0;
    std::vector<double> annulus_error;
    std::vector<double> annulus_rate;  // bits/(s m^2)
    double aggregate_rate = 0.0;
    bool low_confidence = false;
    bool defined = true;
};

ConservationReport rate_conservation_check(const TraceSummary& s, const NetworkParams& p);

struct HitResult {
    double time = 0.0;
    bool censored = false;
};

HitResult hitting_time(const NetworkParams& p, long n_target, const SimOptions& o);
std::vector<HitResult> hitting_times(const NetworkParams& p, long n_target, int replicas, std::uint64_t seed,
                                     std::uint64_t max_events, int threads = 1);

}  // namespace sbd
