#include "sbdnet/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "sbdnet/error.hpp"
#include "sbdnet/fo_meanfield.hpp"

namespace sbd {

void SimOptions::validate() const {
    require(horizon > 0, "simulation horizon must be > 0");
    require(warmup_fraction >= 0 && warmup_fraction < 1, "warmup fraction must lie in [0,1)");
    require(n_bands >= 1, "n_bands must be >= 1");
    require(n_annuli >= 1, "n_annuli must be >= 1");
    require(observer_zone > 0 && observer_zone <= 0.5, "observer zone must lie in (0, 0.5]");
    require(step >= 0, "step must be >= 0");
    require(divergence_threshold >= 0, "divergence threshold must be >= 0");
    require(snapshot_every >= 1, "snapshot cadence must be >= 1");
    require(hit_target >= 0, "hit target must be >= 0");
    for (double r : initial_radii) require(r >= 0, "initial user radius must be >= 0");
}

double default_divergence_threshold(const NetworkParams& p) {
    constexpr double kNone = 1000.0, kFloor = 100.0;
    if (p.lambda <= 0) return kNone;
    try {
        for (const auto& sol : FoModel(p).solve(p.lambda))
            if (sol.branch == Branch::Lower) return std::max(kFloor, 50.0 * sol.nbar);
    } catch (const Error&) {
    }
    return kNone;
}

double step_rule_epsilon(const NetworkParams& p) {
    require(p.lambda > 0, "step_rule_epsilon: lambda must be > 0");
    return 1.0 / (100.0 * p.arrival_rate());
}

namespace {

class Fenwick {
public:
    void reset(std::size_t capacity) {
        cap_ = 1;
        while (cap_ < capacity) cap_ <<= 1;
        tree_.assign(cap_ + 1, 0.0);
    }
    std::size_t capacity() const { return cap_; }

    void build(const std::vector<double>& v) {
        if (v.size() > cap_) reset(v.size() * 2);
        std::fill(tree_.begin(), tree_.end(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) tree_[i + 1] = v[i];
        for (std::size_t i = 1; i <= cap_; ++i) {
            const std::size_t j = i + (i & (~i + 1));
            if (j <= cap_) tree_[j] += tree_[i];
        }
    }

    void add(std::size_t i, double d) {
        for (++i; i <= cap_; i += i & (~i + 1)) tree_[i] += d;
    }

    double total() const { return tree_[cap_]; }

    // first index whose prefix sum exceeds u
    std::size_t find(double u) const {
        std::size_t pos = 0;
        for (std::size_t step = cap_; step > 0; step >>= 1) {
            if (pos + step <= cap_ && tree_[pos + step] <= u) {
                pos += step;
                u -= tree_[pos];
            }
        }
        return pos;
    }

private:
    std::size_t cap_ = 1;
    std::vector<double> tree_;
};

// Time integrals of the piecewise-constant state, active after warmup.
class Accounting {
public:
    Accounting(const NetworkParams& p, const SimOptions& o)
        : nb_(o.n_annuli), radius_(p.radius), zone_(o.observer_zone),
          count_(nb_, 0), zo_(nb_, 0), ze_(nb_, 0),
          acc_count_(nb_, 0.0), acc_o_(nb_, 0.0), acc_e_(nb_, 0.0), bits_(nb_, 0.0) {}

    int bin_of(double r) const { return std::min(nb_ - 1, static_cast<int>(r / radius_ * nb_)); }
    int zone_of(double r) const {
        if (r < zone_ * radius_) return 1;
        if (r > (1.0 - zone_) * radius_) return 2;
        return 0;
    }

    void start(double t) {
        on_ = true;
        t_last_ = t;
        t_start_ = t;
    }
    bool on() const { return on_; }

    void integrate_to(double t) {
        if (on_) {
            const double dt = t - t_last_;
            if (dt > 0) {
                acc_n_ += static_cast<double>(n_) * dt;
                exp_o_ += static_cast<double>(n_o_) * dt;
                exp_e_ += static_cast<double>(n_e_) * dt;
                for (int b = 0; b < nb_; ++b) {
                    const double c = static_cast<double>(count_[b]);
                    acc_count_[b] += c * dt;
                    acc_o_[b] += (static_cast<double>(n_o_) * c - zo_[b]) * dt;
                    acc_e_[b] += (static_cast<double>(n_e_) * c - ze_[b]) * dt;
                }
            }
        }
        t_last_ = t;
    }

    void change(int bin, int zone, int delta) {
        n_ += delta;
        count_[bin] += delta;
        if (zone == 1) {
            n_o_ += delta;
            zo_[bin] += delta;
        } else if (zone == 2) {
            n_e_ += delta;
            ze_[bin] += delta;
        }
    }

    void add_bits(int bin, double bits) {
        if (on_) bits_[bin] += bits;
    }

    void finish(double t_end, int n_bands, TraceSummary& s) const {
        const double T = t_end - t_start_;
        s.measured_time = on_ ? T : 0.0;
        s.t_warm = t_start_;
        s.annulus_edges.resize(nb_ + 1);
        for (int b = 0; b <= nb_; ++b) s.annulus_edges[b] = radius_ * b / nb_;
        s.intensity.assign(nb_, 0.0);
        s.cond_origin.assign(nb_, 0.0);
        s.cond_edge.assign(nb_, 0.0);
        s.departed_bits = bits_;
        s.origin_exposure = exp_o_;
        s.edge_exposure = exp_e_;
        if (!on_ || T <= 0) return;
        s.nbar = acc_n_ / T / n_bands;
        for (int b = 0; b < nb_; ++b) {
            const double area = M_PI * (s.annulus_edges[b + 1] * s.annulus_edges[b + 1] -
                                        s.annulus_edges[b] * s.annulus_edges[b]);
            s.intensity[b] = acc_count_[b] / T / area / n_bands;
            if (exp_o_ > 0) s.cond_origin[b] = acc_o_[b] / exp_o_ / area / n_bands;
            if (exp_e_ > 0) s.cond_edge[b] = acc_e_[b] / exp_e_ / area / n_bands;
        }
    }

private:
    int nb_;
    double radius_, zone_;
    bool on_ = false;
    double t_last_ = 0.0, t_start_ = 0.0;
    long n_ = 0, n_o_ = 0, n_e_ = 0;
    std::vector<long> count_, zo_, ze_;
    double acc_n_ = 0.0, exp_o_ = 0.0, exp_e_ = 0.0;
    std::vector<double> acc_count_, acc_o_, acc_e_, bits_;
};

// N > N_max with positive growth since the previous checkpoint
class DivergenceWatch {
public:
    explicit DivergenceWatch(double threshold) : threshold_(threshold) {}
    bool check(std::uint64_t count, long n) {
        if (count % kWindow != 0) return false;
        const bool up = n > last_;
        last_ = n;
        return static_cast<double>(n) > threshold_ && up;
    }

private:
    static constexpr std::uint64_t kWindow = 10000;
    double threshold_;
    long last_ = 0;
};

double uniform_radius(CounterRng& rng, double R) { return R * std::sqrt(rng.uniform()); }

TraceSummary run_exact(const NetworkParams& p, const SimOptions& o) {
    require(o.n_bands == 1, "multi-band runs require the discrete-step mode");
    CounterRng rng(o.seed);
    Accounting acc(p, o);
    DivergenceWatch watch(o.divergence_threshold);
    TraceSummary s;
    s.divergence_threshold = o.divergence_threshold;
    s.seed = o.seed;

    const double A = p.arrival_rate();
    const double c = p.service_scale();
    const double s2 = p.sigma2;
    const auto warm_at = static_cast<std::uint64_t>(o.warmup_fraction * static_cast<double>(o.horizon));

    std::vector<double> g;
    std::vector<int> bin, zone;
    Fenwick fw;
    fw.reset(1024);
    double S = 0.0, gmax = 0.0;
    long at_max = 0;

    auto recompute_max = [&] {
        gmax = 0.0;
        at_max = 0;
        for (double v : g) {
            if (v > gmax) {
                gmax = v;
                at_max = 1;
            } else if (v == gmax) {
                ++at_max;
            }
        }
    };

    auto add_user = [&](double r) {
        const double gi = effective_gain(r, p);
        const std::size_t k = g.size();
        g.push_back(gi);
        if (g.size() > fw.capacity()) {
            fw.build(g);
        } else {
            fw.add(k, gi);
        }
        bin.push_back(acc.bin_of(r));
        zone.push_back(acc.zone_of(r));
        acc.change(bin.back(), zone.back(), +1);
        S += gi;
        if (gi > gmax) {
            gmax = gi;
            at_max = 1;
        } else if (gi == gmax) {
            ++at_max;
        }
    };

    double t = 0.0;
    std::uint64_t events = 0;
    if (warm_at == 0) acc.start(0.0);
    for (double r : o.initial_radii) add_user(r);
    s.trace.push_back({0.0, static_cast<long>(g.size())});

    while (events < o.horizon) {
        const std::size_t n = g.size();
        const double slack = std::max(S - gmax, 0.0) + s2;
        const double bound = n > 0 ? c * S / slack : 0.0;
        const double total = A + bound;
        if (total <= 0.0) break;
        t += -std::log(rng.uniform()) / total;

        if (rng.uniform() * total < A) {
            acc.integrate_to(t);
            add_user(uniform_radius(rng, p.radius));
            ++events;
            if (o.hit_target > 0 && static_cast<long>(g.size()) >= o.hit_target) {
                s.hit_time = t;
                s.events = events;
                break;
            }
        } else {
            std::size_t i = fw.find(rng.uniform() * fw.total());
            if (i >= n) i = n - 1;
            const double gi = g[i];
            const double own = std::max(S - gi, 0.0) + s2;
            double accept = slack / own;
            if (p.rate_mode == RateMode::General) {
                const double x = gi / own;
                accept *= std::log1p(x) / x;
            }
            if (rng.uniform() >= accept) continue;

            acc.integrate_to(t);
            acc.change(bin[i], zone[i], -1);
            if (acc.on()) {
                acc.add_bits(bin[i], 1.0 / p.mu);
                ++s.departures;
            }
            const std::size_t last = n - 1;
            if (i != last) {
                fw.add(i, g[last] - gi);
                fw.add(last, -g[last]);
                g[i] = g[last];
                bin[i] = bin[last];
                zone[i] = zone[last];
            } else {
                fw.add(i, -gi);
            }
            g.pop_back();
            bin.pop_back();
            zone.pop_back();
            S = g.empty() ? 0.0 : S - gi;
            if (gi == gmax && --at_max == 0) recompute_max();
            if (g.empty()) {
                gmax = 0.0;
                at_max = 0;
            }
            ++events;
        }

        const long nn = static_cast<long>(g.size());
        s.max_n = std::max(s.max_n, nn);
        if (events == warm_at && !acc.on()) {
            acc.integrate_to(t);
            acc.start(t);
        }
        if ((events & 0xFFFF) == 0) {
            fw.build(g);
            S = 0.0;
            for (double v : g) S += v;
            recompute_max();
        }
        if (events % o.snapshot_every == 0) s.trace.push_back({t, nn});
        if (watch.check(events, nn)) {
            s.diverged = true;
            if (o.stop_on_divergence) break;
        }
    }

    acc.integrate_to(t);
    s.events = events;
    s.t_end = t;
    s.final_n = static_cast<long>(g.size());
    if (s.trace.back().t != t) s.trace.push_back({t, s.final_n});
    acc.finish(t, 1, s);
    return s;
}

TraceSummary run_discrete(const NetworkParams& p, const SimOptions& o) {
    const int nf = o.n_bands;
    const double eps = o.step > 0 ? o.step : step_rule_epsilon(p);
    CounterRng rng(o.seed);
    Accounting acc(p, o);
    DivergenceWatch watch(o.divergence_threshold * nf);
    TraceSummary s;
    s.divergence_threshold = o.divergence_threshold;
    s.seed = o.seed;
    s.n_bands = nf;

    std::poisson_distribution<long> arrivals(nf * p.arrival_rate() * eps);
    const auto warm_at = static_cast<std::uint64_t>(o.warmup_fraction * static_cast<double>(o.horizon));

    struct User {
        double g, residual;
        int band, bin, zone;
    };
    std::vector<User> users;
    std::vector<double> band_sum(nf, 0.0);

    double t = 0.0;
    if (warm_at == 0) acc.start(0.0);
    s.trace.push_back({0.0, 0});
    std::uint64_t step = 0;
    while (step < o.horizon) {
        const long k = arrivals(rng);
        if (k > 0) {
            acc.integrate_to(t);
            for (long a = 0; a < k; ++a) {
                const double r = uniform_radius(rng, p.radius);
                User u;
                u.g = effective_gain(r, p);
                u.residual = -std::log(rng.uniform()) / p.mu;
                u.band = nf > 1 ? static_cast<int>(rng.below(nf)) : 0;
                u.bin = acc.bin_of(r);
                u.zone = acc.zone_of(r);
                acc.change(u.bin, u.zone, +1);
                users.push_back(u);
            }
        }
        if (nf > 1)
            for (auto& u : users) u.band = static_cast<int>(rng.below(nf));

        std::fill(band_sum.begin(), band_sum.end(), 0.0);
        for (const auto& u : users) band_sum[u.band] += u.g;
        bool any_done = false;
        for (auto& u : users) {
            const double bits = rate(u.g, std::max(band_sum[u.band] - u.g, 0.0), p) * eps;
            acc.add_bits(u.bin, std::min(bits, u.residual));
            u.residual -= bits;
            any_done = any_done || u.residual <= 0.0;
        }
        t += eps;
        ++step;
        if (any_done) {
            acc.integrate_to(t);
            std::size_t w = 0;
            for (std::size_t i = 0; i < users.size(); ++i) {
                if (users[i].residual <= 0.0) {
                    acc.change(users[i].bin, users[i].zone, -1);
                    if (acc.on()) ++s.departures;
                } else {
                    users[w++] = users[i];
                }
            }
            users.resize(w);
        }
        const long nn = static_cast<long>(users.size());
        s.max_n = std::max(s.max_n, nn);
        if (step == warm_at && !acc.on()) {
            acc.integrate_to(t);
            acc.start(t);
        }
        if (step % o.snapshot_every == 0) s.trace.push_back({t, nn});
        if (watch.check(step, nn)) {
            s.diverged = true;
            if (o.stop_on_divergence) break;
        }
    }
    acc.integrate_to(t);
    s.events = step;
    s.t_end = t;
    s.final_n = static_cast<long>(users.size());
    if (s.trace.back().t != t) s.trace.push_back({t, s.final_n});
    acc.finish(t, nf, s);
    return s;
}

}  // namespace

TraceSummary run(const NetworkParams& p, const SimOptions& o) {
    p.validate();
    o.validate();
    SimOptions q = o;
    if (q.divergence_threshold == 0) q.divergence_threshold = default_divergence_threshold(p);
    if (q.mode == SimMode::ExactEvent) return run_exact(p, q);
    require(p.lambda > 0, "discrete-step mode needs lambda > 0");
    require(q.initial_radii.empty(), "initial users are supported in exact-event mode only");
    return run_discrete(p, q);
}

TraceSummary multi_band_run(const NetworkParams& p, const SimOptions& o) {
    require(o.mode == SimMode::DiscreteStep, "multi_band_run requires the discrete-step mode");
    return run(p, o);
}

std::vector<TraceSummary> run_replicas(const NetworkParams& p, const SimOptions& o, int replicas, int threads) {
    require(replicas >= 1, "run_replicas: need at least one replica");
    p.validate();
    SimOptions base = o;
    if (base.divergence_threshold == 0) base.divergence_threshold = default_divergence_threshold(p);
    std::vector<TraceSummary> out(replicas);
    std::vector<std::exception_ptr> errors(replicas);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < replicas; i = next++) {
            SimOptions oi = base;
            oi.seed = o.seed + static_cast<std::uint64_t>(i);
            try {
                out[i] = run(p, oi);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int nt = std::max(1, std::min(threads, replicas));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

ConservationReport rate_conservation_check(const TraceSummary& s, const NetworkParams& p) {
    ConservationReport r;
    const double rho = p.rho();
    const double T = s.measured_time;
    if (rho <= 0 || T <= 0 || s.annulus_edges.size() < 2) {
        r.defined = false;
        r.low_confidence = true;
        return r;
    }
    const int nb = static_cast<int>(s.departed_bits.size());
    double total = 0.0;
    for (int b = 0; b < nb; ++b) {
        const double area = M_PI * (s.annulus_edges[b + 1] * s.annulus_edges[b + 1] -
                                    s.annulus_edges[b] * s.annulus_edges[b]);
        const double rate_b = s.departed_bits[b] / T / area / s.n_bands;
        r.annulus_rate.push_back(rate_b);
        r.annulus_error.push_back(std::abs(rate_b - rho) / rho);
        total += s.departed_bits[b];
    }
    r.aggregate_rate = total / T / p.area() / s.n_bands;
    r.aggregate_error = std::abs(r.aggregate_rate - rho) / rho;
    r.low_confidence = s.departures < 100;
    return r;
}

HitResult hitting_time(const NetworkParams& p, long n_target, const SimOptions& o) {
    require(n_target >= 1, "hitting_time: target must be >= 1");
    require(o.mode == SimMode::ExactEvent, "hitting_time: exact-event mode only");
    SimOptions oo = o;
    oo.hit_target = n_target;
    oo.warmup_fraction = 0.0;
    oo.snapshot_every = std::max<std::uint64_t>(o.horizon, 1);
    oo.stop_on_divergence = false;
    if (oo.divergence_threshold == 0) oo.divergence_threshold = std::numeric_limits<double>::max();
    const auto s = run(p, oo);
    HitResult h;
    if (s.hit_time) {
        h.time = *s.hit_time;
    } else {
        h.time = s.t_end;
        h.censored = true;
    }
    return h;
}

std::vector<HitResult> hitting_times(const NetworkParams& p, long n_target, int replicas, std::uint64_t seed,
                                     std::uint64_t max_events, int threads) {
    require(replicas >= 1, "hitting_times: need at least one replica");
    std::vector<HitResult> out(replicas);
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex m;
    auto worker = [&] {
        for (int i = next++; i < replicas; i = next++) {
            SimOptions o;
            o.horizon = max_events;
            o.seed = seed + static_cast<std::uint64_t>(i);
            o.n_annuli = 1;
            try {
                out[i] = hitting_time(p, n_target, o);
            } catch (...) {
                std::lock_guard<std::mutex> lock(m);
                if (!err) err = std::current_exception();
            }
        }
    };
    const int nt = std::max(1, std::min(threads, replicas));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace sbd
