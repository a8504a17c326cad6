#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "sbdnet/error.hpp"
#include "sbdnet/passage.hpp"
#include "sbdnet/simulator.hpp"
#include "sbdnet/stats.hpp"

using namespace sbd;

namespace {

NetworkParams params(double eta, double lambda, double l = 0.0) {
    NetworkParams p;
    p.eta = eta;
    p.lambda = lambda;
    p.inversion = l;
    return p;
}

// Unit chain: B mu / ln2 = 1, full inversion, lambda |D| = a.
NetworkParams unit_chain(double a, double sigma2) {
    NetworkParams p;
    p.bandwidth = std::log(2.0);
    p.mu = 1.0;
    p.radius = 1.0;
    p.inversion = 1.0;
    p.sigma2 = sigma2;
    p.lambda = a / p.area();
    return p;
}

SimOptions opts(std::uint64_t horizon, std::uint64_t seed = 1) {
    SimOptions o;
    o.horizon = horizon;
    o.seed = seed;
    return o;
}

}  // namespace

TEST_CASE("counter rng is a pure function of seed and position") {
    CounterRng a(42), b(42), c(43);
    for (int i = 0; i < 1000; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }
    CHECK(a.uniform() != c.uniform());
}

TEST_CASE("runs are deterministic for a fixed seed") {
    for (auto mode : {SimMode::ExactEvent, SimMode::DiscreteStep}) {
        SimOptions o = opts(20000, 9);
        o.mode = mode;
        o.snapshot_every = 100;
        const auto a = run(params(4, 0.3), o);
        const auto b = run(params(4, 0.3), o);
        REQUIRE(a.trace.size() == b.trace.size());
        for (std::size_t i = 0; i < a.trace.size(); ++i) {
            CHECK(a.trace[i].t == b.trace[i].t);
            CHECK(a.trace[i].n == b.trace[i].n);
        }
        CHECK(a.nbar == b.nbar);
        o.seed = 10;
        CHECK(run(params(4, 0.3), o).nbar != a.nbar);
    }
}

TEST_CASE("replicas use consecutive seeds regardless of thread count") {
    const auto one = run_replicas(params(4, 0.3), opts(20000, 5), 4, 1);
    const auto many = run_replicas(params(4, 0.3), opts(20000, 5), 4, 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(one[i].seed == 5 + static_cast<std::uint64_t>(i));
        CHECK(one[i].nbar == many[i].nbar);
        CHECK(one[i].nbar == run(params(4, 0.3), opts(20000, 5 + i)).nbar);
    }
}

TEST_CASE("zero arrival rate keeps the cell empty") {
    const auto s = run(params(4, 0.0), opts(1000));
    CHECK(s.events == 0);
    CHECK(s.max_n == 0);
    for (const auto& tp : s.trace) CHECK(tp.n == 0);
    SimOptions o = opts(1000);
    o.mode = SimMode::DiscreteStep;
    CHECK_THROWS_AS(run(params(4, 0.0), o), Error);
}

TEST_CASE("lone user sojourn is exponential with the interference-free rate") {
    for (auto mode : {RateMode::LowSinr, RateMode::General}) {
        NetworkParams p = params(4, 0.0);
        p.rate_mode = mode;
        const double r0 = 20.0;
        const double expected = 1.0 / (p.mu * rate(effective_gain(r0, p), 0.0, p));
        std::vector<double> times;
        for (int i = 0; i < 1000; ++i) {
            SimOptions o = opts(10, 1000 + i);
            o.initial_radii = {r0};
            const auto s = run(p, o);
            REQUIRE(s.final_n == 0);
            times.push_back(s.t_end);
        }
        const auto ci = mean_ci(times);
        CAPTURE(ci.mean);
        CAPTURE(expected);
        CHECK(std::abs(ci.mean - expected) <= ci.half_width);
    }
}

TEST_CASE("initial users are exact-mode only") {
    SimOptions o = opts(10);
    o.mode = SimMode::DiscreteStep;
    o.initial_radii = {1.0};
    CHECK_THROWS_AS(run(params(4, 0.3), o), Error);
}

TEST_CASE("step rule") {
    NetworkParams p = params(4, 0.0);
    p.lambda = 100.0 / p.area();
    CHECK(step_rule_epsilon(p) == doctest::Approx(1e-4).epsilon(1e-12));
    const double e = step_rule_epsilon(p);
    p.lambda *= 2;
    CHECK(step_rule_epsilon(p) == doctest::Approx(e / 2).epsilon(1e-12));
    p = params(4, 0.3);
    CHECK(p.arrival_rate() == doctest::Approx(9424.78).epsilon(1e-6));
    CHECK(step_rule_epsilon(p) == doctest::Approx(1.061e-6).epsilon(1e-3));
    CHECK_THROWS_AS(step_rule_epsilon(params(4, 0.0)), Error);
}

TEST_CASE("one band is the plain discrete-step run") {
    SimOptions o = opts(50000, 3);
    o.mode = SimMode::DiscreteStep;
    o.n_bands = 1;
    const auto a = multi_band_run(params(4, 0.3), o);
    const auto b = run(params(4, 0.3), o);
    CHECK(a.nbar == b.nbar);
    CHECK(a.final_n == b.final_n);
    CHECK(a.trace.size() == b.trace.size());
    SimOptions e = opts(10);
    CHECK_THROWS_AS(multi_band_run(params(4, 0.3), e), Error);
    e.n_bands = 2;
    CHECK_THROWS_AS(run(params(4, 0.3), e), Error);
}

TEST_CASE("empirical intensity integrates to the mean") {
    const auto s = run(params(4, 0.3), opts(100000));
    double mass = 0;
    for (std::size_t b = 0; b < s.intensity.size(); ++b) {
        const double r0 = s.annulus_edges[b], r1 = s.annulus_edges[b + 1];
        mass += s.intensity[b] * M_PI * (r1 * r1 - r0 * r0);
    }
    CHECK(mass == doctest::Approx(s.nbar).epsilon(1e-9));
    CHECK(s.nbar >= 0);
}

TEST_CASE("full inversion spreads users uniformly over the disk") {
    // replica-level annulus means; chi-square with n_annuli - 1 = 9 dof, 1% level
    const int K = 20, nb = 10;
    SimOptions o = opts(100000, 77);
    o.n_annuli = nb;
    const auto reps = run_replicas(params(4, 0.3, 1.0), o, K, 4);
    double chi2 = 0;
    for (int b = 0; b < nb; ++b) {
        std::vector<double> x;
        for (const auto& s : reps) {
            double flat = 0;
            for (double v : s.intensity) flat += v;
            x.push_back(s.intensity[b] / (flat / nb));
        }
        const auto ci = mean_ci(x);
        chi2 += (ci.mean - 1.0) * (ci.mean - 1.0) / (ci.std_error * ci.std_error);
    }
    CAPTURE(chi2);
    CHECK(chi2 < 21.666);
}

TEST_CASE("exact and discrete modes agree on the stationary mean") {
    // same simulated time in both modes (about 12.7 s, a few hundred sojourns)
    const NetworkParams p = params(5, 0.3);
    const int reps = 16;
    SimOptions e = opts(240000, 11);
    SimOptions d = opts(12000000, 11);
    d.mode = SimMode::DiscreteStep;
    d.snapshot_every = 1000000;
    std::vector<double> ne, nd;
    for (const auto& s : run_replicas(p, e, reps, 4)) ne.push_back(s.nbar);
    for (const auto& s : run_replicas(p, d, reps, 4)) nd.push_back(s.nbar);
    const auto ce = mean_ci(ne), cd = mean_ci(nd);
    // Welch two-sample t test at 5%
    const double ve = ce.std_error * ce.std_error, vd = cd.std_error * cd.std_error;
    const double dof = (ve + vd) * (ve + vd) / (ve * ve / (reps - 1) + vd * vd / (reps - 1));
    const double q = boost::math::quantile(boost::math::students_t(dof), 0.975);
    CAPTURE(ce.mean);
    CAPTURE(cd.mean);
    CHECK(std::abs(ce.mean - cd.mean) <= q * std::sqrt(ve + vd));
}

TEST_CASE("stationary mean increases with the arrival rate") {
    double prev_mean = 0, prev_se = 0;
    for (double lam : {0.1, 0.2, 0.3}) {
        std::vector<double> x;
        for (const auto& s : run_replicas(params(5, lam), opts(100000, 21), 3, 3)) {
            CHECK_FALSE(s.diverged);
            x.push_back(s.nbar);
        }
        const auto ci = mean_ci(x);
        CHECK(ci.mean - prev_mean > -1.645 * std::hypot(ci.std_error, prev_se));
        prev_mean = ci.mean;
        prev_se = ci.std_error;
    }
}

TEST_CASE("conservation check flags") {
    const auto none = rate_conservation_check(run(params(4, 0.0), opts(100)), params(4, 0.0));
    CHECK_FALSE(none.defined);

    SimOptions shortrun = opts(60, 2);
    const auto few = rate_conservation_check(run(params(4, 0.3), shortrun), params(4, 0.3));
    CHECK(few.low_confidence);

    SimOptions u = opts(20000, 4);
    u.stop_on_divergence = false;
    const NetworkParams hot = params(4, 1.0);
    const auto early = run(hot, u);
    u.horizon = 80000;
    const auto late = run(hot, u);
    CHECK(late.diverged);
    CHECK(rate_conservation_check(late, hot).aggregate_error > rate_conservation_check(early, hot).aggregate_error);
}

TEST_CASE("divergence threshold defaults") {
    CHECK(default_divergence_threshold(params(4, 0.425)) == 100.0);
    const double t5 = default_divergence_threshold(params(5, 0.3));
    CHECK(t5 > 2000.0);
    CHECK(t5 < 2500.0);
    CHECK(default_divergence_threshold(params(4, 1.0)) == 1000.0);
    CHECK(default_divergence_threshold(params(4, 0.0)) == 1000.0);

    const auto s = run(params(5, 0.3), opts(200000));
    CHECK(s.divergence_threshold == t5);
    CHECK_FALSE(s.diverged);
    SimOptions o = opts(1000);
    o.divergence_threshold = 12.5;
    CHECK(run(params(5, 0.3), o).divergence_threshold == 12.5);
    o.divergence_threshold = -1;
    CHECK_THROWS_AS(run(params(5, 0.3), o), Error);
}

TEST_CASE("an unstable run trips the divergence detector and stops") {
    const auto s = run(params(4, 1.0), opts(1000000));
    CHECK(s.diverged);
    CHECK(s.events < 1000000);
}

TEST_CASE("first arrival time has mean and variance 1/(lambda|D|)") {
    const NetworkParams p = params(4, 0.3);
    const double a = p.arrival_rate();
    const auto hits = hitting_times(p, 1, 10000, 500, 100, 4);
    std::vector<double> t;
    for (const auto& h : hits) {
        REQUIRE_FALSE(h.censored);
        t.push_back(h.time);
    }
    const auto ci = mean_ci(t);
    CHECK(std::abs(ci.mean - 1.0 / a) <= ci.half_width);
    const double var = sample_variance(t);
    const double se_var = std::sqrt(8.0 / t.size()) / (a * a);
    CHECK(std::abs(var - 1.0 / (a * a)) <= 1.96 * se_var);
}

TEST_CASE("hitting level 5 matches the chain's expected passage time") {
    const NetworkParams p = unit_chain(2.0, 1.0);
    const auto hits = hitting_times(p, 5, 100000, 900, 1000000, 4);
    std::vector<double> t;
    for (const auto& h : hits) {
        REQUIRE_FALSE(h.censored);
        t.push_back(h.time);
    }
    const auto ci = mean_ci(t);
    const double expected = tau_cum(5, 1.0, 1.0, PassageMethod::Recursion) * chain_seconds(p);
    CAPTURE(ci.mean);
    CAPTURE(expected);
    CHECK(std::abs(ci.mean - expected) <= ci.half_width);
}

TEST_CASE("exhausted horizon yields censored hitting times") {
    const auto hits = hitting_times(params(4, 0.3), 100000, 3, 1, 50);
    for (const auto& h : hits) CHECK(h.censored);
}
