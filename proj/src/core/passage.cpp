#include "sbdnet/passage.hpp"

#include <cmath>

#include "sbdnet/error.hpp"
#include "sbdnet/stats.hpp"

namespace sbd {

double departure_rate(long n, double sigma2) {
    require(n >= 0, "departure_rate: n must be >= 0");
    require(sigma2 > 0, "departure_rate: sigma2 must be > 0");
    if (n == 0) return 0.0;
    return static_cast<double>(n) / ((n > 1 ? n - 1.0 : 0.0) + sigma2);
}

std::optional<long> drift_bound(double epsilon, double sigma2) {
    require(epsilon > 0, "drift_bound: epsilon must be > 0");
    require(sigma2 > 0, "drift_bound: sigma2 must be > 0");
    if (sigma2 > 1.0 / (1.0 + epsilon)) return std::nullopt;
    return static_cast<long>(std::floor((1.0 + epsilon) / epsilon * (1.0 - sigma2)));
}

double tau_step(long n, double arrival_rate, double sigma2) {
    require(n >= 0, "tau_step: n must be >= 0");
    require(arrival_rate > 0, "tau_step: arrival rate must be > 0");
    require(sigma2 > 0, "tau_step: sigma2 must be > 0");
    long double e = 1.0L / arrival_rate;
    for (long k = 1; k <= n; ++k) e = (1.0L + k / (k - 1.0L + sigma2) * e) / arrival_rate;
    return static_cast<double>(e);
}

double tau_step_closed(long n, double epsilon, double sigma2) {
    require(n >= 0, "tau_step_closed: n must be >= 0");
    require(epsilon > 0, "tau_step_closed: epsilon must be > 0");
    require(sigma2 > 0, "tau_step_closed: sigma2 must be > 0");
    const long double q = 1.0L / (1.0L + epsilon);
    long double sum = q, ratio = 1.0L, qpow = q;
    for (long i = 1; i <= n; ++i) {
        const long j = i - 1;
        ratio *= static_cast<long double>(n - j) / (n - 1.0L + sigma2 - j);
        qpow *= q;
        sum += qpow * ratio;
    }
    return static_cast<double>(sum);
}

double tau_step_unit_noise(long n, double epsilon) {
    require(n >= 0 && epsilon > 0, "tau_step_unit_noise: invalid arguments");
    return 1.0 / epsilon - 1.0 / (epsilon * std::pow(1.0 + epsilon, n + 1.0));
}

double tau_cum(long n, double epsilon, double sigma2, PassageMethod m) {
    require(n >= 1, "tau_cum: n must be >= 1");
    require(epsilon > 0, "tau_cum: epsilon must be > 0");
    require(sigma2 > 0, "tau_cum: sigma2 must be > 0");
    long double sum = 0.0L;
    if (m == PassageMethod::Closed) {
        for (long k = 0; k < n; ++k) sum += tau_step_closed(k, epsilon, sigma2);
        return static_cast<double>(sum);
    }
    const long double a = 1.0L + epsilon;
    long double e = 1.0L / a;
    sum = e;
    for (long k = 1; k < n; ++k) {
        e = (1.0L + k / (k - 1.0L + sigma2) * e) / a;
        sum += e;
    }
    return static_cast<double>(sum);
}

double tau_cum_unit_noise(long n, double epsilon) {
    require(n >= 1 && epsilon > 0, "tau_cum_unit_noise: invalid arguments");
    const double e2 = epsilon * epsilon;
    return (epsilon * n - 1.0) / e2 + 1.0 / (e2 * std::pow(1.0 + epsilon, static_cast<double>(n)));
}

PassageTable passage_table(long n_max, double epsilon, double sigma2, double seconds_per_unit) {
    require(n_max >= 1, "passage_table: n_max must be >= 1");
    require(epsilon > 0 && sigma2 > 0, "passage_table: epsilon and sigma2 must be > 0");
    PassageTable t;
    t.epsilon = epsilon;
    t.sigma2 = sigma2;
    t.arrival_rate = 1.0 + epsilon;
    t.seconds_per_unit = seconds_per_unit;
    t.step.resize(n_max);
    t.cum.resize(n_max + 1);
    const long double a = 1.0L + epsilon;
    long double e = 1.0L / a, sum = 0.0L;
    t.cum[0] = 0.0;
    for (long k = 0; k < n_max; ++k) {
        if (k > 0) e = (1.0L + k / (k - 1.0L + sigma2) * e) / a;
        t.step[k] = static_cast<double>(e);
        sum += e;
        t.cum[k + 1] = static_cast<double>(sum);
    }
    return t;
}

double chain_seconds(const NetworkParams& p) { return 1.0 / p.service_scale(); }

SigmaSweep tau_sigma_sweep(long n, double epsilon, const std::vector<double>& sigma2_grid) {
    require(sigma2_grid.size() >= 2, "tau_sigma_sweep: need at least two sigma2 values");
    SigmaSweep s;
    for (double v : sigma2_grid) {
        require(v > 0, "tau_sigma_sweep: sigma2 must be > 0");
        s.sigma2.push_back(v);
        s.inv_sigma2.push_back(1.0 / v);
        s.tau.push_back(tau_cum(n, epsilon, v, PassageMethod::Recursion));
    }
    const auto f = linear_fit(s.inv_sigma2, s.tau);
    s.slope = f.slope;
    s.intercept = f.intercept;
    s.r2 = f.r2;
    return s;
}

}  // namespace sbd
