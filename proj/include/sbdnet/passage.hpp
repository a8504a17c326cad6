#pragma once

#include <optional>
#include <vector>

#include "sbdnet/model.hpp"

namespace sbd {

// Chain time unit: B mu / ln2 = 1. Arrival rate lambda|D| = 1 + epsilon.

double departure_rate(long n, double sigma2);
std::optional<long> drift_bound(double epsilon, double sigma2);

// E[tau_{n,n+1}] by forward recursion
double tau_step(long n, double arrival_rate, double sigma2);
// Same quantity from the falling-factorial sum, arrival rate 1 + epsilon
double tau_step_closed(long n, double epsilon, double sigma2);
double tau_step_unit_noise(long n, double epsilon);

enum class PassageMethod { Recursion, Closed };
// E[tau_{0,n}]; the closed method is O(n^2)
double tau_cum(long n, double epsilon, double sigma2, PassageMethod m);
double tau_cum_unit_noise(long n, double epsilon);

struct PassageTable {
    double epsilon = 0.0;
    double sigma2 = 0.0;
    double arrival_rate = 0.0;
    double seconds_per_unit = 1.0;
    std::vector<double> step;  // step[n] = E[tau_{n,n+1}], n < n_max
    std::vector<double> cum;   // cum[n] = E[tau_{0,n}], n <= n_max
};

PassageTable passage_table(long n_max, double epsilon, double sigma2, double seconds_per_unit = 1.0);

// ln2/(B mu): seconds per chain time unit
double chain_seconds(const NetworkParams& p);

struct SigmaSweep {
    std::vector<double> sigma2;
    std::vector<double> inv_sigma2;
    std::vector<double> tau;
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

SigmaSweep tau_sigma_sweep(long n, double epsilon, const std::vector<double>& sigma2_grid);

}  // namespace sbd
