#pragma once

#include <optional>

namespace sbd {

enum class RateMode { LowSinr, General };

// Physical constants of the cell. Units: lambda users/(m^2 s), mu 1/bits,
// bandwidth Hz, radius m; sigma2 and inversion are dimensionless.
struct NetworkParams {
    double lambda = 0.3;
    double mu = 0.01;
    double bandwidth = 1e6;
    double sigma2 = 1e-8;
    double inversion = 0.0;
    double eta = 4.0;
    double radius = 100.0;
    RateMode rate_mode = RateMode::LowSinr;

    double area() const;
    double rho() const { return lambda / mu; }
    double arrival_rate() const { return lambda * area(); }
    // B*mu/ln2: per-user departure rate scale, 1/s
    double service_scale() const;
    void validate() const;
};

double dbm_to_linear(double dbm);

double path_loss(double r, double eta);
double effective_gain(double r, const NetworkParams& p);
double gain_min(const NetworkParams& p);

double rate_low_sinr(double gain_self, double interference, const NetworkParams& p);
double rate_general(double gain_self, double interference, const NetworkParams& p);
double rate(double gain_self, double interference, const NetworkParams& p);

double critical_rate(const NetworkParams& p);

enum class RegimeKind { Stable, Boundary, Metastable, Unstable };

struct Regime {
    RegimeKind kind = RegimeKind::Stable;
    double lambda_c = 0.0;
    std::optional<double> lambda_upper;
};

// Uses the first-order solver above lambda_c.
Regime classify_regime(const NetworkParams& p);

const char* regime_name(RegimeKind k);

}  // namespace sbd
