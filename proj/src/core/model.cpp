#include "sbdnet/model.hpp"

#include <cmath>
#include <string>

#include "sbdnet/error.hpp"

namespace sbd {

double NetworkParams::area() const { return M_PI * radius * radius; }

double NetworkParams::service_scale() const { return bandwidth * mu / M_LN2; }

void NetworkParams::validate() const {
    require(std::isfinite(lambda) && lambda >= 0, "lambda must be >= 0");
    require(std::isfinite(mu) && mu > 0, "mu must be > 0");
    require(std::isfinite(bandwidth) && bandwidth > 0, "bandwidth must be > 0");
    require(std::isfinite(sigma2) && sigma2 > 0, "sigma2 must be > 0");
    require(inversion >= 0 && inversion <= 1, "inversion must lie in [0,1]");
    require(std::isfinite(eta) && eta > 0, "eta must be > 0");
    require(std::isfinite(radius) && radius > 0, "radius must be > 0");
}

double dbm_to_linear(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double path_loss(double r, double eta) {
    require(r >= 0, "path_loss: negative distance");
    require(eta > 0, "path_loss: eta must be > 0");
    return std::pow(1.0 + r, -eta);
}

double effective_gain(double r, const NetworkParams& p) {
    require(r >= 0 && r <= p.radius * (1 + 1e-12), "effective_gain: r outside the disk");
    if (p.inversion == 1.0) return 1.0;
    return std::pow(1.0 + r, -p.eta * (1.0 - p.inversion));
}

double gain_min(const NetworkParams& p) { return effective_gain(p.radius, p); }

double rate_low_sinr(double gain_self, double interference, const NetworkParams& p) {
    return p.bandwidth / M_LN2 * gain_self / (interference + p.sigma2);
}

double rate_general(double gain_self, double interference, const NetworkParams& p) {
    return p.bandwidth * std::log1p(gain_self / (interference + p.sigma2)) / M_LN2;
}

double rate(double gain_self, double interference, const NetworkParams& p) {
    return p.rate_mode == RateMode::LowSinr ? rate_low_sinr(gain_self, interference, p)
                                            : rate_general(gain_self, interference, p);
}

double critical_rate(const NetworkParams& p) { return p.service_scale() / p.area(); }

const char* regime_name(RegimeKind k) {
    switch (k) {
        case RegimeKind::Stable: return "stable";
        case RegimeKind::Boundary: return "boundary";
        case RegimeKind::Metastable: return "metastable";
        case RegimeKind::Unstable: return "unstable";
    }
    return "unknown";
}

}  // namespace sbd
