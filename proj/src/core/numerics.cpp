#include "sbdnet/numerics.hpp"

#include <cmath>
#include <sstream>

namespace sbd {

double checked(const QuadratureResult& q, const char* what) {
    if (!q.converged) {
        std::ostringstream os;
        os << what << ": quadrature did not converge (value " << q.value << ", error estimate " << q.error << ")";
        fail(ErrorCode::NoConvergence, os.str());
    }
    return q.value;
}

namespace {

constexpr double kSeriesLimit = 30.0;
constexpr double kOverflowLimit = 700.0;

void check_kummer_args(double a, double b, double z) {
    require(a > 0 && b > 0, "kummer_1f1: a and b must be positive");
    require(z >= 0 && std::isfinite(z), "kummer_1f1: z must be finite and >= 0");
}

// positive-term power series; long double accumulation
double series(double a, double b, double z) {
    long double term = 1.0L, sum = 1.0L;
    for (int j = 0; j < 100000; ++j) {
        term *= (static_cast<long double>(a) + j) / (static_cast<long double>(b) + j) * z / (j + 1);
        sum += term;
        if (term <= 1e-20L * sum && j > z) break;
    }
    return static_cast<double>(sum);
}

// e^{-z} times the series, summing terms in the log domain
double scaled_series(double a, double b, double z) {
    long double lt = -static_cast<long double>(z), sum = std::exp(lt);
    for (int j = 0; j < 10000000; ++j) {
        lt += std::log((static_cast<long double>(a) + j) / (static_cast<long double>(b) + j) * z / (j + 1));
        const long double term = std::exp(lt);
        sum += term;
        if (j > z && term <= 1e-20L * sum) break;
    }
    return static_cast<double>(sum);
}

// e^{-z} 1F1(a, a+1, z) = int_0^1 exp(-z (1 - v^{1/a})) dv, written in w = 1 - v.
// Below w* the integrand is under e^{-50} and is dropped.
double scaled_integral(double a, double z) {
    const double cut = 50.0 / z;
    const double w_star = cut >= 1.0 ? 1.0 : -std::expm1(a * std::log1p(-cut));
    auto f = [&](double w) {
        const double h = -std::expm1(std::log1p(-w) / a);
        return std::exp(-z * h);
    };
    QuadratureSpec spec;
    spec.rel_tol = 1e-13;
    spec.abs_tol = 0.0;
    return checked(integrate(f, 0.0, w_star, spec), "kummer_1f1_scaled");
}

}  // namespace

double kummer_1f1(double a, double b, double z) {
    check_kummer_args(a, b, z);
    if (z <= kSeriesLimit) return series(a, b, z);
    if (z > kOverflowLimit) fail(ErrorCode::Overflow, "kummer_1f1: z beyond the unscaled range, use kummer_1f1_scaled");
    const double v = std::exp(z) * kummer_1f1_scaled(a, b, z);
    if (!std::isfinite(v)) fail(ErrorCode::Overflow, "kummer_1f1: overflow");
    return v;
}

double kummer_1f1_scaled(double a, double b, double z) {
    check_kummer_args(a, b, z);
    if (z <= kSeriesLimit) return std::exp(-z) * series(a, b, z);
    if (b == a + 1.0) return scaled_integral(a, z);
    return scaled_series(a, b, z);
}

double kummer_derivative(double a, double b, double z) { return a / b * kummer_1f1(a + 1.0, b + 1.0, z); }

double saturation_time(const NetworkParams& p) { return 40.0 / gain_min(p); }

double g_inner(double t, const NetworkParams& p, const QuadratureSpec& spec) {
    require(t >= 0, "g_inner: t must be >= 0");
    if (t == 0.0) return 0.0;
    auto f = [&](double r) {
        const double g = effective_gain(std::min(r, p.radius), p);
        return -std::expm1(-t * g) / g;
    };
    return checked(disk_integral(f, p.radius, spec), "g_inner");
}

double a_infinity(const NetworkParams& p, const QuadratureSpec& spec) {
    auto f = [&](double r) { return 1.0 / effective_gain(std::min(r, p.radius), p); };
    return checked(disk_integral(f, p.radius, spec), "a_infinity");
}

QuadratureResult outer_t_integral(double Z, const NetworkParams& p, const QuadratureSpec& spec) {
    require(Z >= 0, "outer_t_integral: Z must be >= 0");
    const double s2 = p.sigma2;
    QuadratureSpec inner = spec;
    inner.rel_tol = spec.rel_tol * 0.1;
    inner.abs_tol = 0.0;
    const double a_inf = a_infinity(p, inner);
    const double t_hi = std::min(saturation_time(p), 60.0 / s2);
    const double t1 = std::min(1.0 / (Z * p.area() + s2), t_hi);

    QuadratureSpec piece = spec;
    piece.abs_tol = 0.0;
    auto lin = [&](double t) { return std::exp(-s2 * t - Z * g_inner(t, p, inner)); };
    auto logt = [&](double x) {
        const double t = std::exp(x);
        return t * std::exp(-s2 * t - Z * g_inner(t, p, inner));
    };
    const QuadratureResult head = integrate(lin, 0.0, t1, piece);
    QuadratureResult body;
    if (t1 < t_hi) body = integrate(logt, std::log(t1), std::log(t_hi), piece);
    const double tail = std::exp(-Z * a_inf) * std::exp(-s2 * t_hi) / s2;

    QuadratureResult out;
    out.value = head.value + body.value + tail;
    out.error = head.error + body.error;
    out.evaluations = head.evaluations + body.evaluations;
    out.converged = head.converged && body.converged && std::isfinite(out.value);
    out.tail_warning = s2 < 1e-12;
    return out;
}

RadialRule::RadialRule(const NetworkParams& p, int panels) {
    require(panels >= 1, "RadialRule: panels must be >= 1");
    const double lr = std::log1p(p.radius);
    for (int k = 0; k < panels; ++k) {
        const double a = std::expm1(lr * k / panels);
        const double b = k + 1 == panels ? p.radius : std::expm1(lr * (k + 1) / panels);
        gk21::nodes(a, b, [&](double r, double w) {
            const double g = effective_gain(r, p);
            r_.push_back(r);
            w_.push_back(2.0 * M_PI * r * w);
            g_.push_back(g);
            a_inf_ += 2.0 * M_PI * r * w / g;
        });
    }
}

double RadialRule::g_inner(double t) const {
    double s = 0.0;
    for (std::size_t k = 0; k < r_.size(); ++k) s += w_[k] * -std::expm1(-t * g_[k]) / g_[k];
    return s;
}

LogTimeRule::LogTimeRule(double sigma2, double t_sat, double t_lo, double panel_width) {
    require(sigma2 > 0 && t_sat > 0 && t_lo > 0 && panel_width > 0, "LogTimeRule: invalid arguments");
    t_hi_ = std::max(std::min(t_sat, 60.0 / sigma2), 2.0 * t_lo);
    const double x_lo = std::log(t_lo), x_hi = std::log(t_hi_);
    const int panels = static_cast<int>(std::ceil((x_hi - x_lo) / panel_width));
    const double h = (x_hi - x_lo) / panels;
    for (int k = 0; k < panels; ++k) {
        gk21::nodes(x_lo + k * h, x_lo + (k + 1) * h, [&](double x, double w) {
            const double t = std::exp(x);
            t_.push_back(t);
            w_.push_back(w * t * std::exp(-sigma2 * t));
        });
    }
    head_ = t_lo;
    tail_ = std::exp(-sigma2 * t_hi_) / sigma2;
}

double LogTimeRule::integrate(const double* k, double k_inf) const {
    double s = head_;
    for (std::size_t i = 0; i < t_.size(); ++i) s += w_[i] * std::exp(-k[i]);
    return s + tail_ * std::exp(-k_inf);
}

}  // namespace sbd
