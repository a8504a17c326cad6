#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sbdnet/error.hpp"
#include "sbdnet/model.hpp"

namespace sbd {

struct QuadratureSpec {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    int max_subdivisions = 4000;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
    bool converged = true;
    bool tail_warning = false;  // set when the analytic tail may dominate
};

// Throws NoConvergence carrying the achieved error estimate.
double checked(const QuadratureResult& q, const char* what);

namespace gk21 {
// Kronrod abscissae on [0,1]; odd indices are the 10-point Gauss nodes.
inline constexpr std::array<double, 11> x = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> wk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525292502, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> wg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

// Maps the 21 Kronrod nodes onto [a,b]; calls out(node, weight).
template <class Out>
void nodes(double a, double b, Out&& out) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (int i = 0; i < 10; ++i) {
        out(c - h * x[i], h * wk[i]);
        out(c + h * x[i], h * wk[i]);
    }
    out(c, h * wk[10]);
}
}  // namespace gk21

namespace detail {
struct Panel {
    double a, b, value, error;
};

template <class F>
Panel gk21_panel(F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double fc = f(c);
    double k = gk21::wk[10] * fc, g = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double s = f(c - h * gk21::x[i]) + f(c + h * gk21::x[i]);
        k += gk21::wk[i] * s;
        if (i % 2 == 1) g += gk21::wg[i / 2] * s;
    }
    return {a, b, k * h, std::abs((k - g) * h)};
}
}  // namespace detail

// Adaptive Gauss-Kronrod (G10/K21), worst-panel-first bisection.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureSpec& spec = {}) {
    QuadratureResult out;
    if (a == b) return out;
    auto worse = [](const detail::Panel& l, const detail::Panel& r) { return l.error < r.error; };
    std::vector<detail::Panel> heap{detail::gk21_panel(f, a, b)};
    out.evaluations = 21;
    double value = heap[0].value, error = heap[0].error;
    int splits = 0;
    while (error > std::max(spec.abs_tol, spec.rel_tol * std::abs(value))) {
        if (splits >= spec.max_subdivisions) {
            out.converged = false;
            break;
        }
        std::pop_heap(heap.begin(), heap.end(), worse);
        const detail::Panel p = heap.back();
        heap.pop_back();
        const double m = 0.5 * (p.a + p.b);
        if (!(m > p.a && m < p.b)) {
            heap.push_back(p);
            out.converged = false;
            break;
        }
        const detail::Panel l = detail::gk21_panel(f, p.a, m);
        const detail::Panel r = detail::gk21_panel(f, m, p.b);
        out.evaluations += 42;
        value += l.value + r.value - p.value;
        error += l.error + r.error - p.error;
        heap.push_back(l);
        std::push_heap(heap.begin(), heap.end(), worse);
        heap.push_back(r);
        std::push_heap(heap.begin(), heap.end(), worse);
        ++splits;
    }
    value = 0.0;
    error = 0.0;
    for (const auto& p : heap) {
        value += p.value;
        error += p.error;
    }
    out.value = value;
    out.error = error;
    if (!std::isfinite(value)) out.converged = false;
    return out;
}

// 2*pi * int_0^R f(r) r dr
template <class F>
QuadratureResult disk_integral(F&& f, double R, const QuadratureSpec& spec = {}) {
    require(R > 0, "disk_integral: radius must be positive");
    auto q = integrate([&](double r) { return f(r) * r; }, 0.0, R, spec);
    q.value *= 2.0 * M_PI;
    q.error *= 2.0 * M_PI;
    return q;
}

double kummer_1f1(double a, double b, double z);
// e^{-z} 1F1(a,b,z), bounded for the b = a+1 family
double kummer_1f1_scaled(double a, double b, double z);
double kummer_derivative(double a, double b, double z);

// int_D (1 - e^{-t g(y)}) / g(y) dy, adaptive
double g_inner(double t, const NetworkParams& p, const QuadratureSpec& spec = {});
// int_D 1/g(y) dy
double a_infinity(const NetworkParams& p, const QuadratureSpec& spec = {});
// int_0^inf e^{-sigma2 t} exp(-Z g_inner(t)) dt, adaptive
QuadratureResult outer_t_integral(double Z, const NetworkParams& p, const QuadratureSpec& spec = {});

// Smallest t at which every e^{-t g(y)} on the disk is below e^{-40}.
double saturation_time(const NetworkParams& p);

// Fixed composite rule in (1+r) geometric panels; for repeated disk sums.
class RadialRule {
public:
    explicit RadialRule(const NetworkParams& p, int panels = 48);

    const std::vector<double>& r() const { return r_; }
    const std::vector<double>& weight() const { return w_; }
    const std::vector<double>& gain() const { return g_; }
    double g_inner(double t) const;
    double a_infinity() const { return a_inf_; }

private:
    std::vector<double> r_, w_, g_;
    double a_inf_ = 0.0;
};

// Fixed composite rule for int_0^inf e^{-sigma2 t} e^{-K(t)} dt with K >= 0
// non-decreasing and K(0) = 0. Nodes live on x = ln t between t_lo and t_hi;
// [0, t_lo] contributes t_lo and the tail beyond t_hi is e^{-K_inf} e^{-sigma2 t_hi}/sigma2.
class LogTimeRule {
public:
    LogTimeRule(double sigma2, double t_sat, double t_lo = 1e-12, double panel_width = 0.25);

    std::size_t size() const { return t_.size(); }
    const std::vector<double>& t() const { return t_; }
    double t_hi() const { return t_hi_; }

    // k[i] = K(t_i)
    double integrate(const double* k, double k_inf) const;

    template <class K>
    double integrate_fn(K&& kfun, double k_inf) const {
        double s = head_;
        for (std::size_t i = 0; i < t_.size(); ++i) s += w_[i] * std::exp(-kfun(i));
        return s + tail_ * std::exp(-k_inf);
    }

private:
    std::vector<double> t_, w_;
    double t_hi_ = 0.0, head_ = 0.0, tail_ = 0.0;
};

struct RootOptions {
    double x_tol = 1e-12;
    double f_tol = 0.0;
    int max_iter = 300;
};

// Illinois regula falsi with forced bisection when the bracket stalls.
template <class F>
double bracketed_root(F&& f, double lo, double hi, const RootOptions& o = {}) {
    require(lo <= hi, "bracketed_root: lo > hi");
    double a = lo, b = hi, fa = f(a), fb = f(b);
    require(std::isfinite(fa) && std::isfinite(fb), "bracketed_root: non-finite endpoint value");
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    require(std::signbit(fa) != std::signbit(fb), "bracketed_root: endpoints do not bracket a root");
    int side = 0;
    double last_width = b - a;
    for (int it = 0; it < o.max_iter; ++it) {
        const double width = b - a;
        if (width <= o.x_tol) break;
        double x = (a * fb - b * fa) / (fb - fa);
        if (!(x > a && x < b) || (it % 3 == 2 && width > 0.5 * last_width)) x = 0.5 * (a + b);
        if (it % 3 == 2) last_width = width;
        const double fx = f(x);
        if (fx == 0.0 || std::abs(fx) <= o.f_tol) return x;
        if (std::signbit(fx) == std::signbit(fb)) {
            b = x;
            fb = fx;
            if (side == 1) fa *= 0.5;
            side = 1;
        } else {
            a = x;
            fa = fx;
            if (side == -1) fb *= 0.5;
            side = -1;
        }
    }
    return 0.5 * (a + b);
}

template <class F>
double bracketed_root(F&& f, double lo, double hi, double tol) {
    RootOptions o;
    o.x_tol = tol;
    return bracketed_root(std::forward<F>(f), lo, hi, o);
}

// Golden-section search for a maximum of a unimodal f on [lo, hi].
template <class F>
std::pair<double, double> golden_max(F&& f, double lo, double hi, double tol) {
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

}  // namespace sbd
