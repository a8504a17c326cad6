#include "sbdnet/so_meanfield.hpp"

#include <cmath>
#include <sstream>

namespace sbd {

RadialGrid::RadialGrid(double radius, int n_r, int n_theta) : n_r_(n_r), n_theta_(n_theta), radius_(radius) {
    require(radius > 0, "RadialGrid: radius must be > 0");
    require(n_r >= 1 && n_theta >= 1, "RadialGrid: n_r and n_theta must be >= 1");
    edges_.resize(n_r + 1);
    for (int i = 0; i <= n_r; ++i) edges_[i] = radius * i / n_r;
    for (int i = 0; i < n_r; ++i) {
        center_.push_back(0.5 * (edges_[i] + edges_[i + 1]));
        area_.push_back(M_PI * (edges_[i + 1] - edges_[i]) * (edges_[i + 1] + edges_[i]));
    }
}

int RadialGrid::fold(int a, int b) const {
    const int m = 2 * n_theta_;
    int d = ((a - b) % m + m) % m;
    return std::min(d, m - d);
}

int RadialGrid::annulus_of(double r) const {
    require(r >= 0 && r <= radius_ * (1 + 1e-12), "annulus_of: r outside the disk");
    return std::min(n_r_ - 1, static_cast<int>(r / radius_ * n_r_));
}

void FactorizationWeights::validate() const {
    require(a >= 0 && b >= 0 && c >= 0 && d >= 0, "factorization weights must be >= 0");
    require(std::abs(a + b + c + d - 1.0) <= 1e-12, "factorization weights must sum to 1");
}

const char* so_status_name(SoStatus s) {
    switch (s) {
        case SoStatus::Converged: return "converged";
        case SoStatus::MaxIterations: return "max_iterations";
        case SoStatus::Diverged: return "diverged";
        case SoStatus::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

namespace {
double min_cell_gain(const NetworkParams& p, const RadialGrid& grid) {
    return effective_gain(grid.center(grid.n_r() - 1), p);
}

double rel_change(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double s = std::max(std::abs(a[i]), std::abs(b[i]));
        if (s > 0) m = std::max(m, std::abs(a[i] - b[i]) / s);
    }
    return m;
}
}  // namespace

SoModel::SoModel(const NetworkParams& p, const RadialGrid& grid)
    : p_(p), grid_(grid), time_(p.sigma2, 40.0 / min_cell_gain(p, grid)) {
    p_.validate();
    require(std::abs(grid.radius() - p.radius) <= 1e-12 * p.radius, "SoModel: grid radius differs from params");
    const int nr = grid_.n_r();
    for (int i = 0; i < nr; ++i) gain_.push_back(effective_gain(grid_.center(i), p_));
    one_minus_exp_.resize(time_.size() * nr);
    for (std::size_t q = 0; q < time_.size(); ++q)
        for (int j = 0; j < nr; ++j) one_minus_exp_[q * nr + j] = -std::expm1(-time_.t()[q] * gain_[j]);
}

double SoModel::rho_prime() const { return p_.lambda / p_.service_scale(); }

std::pair<IntensityField, SecondMoment> SoModel::init_from_fo(const FoSolution& s,
                                                              const FactorizationWeights& w) const {
    w.validate();
    const int nr = grid_.n_r(), nk = grid_.n_bins();
    IntensityField g1;
    for (int i = 0; i < nr; ++i) g1.v.push_back(s.z_star / gain_[i]);
    SecondMoment g2;
    g2.n_r = nr;
    g2.n_k = nk;
    g2.weights = w;
    g2.v.resize(static_cast<std::size_t>(nr) * nr * nk);
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nr; ++j)
            for (int k = 0; k < nk; ++k) g2.at(i, j, k) = g1.v[i] * g1.v[j];
    return {g1, g2};
}

SoModel::PairTerms SoModel::pair_terms(const IntensityField& g1, const SecondMoment& g2) const {
    const int nr = grid_.n_r(), nk = grid_.n_bins();
    PairTerms t;
    for (int m = 0; m < nr; ++m) t.j0 += grid_.area(m) * g1.v[m] * gain_[m];
    t.j0 *= g2.weights.a;
    t.i2.assign(nr, 0.0);
    for (int i = 0; i < nr; ++i) {
        double s = 0.0;
        for (int m = 0; m < nr; ++m) {
            double ang = 0.0;
            for (int k = 0; k < nk; ++k) ang += grid_.bin_fraction(k) * g2.at(i, m, k);
            s += gain_[m] * grid_.area(m) * ang;
        }
        t.i2[i] = s;
    }
    return t;
}

double SoModel::triple_term(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2) const {
    const int nr = grid_.n_r(), sectors = 2 * grid_.n_theta();
    double s = 0.0;
    for (int m = 0; m < nr; ++m) {
        if (g1.v[m] <= 0.0) continue;  // factorization d undefined on empty cells; term dropped
        double ang = 0.0;
        for (int n = 0; n < sectors; ++n) ang += g2.at(i, m, grid_.fold(0, n)) * g2.at(j, m, grid_.fold(k, n));
        s += gain_[m] * grid_.area(m) / g1.v[m] * ang / sectors;
    }
    return s;
}

double SoModel::p_term(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2,
                       const PairTerms& t) const {
    const auto& w = g2.weights;
    double p = w.b * g1.v[j] * t.i2[i] + w.c * g1.v[i] * t.i2[j];
    if (w.d > 0) p += w.d * triple_term(i, j, k, g1, g2);
    return p;
}

double SoModel::mean_interference_pair(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2) const {
    const int nr = grid_.n_r();
    require(i >= 0 && i < nr && j >= 0 && j < nr && k >= 0 && k < grid_.n_bins(),
            "mean_interference_pair: index out of range");
    const double v = g2.at(i, j, k);
    require(v > 0, "mean_interference_pair: gamma2 must be > 0 at the pair");
    const auto t = pair_terms(g1, g2);
    return t.j0 + p_term(i, j, k, g1, g2, t) / v;
}

SecondMoment SoModel::update_gamma2(const IntensityField& g1, const SecondMoment& g2) const {
    g2.weights.validate();
    const int nr = grid_.n_r(), nk = grid_.n_bins();
    const double rp = rho_prime(), s2 = p_.sigma2;
    const auto t = pair_terms(g1, g2);
    const bool asym = g2.weights.b != g2.weights.c || g2.weights.d > 0;
    SecondMoment out = g2;

    // J = J0 + P/v with P from the pre-update field; the equation in v is
    // v^2 gx/(P + v(J0+gy+s2)) + v^2 gy/(P + v(J0+gx+s2)) = rhs, increasing in v.
    auto solve_point = [&](double gx, double gy, double P, double rhs, double guess) {
        if (rhs <= 0.0) return 0.0;
        auto f = [&](double v) {
            return v * v * gx / (P + v * (t.j0 + gy + s2)) + v * v * gy / (P + v * (t.j0 + gx + s2)) - rhs;
        };
        double hi = guess > 0 ? guess : rhs;
        while (f(hi) < 0.0) hi *= 2.0;
        double lo = hi;
        while (lo > 0 && f(lo) >= 0.0) lo *= 0.5;
        RootOptions ro;
        ro.x_tol = 1e-15 * hi;
        return bracketed_root(f, lo, hi, ro);
    };

    for (int i = 0; i < nr; ++i) {
        for (int j = i; j < nr; ++j) {
            for (int k = 0; k < nk; ++k) {
                const double rhs = rp * (g1.v[i] + g1.v[j]);
                const double guess = g2.at(i, j, k);
                double v = solve_point(gain_[i], gain_[j], p_term(i, j, k, g1, g2, t), rhs, guess);
                if (asym && i != j) {
                    v = 0.5 * (v + solve_point(gain_[j], gain_[i], p_term(j, i, k, g1, g2, t), rhs, guess));
                }
                if (!std::isfinite(v) || v < 0.0) {
                    std::ostringstream os;
                    os << "update_gamma2: invalid value " << v << " at (" << i << "," << j << "," << k << ")";
                    fail(ErrorCode::NoConvergence, os.str());
                }
                out.at(i, j, k) = v;
                out.at(j, i, k) = v;
            }
        }
    }
    return out;
}

double SoModel::gamma1_G(double gamma, const std::vector<double>& kbase, double kinf) const {
    const double inv = 1.0 / gamma;
    return time_.integrate_fn([&](std::size_t q) { return kbase[q] * inv; }, kinf * inv);
}

IntensityField SoModel::update_gamma1(const IntensityField& g1, const SecondMoment& g2, const SoOptions& o) const {
    const int nr = grid_.n_r(), nk = grid_.n_bins();
    const double rp = rho_prime();
    IntensityField out = g1;
    std::vector<double> c(nr), kbase(time_.size());
    for (int i = 0; i < nr; ++i) {
        require(g1.v[i] > 0, "update_gamma1: gamma1 must be strictly positive");
        double kinf = 0.0;
        for (int j = 0; j < nr; ++j) {
            double ang = 0.0;
            for (int k = 0; k < nk; ++k) ang += grid_.bin_fraction(k) * g2.at(i, j, k);
            c[j] = grid_.area(j) * ang;
            kinf += c[j];
        }
        for (std::size_t q = 0; q < time_.size(); ++q) {
            const double* row = &one_minus_exp_[q * nr];
            double s = 0.0;
            for (int j = 0; j < nr; ++j) s += c[j] * row[j];
            kbase[q] = s;
        }

        double gamma = g1.v[i], alpha = o.damping, last_step = 0.0;
        bool done = false;
        for (int it = 0; it < o.max_inner; ++it) {
            const double target = rp / (gain_[i] * gamma1_G(gamma, kbase, kinf));
            const double next = (1.0 - alpha) * gamma + alpha * target;
            const double step = next - gamma;
            if (it > 0 && (step > 0) != (last_step > 0) && std::abs(step) >= 0.5 * std::abs(last_step)) alpha *= 0.5;
            last_step = step;
            if (!std::isfinite(next) || next <= 0.0) {
                std::ostringstream os;
                os << "update_gamma1: invalid iterate at point " << i;
                fail(ErrorCode::NoConvergence, os.str());
            }
            gamma = next;
            if (std::abs(step) <= o.inner_tol * gamma) {
                done = true;
                break;
            }
        }
        if (!done) {
            std::ostringstream os;
            os << "update_gamma1: point " << i << " did not converge in " << o.max_inner << " iterations";
            fail(ErrorCode::NoConvergence, os.str());
        }
        out.v[i] = gamma;
    }
    return out;
}

double SoModel::residual_gamma1(const IntensityField& g1, const SecondMoment& g2) const {
    const int nr = grid_.n_r(), nk = grid_.n_bins();
    const double rp = rho_prime();
    if (rp <= 0) return 0.0;
    std::vector<double> c(nr), kbase(time_.size());
    double worst = 0.0;
    for (int i = 0; i < nr; ++i) {
        double kinf = 0.0;
        for (int j = 0; j < nr; ++j) {
            double ang = 0.0;
            for (int k = 0; k < nk; ++k) ang += grid_.bin_fraction(k) * g2.at(i, j, k);
            c[j] = grid_.area(j) * ang;
            kinf += c[j];
        }
        for (std::size_t q = 0; q < time_.size(); ++q) {
            double s = 0.0;
            for (int j = 0; j < nr; ++j) s += c[j] * one_minus_exp_[q * nr + j];
            kbase[q] = s;
        }
        const double lhs = g1.v[i] * gain_[i] * gamma1_G(g1.v[i], kbase, kinf);
        worst = std::max(worst, std::abs(lhs - rp) / rp);
    }
    return worst;
}

double SoModel::residual_gamma2(const IntensityField& g1, const SecondMoment& g2) const {
    const int nr = grid_.n_r(), nk = grid_.n_bins();
    const double rp = rho_prime(), s2 = p_.sigma2;
    if (rp <= 0) return 0.0;
    const auto t = pair_terms(g1, g2);
    double worst = 0.0;
    for (int i = 0; i < nr; ++i) {
        for (int j = i; j < nr; ++j) {
            for (int k = 0; k < nk; ++k) {
                const double v = g2.at(i, j, k);
                const double rhs = rp * (g1.v[i] + g1.v[j]);
                auto lhs_of = [&](int a, int b) {
                    const double J = t.j0 + p_term(a, b, k, g1, g2, t) / v;
                    return v * (gain_[a] / (J + gain_[b] + s2) + gain_[b] / (J + gain_[a] + s2));
                };
                const double lhs = i == j ? lhs_of(i, j) : 0.5 * (lhs_of(i, j) + lhs_of(j, i));
                worst = std::max(worst, std::abs(lhs - rhs) / rhs);
            }
        }
    }
    return worst;
}

double SoModel::total_mass(const IntensityField& g1) const {
    double s = 0.0;
    for (int i = 0; i < grid_.n_r(); ++i) s += grid_.area(i) * g1.v[i];
    return s;
}

SoResult SoModel::solve(const FactorizationWeights& w, const SoOptions& o) const {
    w.validate();
    const double lc = critical_rate(p_);
    if (p_.lambda >= lc && !o.allow_unstable) {
        std::ostringstream os;
        os << "solve_so: lambda = " << p_.lambda << " is not below lambda_c = " << lc
           << "; set the override to solve anyway";
        fail(ErrorCode::Refused, os.str());
    }
    require(grid_.n_r() >= 16 && grid_.n_theta() >= 8, "solve_so: grid needs n_r >= 16 and n_theta >= 8");

    SoResult res;
    FoSolution fo;
    if (p_.lambda > 0) {
        const auto sols = FoModel(p_).solve(p_.lambda);
        if (sols.empty()) fail(ErrorCode::NoConvergence, "solve_so: no first-order solution to start from");
        fo = sols.front();
    }
    res.nbar_fo = fo.nbar;
    auto [g1, g2] = init_from_fo(fo, w);
    if (p_.lambda == 0.0) {
        res.gamma1 = g1;
        res.gamma2 = g2;
        res.diag.outer_iterations = 1;
        res.diag.change_history.push_back(0.0);
        return res;
    }

    const double inner_tol = std::max(o.inner_tol, 0.01 * o.outer_tol);
    SoOptions inner = o;
    inner.inner_tol = inner_tol;
    int growth = 0;
    try {
        for (int outer = 1; outer <= o.max_outer; ++outer) {
            const auto old1 = g1.v;
            const auto old2 = g2.v;
            for (int it = 0; it < o.max_inner; ++it) {
                SecondMoment next = update_gamma2(g1, g2);
                const double ch = rel_change(next.v, g2.v);
                g2 = std::move(next);
                if (ch < inner_tol) break;
            }
            g1 = update_gamma1(g1, g2, inner);
            const double change = std::max(rel_change(g1.v, old1), rel_change(g2.v, old2));
            auto& d = res.diag;
            d.outer_iterations = outer;
            d.change_history.push_back(change);
            d.residual14_history.push_back(residual_gamma1(g1, g2));
            d.residual15_history.push_back(residual_gamma2(g1, g2));
            if (change < o.outer_tol) {
                d.status = SoStatus::Converged;
                break;
            }
            const auto& h = d.change_history;
            growth = (h.size() >= 2 && h[h.size() - 1] > h[h.size() - 2]) ? growth + 1 : 0;
            if (growth >= o.divergence_window) {
                d.status = SoStatus::Diverged;
                d.message = "change grew over consecutive outer iterations";
                break;
            }
            if (outer == o.max_outer) {
                d.status = SoStatus::MaxIterations;
                d.message = "outer iteration limit reached";
            }
        }
    } catch (const Error& e) {
        res.diag.status = SoStatus::NumericalFailure;
        res.diag.message = e.what();
    }
    res.gamma1 = g1;
    res.gamma2 = g2;
    res.nbar = total_mass(g1);
    res.diag.residual14 = res.diag.residual14_history.empty() ? 0.0 : res.diag.residual14_history.back();
    res.diag.residual15 = res.diag.residual15_history.empty() ? 0.0 : res.diag.residual15_history.back();
    return res;
}

std::pair<IntensityField, SecondMoment> init_from_fo(const FoSolution& s, const RadialGrid& grid,
                                                      const NetworkParams& p, const FactorizationWeights& w) {
    return SoModel(p, grid).init_from_fo(s, w);
}

double mean_interference_pair(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2,
                              const RadialGrid& grid, const NetworkParams& p) {
    return SoModel(p, grid).mean_interference_pair(i, j, k, g1, g2);
}

SecondMoment update_gamma2(const IntensityField& g1, const SecondMoment& g2, const RadialGrid& grid,
                           const NetworkParams& p) {
    return SoModel(p, grid).update_gamma2(g1, g2);
}

IntensityField update_gamma1(const IntensityField& g1, const SecondMoment& g2, const RadialGrid& grid,
                             const NetworkParams& p, const SoOptions& o) {
    return SoModel(p, grid).update_gamma1(g1, g2, o);
}

SoResult solve_so(const NetworkParams& p, const RadialGrid& grid, const FactorizationWeights& w,
                  const SoOptions& o) {
    return SoModel(p, grid).solve(w, o);
}

std::vector<double> conditional_intensity(const IntensityField& g1, const SecondMoment& g2, const RadialGrid& grid,
                                          double observer_r) {
    const int i = grid.annulus_of(observer_r);
    std::vector<double> out(grid.n_r(), 0.0);
    if (g1.v[i] <= 0.0) return out;
    for (int j = 0; j < grid.n_r(); ++j) {
        double s = 0.0;
        for (int k = 0; k < grid.n_bins(); ++k) s += grid.bin_fraction(k) * g2.at(i, j, k);
        out[j] = s / g1.v[i];
    }
    return out;
}

}  // namespace sbd
