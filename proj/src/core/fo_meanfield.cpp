#include "sbdnet/fo_meanfield.hpp"

#include <cmath>
#include <sstream>

namespace sbd {

double f_meanfield(double nbar, double sigma2) {
    require(nbar >= 0, "f_meanfield: nbar must be >= 0");
    require(sigma2 > 0, "f_meanfield: sigma2 must be > 0");
    if (nbar == 0.0) return 0.0;
    return nbar / sigma2 * kummer_1f1_scaled(sigma2, sigma2 + 1.0, nbar);
}

// f' = e^{-n} [1/s + (s-1) sum_{k>=1} n^k / (k! (s+k)(s+k-1))]; the k >= 1 terms share a
// sign, so nothing cancels where f' is tiny
double f_derivative(double nbar, double sigma2) {
    require(nbar >= 0, "f_derivative: nbar must be >= 0");
    require(sigma2 > 0, "f_derivative: sigma2 must be > 0");
    const long double s = sigma2, n = nbar;
    long double sum = 0.0L;
    if (nbar > 0) {
        long double lt = -n;  // log of e^{-n} n^k / k!
        const long double kmax = n + 60.0L * std::sqrt(n) + 200.0L;
        for (long k = 1; k <= kmax; ++k) {
            lt += std::log(n / k);
            const long double term = std::exp(lt) / ((s + k) * (s + k - 1));
            sum += term;
            if (k > n && term <= 1e-22L * sum) break;
        }
    }
    return static_cast<double>(std::exp(-n) / s + (s - 1) * sum);
}

SolutionCount count_solutions_full_inversion(double C, double sigma2) {
    require(C >= 0, "count_solutions_full_inversion: C must be >= 0");
    require(sigma2 > 0, "count_solutions_full_inversion: sigma2 must be > 0");
    SolutionCount out;
    out.c_value = C;
    if (sigma2 >= 1.0) {
        out.count = C <= 1.0 ? 1 : 0;
        out.degenerate = C == 1.0;  // reached only as nbar -> infinity
        return out;
    }
    const double s = sigma2;
    out.c1_lower = std::max(std::exp(-1.0) / s, 1.0);
    out.c1_upper = std::pow(0.5, s - 1.0) * (1.0 + 1.0 / s);

    // the interior maximum sits where f' changes sign inside (1, (1+s)/(1-s))
    const double hi = (1.0 + s) / (1.0 - s);
    double peak;
    if (f_derivative(hi, s) < 0.0) {
        peak = bracketed_root([&](double n) { return f_derivative(n, s); }, 1.0, hi, 1e-13 * hi);
    } else {
        peak = golden_max([&](double n) { return f_meanfield(n, s); }, 1.0, hi, 1e-10 * hi).first;
    }
    const double c1 = f_meanfield(peak, s);
    out.c1 = c1;
    out.c1_nbar = peak;

    const double tol = 1e-12 * c1;
    if (C < 1.0) {
        out.count = 1;
    } else if (C == 1.0) {
        out.count = 1;
        out.degenerate = true;
    } else if (std::abs(C - c1) <= tol) {
        out.count = 1;
        out.degenerate = true;
    } else {
        out.count = C < c1 ? 2 : 0;
    }
    return out;
}

FoModel::FoModel(const NetworkParams& p) : p_(p), radial_(p), time_(p.sigma2, saturation_time(p)) {
    p_.validate();
    ginner_.resize(time_.size());
    for (std::size_t i = 0; i < time_.size(); ++i) ginner_[i] = radial_.g_inner(time_.t()[i]);
}

double FoModel::outer(double Z) const {
    require(Z >= 0, "outer: Z must be >= 0");
    return time_.integrate_fn([&](std::size_t i) { return Z * ginner_[i]; }, Z * radial_.a_infinity());
}

double FoModel::lambda_of_nbar(double nbar) const {
    require(nbar >= 0, "lambda_of_nbar: nbar must be >= 0");
    const double Z = nbar / radial_.a_infinity();
    return p_.service_scale() * Z * outer(Z);
}

double FoModel::relative_residual(double lambda, double Z) const {
    const double target = lambda / p_.service_scale();
    return std::abs(target - Z * outer(Z)) / target;
}

namespace {
std::vector<double> geometric_grid(const FoOptions& o) {
    require(o.nbar_min > 0 && o.nbar_max > o.nbar_min && o.grid_points >= 2, "FoOptions: invalid scan grid");
    std::vector<double> g(o.grid_points);
    const double l0 = std::log(o.nbar_min), l1 = std::log(o.nbar_max);
    for (int k = 0; k < o.grid_points; ++k) g[k] = std::exp(l0 + (l1 - l0) * k / (o.grid_points - 1));
    g.back() = o.nbar_max;
    return g;
}
}  // namespace

std::vector<FoSolution> FoModel::solve(double lambda, const FoOptions& o) const {
    require(lambda >= 0 && std::isfinite(lambda), "solve_fixed_point: lambda must be >= 0");
    if (lambda == 0.0) return {FoSolution{}};

    const auto grid = geometric_grid(o);
    std::vector<double> h(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) h[k] = lambda_of_nbar(grid[k]) - lambda;

    const double lc = critical_rate(p_);
    if (lambda < lc && h.back() <= 0.0) {
        std::ostringstream os;
        os << "solve_fixed_point: no crossing below nbar_max = " << o.nbar_max << " at lambda = " << lambda;
        fail(ErrorCode::GridExhausted, os.str());
    }
    if (lambda > lc && h.back() > 0.0) {
        std::ostringstream os;
        os << "solve_fixed_point: lambda(nbar) still above " << lambda << " at nbar_max = " << o.nbar_max;
        fail(ErrorCode::GridExhausted, os.str());
    }

    auto hf = [&](double n) { return lambda_of_nbar(n) - lambda; };
    std::vector<double> roots;
    if (h[0] > 0.0) roots.push_back(bracketed_root(hf, 0.0, grid[0], o.bracket_tol));
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        if (h[k] == 0.0) {
            roots.push_back(grid[k]);
        } else if ((h[k] < 0.0) != (h[k + 1] < 0.0) && h[k + 1] != 0.0) {
            roots.push_back(bracketed_root(hf, grid[k], grid[k + 1], o.bracket_tol));
        }
    }

    bool degenerate = false;
    if (roots.size() == 2 && roots[1] - roots[0] <= 1e-6 * roots[1]) {
        roots = {0.5 * (roots[0] + roots[1])};
        degenerate = true;
    }
    if (roots.empty() && lambda > lc) {
        const auto w = window(o);
        if (w.lambda_upper && std::abs(*w.lambda_upper - lambda) <= 1e-9 * lambda) {
            roots.push_back(*w.nbar_peak);
            degenerate = true;
        }
    }

    std::vector<FoSolution> out;
    for (std::size_t i = 0; i < roots.size(); ++i) {
        FoSolution s;
        s.nbar = roots[i];
        s.z_star = roots[i] / radial_.a_infinity();
        s.lambda = lambda_of_nbar(roots[i]);
        s.branch = i == 0 ? Branch::Lower : Branch::Upper;
        s.residual = relative_residual(lambda, s.z_star);
        s.degenerate = degenerate;
        out.push_back(s);
    }
    return out;
}

MetastableWindow FoModel::window(const FoOptions& o) const {
    MetastableWindow w;
    w.lambda_c = critical_rate(p_);
    const auto grid = geometric_grid(o);
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double v = lambda_of_nbar(grid[k]);
        if (v > best_v) {
            best_v = v;
            best = k;
        }
    }
    if (best == 0 || best + 1 == grid.size() || best_v <= w.lambda_c * (1.0 + 1e-12)) return w;
    const auto peak = golden_max([&](double x) { return lambda_of_nbar(std::exp(x)); }, std::log(grid[best - 1]),
                                 std::log(grid[best + 1]), 1e-10);
    w.lambda_upper = peak.second;
    w.nbar_peak = std::exp(peak.first);
    return w;
}

double lambda_of_nbar(double nbar, const NetworkParams& p) { return FoModel(p).lambda_of_nbar(nbar); }

std::vector<FoSolution> solve_fixed_point(double lambda, const NetworkParams& p, const FoOptions& o) {
    return FoModel(p).solve(lambda, o);
}

double intensity_fo(double r, const FoSolution& s, const NetworkParams& p) {
    return s.z_star / effective_gain(r, p);
}

MetastableWindow metastable_window(const NetworkParams& p, const FoOptions& o) { return FoModel(p).window(o); }

Regime classify_regime(const NetworkParams& p) {
    p.validate();
    Regime r;
    r.lambda_c = critical_rate(p);
    const double lc = r.lambda_c;
    const FoModel m(p);
    const auto w = m.window();
    r.lambda_upper = w.lambda_upper;
    if (std::abs(p.lambda - lc) <= 1e-12 * lc) {
        r.kind = RegimeKind::Boundary;
    } else if (p.lambda < lc) {
        r.kind = RegimeKind::Stable;
    } else if (w.lambda_upper && p.lambda < *w.lambda_upper) {
        r.kind = m.solve(p.lambda).size() == 2 ? RegimeKind::Metastable : RegimeKind::Unstable;
    } else {
        r.kind = RegimeKind::Unstable;
    }
    return r;
}

}  // namespace sbd
