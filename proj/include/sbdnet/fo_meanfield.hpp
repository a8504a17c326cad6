#pragma once

#include <optional>
#include <vector>

#include "sbdnet/model.hpp"
#include "sbdnet/numerics.hpp"

namespace sbd {

enum class Branch { Lower, Upper };

struct FoSolution {
    double z_star = 0.0;
    double nbar = 0.0;
    double lambda = 0.0;
    Branch branch = Branch::Lower;
    double residual = 0.0;  // relative, |rho ln2/B - Z outer(Z)| / (rho ln2/B)
    bool degenerate = false;  // tangency at the peak, reported once
};

struct SolutionCount {
    int count = 0;
    double c_value = 0.0;
    double c1_lower = 0.0;  // bounds on C1, only meaningful for sigma2 < 1
    double c1_upper = 0.0;
    std::optional<double> c1;
    std::optional<double> c1_nbar;
    bool degenerate = false;
};

// Full channel inversion: C = f(nbar) with C = rho ln2 |D| / B.
double f_meanfield(double nbar, double sigma2);
double f_derivative(double nbar, double sigma2);
SolutionCount count_solutions_full_inversion(double C, double sigma2);

struct FoOptions {
    double nbar_min = 1e-4;
    double nbar_max = 1e4;
    int grid_points = 400;
    double bracket_tol = 1e-8;
};

struct MetastableWindow {
    double lambda_c = 0.0;
    std::optional<double> lambda_upper;
    std::optional<double> nbar_peak;
};

// Precomputes the radial and time rules for one parameter set. The lambda field
// of the params is ignored; solve() takes the arrival rate explicitly.
class FoModel {
public:
    explicit FoModel(const NetworkParams& p);

    const NetworkParams& params() const { return p_; }
    double a_infinity() const { return radial_.a_infinity(); }
    double outer(double Z) const;
    double lambda_of_nbar(double nbar) const;
    std::vector<FoSolution> solve(double lambda, const FoOptions& o = {}) const;
    MetastableWindow window(const FoOptions& o = {}) const;
    double relative_residual(double lambda, double Z) const;

private:
    NetworkParams p_;
    RadialRule radial_;
    LogTimeRule time_;
    std::vector<double> ginner_;  // g_inner at the time-rule nodes
};

double lambda_of_nbar(double nbar, const NetworkParams& p);
std::vector<FoSolution> solve_fixed_point(double lambda, const NetworkParams& p, const FoOptions& o = {});
double intensity_fo(double r, const FoSolution& s, const NetworkParams& p);
MetastableWindow metastable_window(const NetworkParams& p, const FoOptions& o = {});

}  // namespace sbd
