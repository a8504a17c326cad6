#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sbdnet/fo_meanfield.hpp"
#include "sbdnet/model.hpp"

namespace sbd {

// n_r equal-width annuli; pair separations folded into n_theta + 1 bins at
// k*pi/n_theta (2 n_theta full-circle sectors, end bins counted once).
class RadialGrid {
public:
    RadialGrid(double radius, int n_r, int n_theta);

    int n_r() const { return n_r_; }
    int n_theta() const { return n_theta_; }
    int n_bins() const { return n_theta_ + 1; }
    double radius() const { return radius_; }
    double center(int i) const { return center_[i]; }
    double area(int i) const { return area_[i]; }
    double edge(int i) const { return edges_[i]; }
    // share of the full circle carried by separation bin k
    double bin_fraction(int k) const { return (k == 0 || k == n_theta_) ? 0.5 / n_theta_ : 1.0 / n_theta_; }
    // separation bin between full-circle sectors a and b
    int fold(int a, int b) const;
    int annulus_of(double r) const;

private:
    int n_r_, n_theta_;
    double radius_;
    std::vector<double> edges_, center_, area_;
};

struct IntensityField {
    std::vector<double> v;
};

struct FactorizationWeights {
    double a = 0.0, b = 0.5, c = 0.5, d = 0.0;
    void validate() const;
};

struct SecondMoment {
    int n_r = 0, n_k = 0;
    std::vector<double> v;
    FactorizationWeights weights;

    double& at(int i, int j, int k) { return v[(static_cast<std::size_t>(i) * n_r + j) * n_k + k]; }
    double at(int i, int j, int k) const { return v[(static_cast<std::size_t>(i) * n_r + j) * n_k + k]; }
};

struct SoOptions {
    double outer_tol = 1e-5;
    int max_outer = 200;
    double inner_tol = 1e-10;
    int max_inner = 500;
    double damping = 0.5;
    bool allow_unstable = false;
    int divergence_window = 10;
};

enum class SoStatus { Converged, MaxIterations, Diverged, NumericalFailure };

struct SoDiagnostics {
    SoStatus status = SoStatus::Converged;
    std::string message;
    int outer_iterations = 0;
    std::vector<double> change_history;
    std::vector<double> residual14_history;
    std::vector<double> residual15_history;
    double residual14 = 0.0;
    double residual15 = 0.0;
};

struct SoResult {
    IntensityField gamma1;
    SecondMoment gamma2;
    SoDiagnostics diag;
    double nbar = 0.0;
    double nbar_fo = 0.0;
};

// Precomputed per (params, grid): cell gains and the time rule shared by the updates.
class SoModel {
public:
    SoModel(const NetworkParams& p, const RadialGrid& grid);

    const NetworkParams& params() const { return p_; }
    const RadialGrid& grid() const { return grid_; }
    double gain(int i) const { return gain_[i]; }
    double rho_prime() const;

    std::pair<IntensityField, SecondMoment> init_from_fo(const FoSolution& s, const FactorizationWeights& w) const;
    double mean_interference_pair(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2) const;
    SecondMoment update_gamma2(const IntensityField& g1, const SecondMoment& g2) const;
    IntensityField update_gamma1(const IntensityField& g1, const SecondMoment& g2, const SoOptions& o = {}) const;
    SoResult solve(const FactorizationWeights& w, const SoOptions& o = {}) const;

    // residuals of the two fixed-point equations, max relative over the grid
    double residual_gamma1(const IntensityField& g1, const SecondMoment& g2) const;
    double residual_gamma2(const IntensityField& g1, const SecondMoment& g2) const;
    double total_mass(const IntensityField& g1) const;

private:
    struct PairTerms {
        double j0 = 0.0;
        std::vector<double> i2;  // int gamma2(x_i,u) g(u) du
    };
    PairTerms pair_terms(const IntensityField& g1, const SecondMoment& g2) const;
    double triple_term(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2) const;
    double p_term(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2, const PairTerms& t) const;
    double gamma1_G(double gamma, const std::vector<double>& kbase, double kinf) const;

    NetworkParams p_;
    RadialGrid grid_;
    std::vector<double> gain_;
    LogTimeRule time_;
    std::vector<double> one_minus_exp_;  // [node * n_r + j] = 1 - e^{-t_node g_j}
};

std::pair<IntensityField, SecondMoment> init_from_fo(const FoSolution& s, const RadialGrid& grid,
                                                      const NetworkParams& p,
                                                      const FactorizationWeights& w = {});
double mean_interference_pair(int i, int j, int k, const IntensityField& g1, const SecondMoment& g2,
                              const RadialGrid& grid, const NetworkParams& p);
SecondMoment update_gamma2(const IntensityField& g1, const SecondMoment& g2, const RadialGrid& grid,
                           const NetworkParams& p);
IntensityField update_gamma1(const IntensityField& g1, const SecondMoment& g2, const RadialGrid& grid,
                             const NetworkParams& p, const SoOptions& o = {});
SoResult solve_so(const NetworkParams& p, const RadialGrid& grid, const FactorizationWeights& w,
                  const SoOptions& o = {});

// Azimuthal average of gamma2(observer, y) / gamma1(observer) per annulus.
std::vector<double> conditional_intensity(const IntensityField& g1, const SecondMoment& g2,
                                          const RadialGrid& grid, double observer_r);

const char* so_status_name(SoStatus s);

}  // namespace sbd
