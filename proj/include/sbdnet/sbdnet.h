#ifndef SBDNET_H
#define SBDNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(SBD_BUILDING_LIBRARY)
#define SBD_API __attribute__((visibility("default")))
#else
#define SBD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status. On failure the thread-local message from
   sbd_last_error() describes it; out-parameters are left untouched unless
   noted. Array getters take (buf, cap, len): *len always receives the full
   length, buf may be NULL to query it, and a short non-NULL buffer fails. */

typedef enum sbd_status {
    SBD_OK = 0,
    SBD_ERR_INVALID_ARGUMENT = 1,
    SBD_ERR_NO_CONVERGENCE = 2,
    SBD_ERR_OVERFLOW = 3,
    SBD_ERR_GRID_EXHAUSTED = 4,
    SBD_ERR_REFUSED = 5,
    SBD_ERR_DIVERGENCE = 6,
    SBD_ERR_INTERNAL = 7
} sbd_status;

SBD_API const char* sbd_version(void);
SBD_API const char* sbd_last_error(void);
SBD_API const char* sbd_status_name(sbd_status s);

/* ---- model ---- */

typedef enum sbd_rate_mode { SBD_RATE_LOW_SINR = 0, SBD_RATE_GENERAL = 1 } sbd_rate_mode;

/* lambda users/(m^2 s), mu 1/bits, bandwidth Hz, radius m */
typedef struct sbd_params {
    double lambda;
    double mu;
    double bandwidth;
    double sigma2;
    double inversion;
    double eta;
    double radius;
    int rate_mode;
} sbd_params;

SBD_API void sbd_params_default(sbd_params* p);
SBD_API sbd_status sbd_params_validate(const sbd_params* p);
SBD_API double sbd_dbm_to_linear(double dbm);
SBD_API sbd_status sbd_critical_rate(const sbd_params* p, double* out);
SBD_API sbd_status sbd_service_scale(const sbd_params* p, double* out);
SBD_API sbd_status sbd_effective_gain(const sbd_params* p, double r, double* out);

typedef enum sbd_regime_kind {
    SBD_REGIME_STABLE = 0,
    SBD_REGIME_BOUNDARY = 1,
    SBD_REGIME_METASTABLE = 2,
    SBD_REGIME_UNSTABLE = 3
} sbd_regime_kind;

typedef struct sbd_regime {
    int kind;
    double lambda_c;
    int has_lambda_upper;
    double lambda_upper;
} sbd_regime;

SBD_API sbd_status sbd_classify_regime(const sbd_params* p, sbd_regime* out);
SBD_API const char* sbd_regime_name(int kind);

/* ---- first order ---- */

typedef struct sbd_fo_options {
    double nbar_min;
    double nbar_max;
    int grid_points;
    double bracket_tol;
} sbd_fo_options;

typedef struct sbd_fo_solution {
    double z_star;
    double nbar;
    double lambda;
    double residual;
    int branch; /* 0 lower, 1 upper */
    int degenerate;
} sbd_fo_solution;

typedef struct sbd_fo_window {
    double lambda_c;
    int has_peak;
    double lambda_upper;
    double nbar_peak;
} sbd_fo_window;

typedef struct sbd_solution_count {
    int count;
    double c_value;
    double c1_lower;
    double c1_upper;
    int has_c1;
    double c1;
    double c1_nbar;
    int degenerate;
} sbd_solution_count;

typedef struct sbd_fo_model sbd_fo_model;

SBD_API void sbd_fo_options_default(sbd_fo_options* o);
SBD_API sbd_status sbd_fo_model_create(const sbd_params* p, sbd_fo_model** out);
SBD_API void sbd_fo_model_destroy(sbd_fo_model* m);
SBD_API sbd_status sbd_fo_a_infinity(const sbd_fo_model* m, double* out);
SBD_API sbd_status sbd_fo_lambda_of_nbar(const sbd_fo_model* m, double nbar, double* out);
/* at most two solutions, lower branch first; opts may be NULL */
SBD_API sbd_status sbd_fo_solve(const sbd_fo_model* m, double lambda, const sbd_fo_options* opts,
                                sbd_fo_solution* buf, size_t cap, size_t* len);
SBD_API sbd_status sbd_fo_metastable_window(const sbd_fo_model* m, const sbd_fo_options* opts, sbd_fo_window* out);
SBD_API sbd_status sbd_intensity_fo(const sbd_params* p, const sbd_fo_solution* s, double r, double* out);

SBD_API sbd_status sbd_f_meanfield(double nbar, double sigma2, double* out);
SBD_API sbd_status sbd_f_derivative(double nbar, double sigma2, double* out);
SBD_API sbd_status sbd_count_solutions_full_inversion(double c, double sigma2, sbd_solution_count* out);

/* ---- second order ---- */

typedef struct sbd_so_weights {
    double a, b, c, d;
} sbd_so_weights;

typedef struct sbd_so_options {
    double outer_tol;
    int max_outer;
    double inner_tol;
    int max_inner;
    double damping;
    int allow_unstable;
    int divergence_window;
} sbd_so_options;

typedef enum sbd_so_status {
    SBD_SO_CONVERGED = 0,
    SBD_SO_MAX_ITERATIONS = 1,
    SBD_SO_DIVERGED = 2,
    SBD_SO_NUMERICAL_FAILURE = 3
} sbd_so_status;

typedef struct sbd_so_summary {
    int status;
    int outer_iterations;
    double residual_gamma1;
    double residual_gamma2;
    double nbar;
    double nbar_fo;
    int n_r;
    int n_theta;
} sbd_so_summary;

typedef enum sbd_so_history {
    SBD_SO_HISTORY_CHANGE = 0,
    SBD_SO_HISTORY_RESIDUAL_GAMMA1 = 1,
    SBD_SO_HISTORY_RESIDUAL_GAMMA2 = 2
} sbd_so_history;

typedef struct sbd_so_result sbd_so_result;

SBD_API void sbd_so_weights_default(sbd_so_weights* w);
SBD_API void sbd_so_options_default(sbd_so_options* o);
/* A result handle is produced whenever the iteration ran. If it ended without
   converging the call returns SBD_ERR_NO_CONVERGENCE (or SBD_ERR_DIVERGENCE)
   and *out still holds the diagnostics. w and o may be NULL. */
SBD_API sbd_status sbd_so_solve(const sbd_params* p, int n_r, int n_theta, const sbd_so_weights* w,
                                const sbd_so_options* o, sbd_so_result** out);
SBD_API void sbd_so_result_destroy(sbd_so_result* r);
SBD_API sbd_status sbd_so_result_summary(const sbd_so_result* r, sbd_so_summary* out);
SBD_API const char* sbd_so_result_message(const sbd_so_result* r);
SBD_API const char* sbd_so_status_name(int status);
SBD_API sbd_status sbd_so_result_centers(const sbd_so_result* r, double* buf, size_t cap, size_t* len);
SBD_API sbd_status sbd_so_result_gamma1(const sbd_so_result* r, double* buf, size_t cap, size_t* len);
SBD_API sbd_status sbd_so_result_gamma2(const sbd_so_result* r, int i, int j, int k, double* out);
SBD_API sbd_status sbd_so_result_history(const sbd_so_result* r, int which, double* buf, size_t cap, size_t* len);
/* azimuthally averaged gamma2(observer, .)/gamma1(observer) per annulus */
SBD_API sbd_status sbd_so_result_conditional(const sbd_so_result* r, double observer_r, double* buf, size_t cap,
                                             size_t* len);

/* ---- simulation ---- */

typedef enum sbd_sim_mode { SBD_SIM_EXACT_EVENT = 0, SBD_SIM_DISCRETE_STEP = 1 } sbd_sim_mode;

typedef struct sbd_sim_options {
    int mode;
    double step; /* seconds, 0 picks the default step rule */
    uint64_t horizon; /* events or steps */
    int n_bands;
    uint64_t seed;
    double warmup_fraction;
    double divergence_threshold; /* users per band, 0 = 50x first-order mean (min 100) or 1000 */
    int stop_on_divergence;
    uint64_t snapshot_every;
    int n_annuli;
    double observer_zone;
    long hit_target;
} sbd_sim_options;

typedef struct sbd_sim_summary {
    uint64_t seed;
    uint64_t events;
    double t_end;
    double t_warm;
    double nbar;
    long final_n;
    long max_n;
    int n_bands;
    int diverged;
    int has_hit_time;
    double hit_time;
    uint64_t departures;
    double measured_time;
    double origin_exposure;
    double edge_exposure;
    double divergence_threshold; /* resolved value */
} sbd_sim_summary;

typedef enum sbd_sim_profile {
    SBD_PROFILE_EDGES = 0, /* n_annuli + 1 radii */
    SBD_PROFILE_INTENSITY = 1,
    SBD_PROFILE_ORIGIN = 2,
    SBD_PROFILE_EDGE_OBSERVER = 3
} sbd_sim_profile;

typedef struct sbd_conservation {
    double aggregate_error;
    double aggregate_rate;
    int low_confidence;
    int defined;
} sbd_conservation;

typedef struct sbd_sim_result sbd_sim_result;

SBD_API void sbd_sim_options_default(sbd_sim_options* o);
SBD_API sbd_status sbd_step_rule_epsilon(const sbd_params* p, double* out);
SBD_API sbd_status sbd_simulate(const sbd_params* p, const sbd_sim_options* o, sbd_sim_result** out);
/* Replica i uses seed o->seed + i. out and statuses hold `replicas` entries;
   a failed replica leaves NULL and its status. Returns SBD_OK if at least one
   replica succeeded and writes the count to *n_ok. */
SBD_API sbd_status sbd_simulate_replicas(const sbd_params* p, const sbd_sim_options* o, int replicas, int threads,
                                         sbd_sim_result** out, sbd_status* statuses, int* n_ok);
SBD_API void sbd_sim_result_destroy(sbd_sim_result* r);
SBD_API sbd_status sbd_sim_result_summary(const sbd_sim_result* r, sbd_sim_summary* out);
SBD_API sbd_status sbd_sim_result_trace(const sbd_sim_result* r, double* t, long* n, size_t cap, size_t* len);
SBD_API sbd_status sbd_sim_result_profile(const sbd_sim_result* r, int which, double* buf, size_t cap,
                                          size_t* len);
/* per-annulus relative errors go to buf (may be NULL) */
SBD_API sbd_status sbd_sim_conservation(const sbd_sim_result* r, const sbd_params* p, sbd_conservation* out,
                                        double* buf, size_t cap, size_t* len);

/* times[i] and censored[i] for `replicas` runs starting empty */
SBD_API sbd_status sbd_hitting_times(const sbd_params* p, long n_target, int replicas, uint64_t seed,
                                     uint64_t max_events, int threads, double* times, int* censored);

/* ---- passage times (chain units, arrival rate 1 + epsilon) ---- */

typedef enum sbd_passage_method { SBD_PASSAGE_RECURSION = 0, SBD_PASSAGE_CLOSED = 1 } sbd_passage_method;

typedef struct sbd_linear_fit {
    double slope, intercept, r2;
} sbd_linear_fit;

SBD_API sbd_status sbd_departure_rate(long n, double sigma2, double* out);
/* *has = 0 when no finite bound exists */
SBD_API sbd_status sbd_drift_bound(double epsilon, double sigma2, int* has, long* out);
SBD_API sbd_status sbd_tau_step(long n, double arrival_rate, double sigma2, double* out);
SBD_API sbd_status sbd_tau_step_closed(long n, double epsilon, double sigma2, double* out);
SBD_API sbd_status sbd_tau_step_unit_noise(long n, double epsilon, double* out);
SBD_API sbd_status sbd_tau_cum(long n, double epsilon, double sigma2, int method, double* out);
SBD_API sbd_status sbd_tau_cum_unit_noise(long n, double epsilon, double* out);
/* step needs n_max entries, cum n_max + 1 */
SBD_API sbd_status sbd_passage_table(long n_max, double epsilon, double sigma2, double* step, double* cum);
SBD_API sbd_status sbd_chain_seconds(const sbd_params* p, double* out);
SBD_API sbd_status sbd_tau_sigma_sweep(long n, double epsilon, const double* sigma2, size_t count, double* tau,
                                       sbd_linear_fit* fit);

/* ---- small statistics helpers ---- */

typedef struct sbd_mean_ci {
    double mean, std_error, half_width;
    size_t n;
} sbd_mean_ci;

SBD_API sbd_status sbd_mean_ci_of(const double* xs, size_t count, sbd_mean_ci* out);
SBD_API sbd_status sbd_linear_fit_of(const double* x, const double* y, size_t count, sbd_linear_fit* out);

#ifdef __cplusplus
}
#endif

#endif
