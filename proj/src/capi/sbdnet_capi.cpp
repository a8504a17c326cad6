#include "sbdnet/sbdnet.h"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <thread>
#include <vector>

#include "sbdnet/error.hpp"
#include "sbdnet/fo_meanfield.hpp"
#include "sbdnet/passage.hpp"
#include "sbdnet/simulator.hpp"
#include "sbdnet/so_meanfield.hpp"
#include "sbdnet/stats.hpp"

#ifndef SBD_VERSION_STRING
#define SBD_VERSION_STRING "0.0.0"
#endif

struct sbd_fo_model {
    sbd::FoModel model;
};

struct sbd_so_result {
    sbd::NetworkParams params;
    sbd::RadialGrid grid;
    sbd::SoResult result;
};

struct sbd_sim_result {
    sbd::TraceSummary summary;
};

namespace {

thread_local std::string last_error;

sbd_status set_error(sbd_status s, const char* msg) {
    last_error = msg;
    return s;
}

// Runs f, translating exceptions into status codes.
template <class F>
sbd_status guarded(F&& f) {
    try {
        f();
        last_error.clear();
        return SBD_OK;
    } catch (const sbd::Error& e) {
        return set_error(static_cast<sbd_status>(static_cast<int>(e.code())), e.what());
    } catch (const std::bad_alloc&) {
        return set_error(SBD_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return set_error(SBD_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(SBD_ERR_INTERNAL, "unknown failure");
    }
}

void need(const void* ptr, const char* what) {
    if (!ptr) sbd::fail(sbd::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

sbd::NetworkParams to_params(const sbd_params* p) {
    need(p, "params");
    sbd::NetworkParams q;
    q.lambda = p->lambda;
    q.mu = p->mu;
    q.bandwidth = p->bandwidth;
    q.sigma2 = p->sigma2;
    q.inversion = p->inversion;
    q.eta = p->eta;
    q.radius = p->radius;
    if (p->rate_mode != SBD_RATE_LOW_SINR && p->rate_mode != SBD_RATE_GENERAL)
        sbd::fail(sbd::ErrorCode::InvalidArgument, "rate_mode must be 0 (low-sinr) or 1 (general)");
    q.rate_mode = p->rate_mode == SBD_RATE_GENERAL ? sbd::RateMode::General : sbd::RateMode::LowSinr;
    return q;
}

sbd::FoOptions to_fo_options(const sbd_fo_options* o) {
    sbd::FoOptions q;
    if (!o) return q;
    q.nbar_min = o->nbar_min;
    q.nbar_max = o->nbar_max;
    q.grid_points = o->grid_points;
    q.bracket_tol = o->bracket_tol;
    return q;
}

sbd::SimOptions to_sim_options(const sbd_sim_options* o) {
    need(o, "sim options");
    sbd::SimOptions q;
    if (o->mode != SBD_SIM_EXACT_EVENT && o->mode != SBD_SIM_DISCRETE_STEP)
        sbd::fail(sbd::ErrorCode::InvalidArgument, "sim mode must be 0 (exact) or 1 (discrete)");
    q.mode = o->mode == SBD_SIM_DISCRETE_STEP ? sbd::SimMode::DiscreteStep : sbd::SimMode::ExactEvent;
    q.step = o->step;
    q.horizon = o->horizon;
    q.n_bands = o->n_bands;
    q.seed = o->seed;
    q.warmup_fraction = o->warmup_fraction;
    q.divergence_threshold = o->divergence_threshold;
    q.stop_on_divergence = o->stop_on_divergence != 0;
    q.snapshot_every = o->snapshot_every;
    q.n_annuli = o->n_annuli;
    q.observer_zone = o->observer_zone;
    q.hit_target = o->hit_target;
    return q;
}

template <class T>
void copy_out(const std::vector<T>& v, T* buf, std::size_t cap, std::size_t* len) {
    need(len, "len");
    *len = v.size();
    if (!buf) return;
    if (cap < v.size()) sbd::fail(sbd::ErrorCode::InvalidArgument, "output buffer too small");
    std::copy(v.begin(), v.end(), buf);
}

}  // namespace

extern "C" {

const char* sbd_version(void) { return SBD_VERSION_STRING; }

const char* sbd_last_error(void) { return last_error.c_str(); }

const char* sbd_status_name(sbd_status s) {
    switch (s) {
        case SBD_OK: return "ok";
        case SBD_ERR_INVALID_ARGUMENT: return "invalid argument";
        case SBD_ERR_NO_CONVERGENCE: return "no convergence";
        case SBD_ERR_OVERFLOW: return "overflow";
        case SBD_ERR_GRID_EXHAUSTED: return "grid exhausted";
        case SBD_ERR_REFUSED: return "refused";
        case SBD_ERR_DIVERGENCE: return "divergence";
        case SBD_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

void sbd_params_default(sbd_params* p) {
    if (!p) return;
    const sbd::NetworkParams d;
    p->lambda = d.lambda;
    p->mu = d.mu;
    p->bandwidth = d.bandwidth;
    p->sigma2 = d.sigma2;
    p->inversion = d.inversion;
    p->eta = d.eta;
    p->radius = d.radius;
    p->rate_mode = SBD_RATE_LOW_SINR;
}

sbd_status sbd_params_validate(const sbd_params* p) {
    return guarded([&] { to_params(p).validate(); });
}

double sbd_dbm_to_linear(double dbm) { return sbd::dbm_to_linear(dbm); }

sbd_status sbd_critical_rate(const sbd_params* p, double* out) {
    return guarded([&] {
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        *out = sbd::critical_rate(q);
    });
}

sbd_status sbd_service_scale(const sbd_params* p, double* out) {
    return guarded([&] {
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        *out = q.service_scale();
    });
}

sbd_status sbd_effective_gain(const sbd_params* p, double r, double* out) {
    return guarded([&] {
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        *out = sbd::effective_gain(r, q);
    });
}

sbd_status sbd_classify_regime(const sbd_params* p, sbd_regime* out) {
    return guarded([&] {
        need(out, "out");
        const auto r = sbd::classify_regime(to_params(p));
        out->kind = static_cast<int>(r.kind);
        out->lambda_c = r.lambda_c;
        out->has_lambda_upper = r.lambda_upper.has_value();
        out->lambda_upper = r.lambda_upper.value_or(0.0);
    });
}

const char* sbd_regime_name(int kind) {
    if (kind < 0 || kind > 3) return "unknown";
    return sbd::regime_name(static_cast<sbd::RegimeKind>(kind));
}

void sbd_fo_options_default(sbd_fo_options* o) {
    if (!o) return;
    const sbd::FoOptions d;
    o->nbar_min = d.nbar_min;
    o->nbar_max = d.nbar_max;
    o->grid_points = d.grid_points;
    o->bracket_tol = d.bracket_tol;
}

sbd_status sbd_fo_model_create(const sbd_params* p, sbd_fo_model** out) {
    return guarded([&] {
        need(out, "out");
        *out = new sbd_fo_model{sbd::FoModel(to_params(p))};
    });
}

void sbd_fo_model_destroy(sbd_fo_model* m) { delete m; }

sbd_status sbd_fo_a_infinity(const sbd_fo_model* m, double* out) {
    return guarded([&] {
        need(m, "model");
        need(out, "out");
        *out = m->model.a_infinity();
    });
}

sbd_status sbd_fo_lambda_of_nbar(const sbd_fo_model* m, double nbar, double* out) {
    return guarded([&] {
        need(m, "model");
        need(out, "out");
        *out = m->model.lambda_of_nbar(nbar);
    });
}

sbd_status sbd_fo_solve(const sbd_fo_model* m, double lambda, const sbd_fo_options* opts, sbd_fo_solution* buf,
                        size_t cap, size_t* len) {
    return guarded([&] {
        need(m, "model");
        const auto sols = m->model.solve(lambda, to_fo_options(opts));
        std::vector<sbd_fo_solution> v;
        for (const auto& s : sols)
            v.push_back({s.z_star, s.nbar, s.lambda, s.residual, s.branch == sbd::Branch::Upper ? 1 : 0,
                         s.degenerate ? 1 : 0});
        copy_out(v, buf, cap, len);
    });
}

sbd_status sbd_fo_metastable_window(const sbd_fo_model* m, const sbd_fo_options* opts, sbd_fo_window* out) {
    return guarded([&] {
        need(m, "model");
        need(out, "out");
        const auto w = m->model.window(to_fo_options(opts));
        out->lambda_c = w.lambda_c;
        out->has_peak = w.lambda_upper.has_value();
        out->lambda_upper = w.lambda_upper.value_or(0.0);
        out->nbar_peak = w.nbar_peak.value_or(0.0);
    });
}

sbd_status sbd_intensity_fo(const sbd_params* p, const sbd_fo_solution* s, double r, double* out) {
    return guarded([&] {
        need(s, "solution");
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        sbd::FoSolution fs;
        fs.z_star = s->z_star;
        fs.nbar = s->nbar;
        *out = sbd::intensity_fo(r, fs, q);
    });
}

sbd_status sbd_f_meanfield(double nbar, double sigma2, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::f_meanfield(nbar, sigma2);
    });
}

sbd_status sbd_f_derivative(double nbar, double sigma2, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::f_derivative(nbar, sigma2);
    });
}

sbd_status sbd_count_solutions_full_inversion(double c, double sigma2, sbd_solution_count* out) {
    return guarded([&] {
        need(out, "out");
        const auto r = sbd::count_solutions_full_inversion(c, sigma2);
        out->count = r.count;
        out->c_value = r.c_value;
        out->c1_lower = r.c1_lower;
        out->c1_upper = r.c1_upper;
        out->has_c1 = r.c1.has_value();
        out->c1 = r.c1.value_or(0.0);
        out->c1_nbar = r.c1_nbar.value_or(0.0);
        out->degenerate = r.degenerate;
    });
}

void sbd_so_weights_default(sbd_so_weights* w) {
    if (!w) return;
    const sbd::FactorizationWeights d;
    *w = {d.a, d.b, d.c, d.d};
}

void sbd_so_options_default(sbd_so_options* o) {
    if (!o) return;
    const sbd::SoOptions d;
    o->outer_tol = d.outer_tol;
    o->max_outer = d.max_outer;
    o->inner_tol = d.inner_tol;
    o->max_inner = d.max_inner;
    o->damping = d.damping;
    o->allow_unstable = d.allow_unstable;
    o->divergence_window = d.divergence_window;
}

sbd_status sbd_so_solve(const sbd_params* p, int n_r, int n_theta, const sbd_so_weights* w, const sbd_so_options* o,
                        sbd_so_result** out) {
    sbd_so_result* res = nullptr;
    const sbd_status st = guarded([&] {
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        sbd::FactorizationWeights fw;
        if (w) fw = {w->a, w->b, w->c, w->d};
        sbd::SoOptions so;
        if (o) {
            so.outer_tol = o->outer_tol;
            so.max_outer = o->max_outer;
            so.inner_tol = o->inner_tol;
            so.max_inner = o->max_inner;
            so.damping = o->damping;
            so.allow_unstable = o->allow_unstable != 0;
            so.divergence_window = o->divergence_window;
        }
        sbd::RadialGrid grid(q.radius, n_r, n_theta);
        sbd::SoModel model(q, grid);
        res = new sbd_so_result{q, grid, model.solve(fw, so)};
    });
    if (st != SBD_OK) return st;
    *out = res;
    const auto& d = res->result.diag;
    switch (d.status) {
        case sbd::SoStatus::Converged: return SBD_OK;
        case sbd::SoStatus::Diverged: return set_error(SBD_ERR_DIVERGENCE, ("solve_so: " + d.message).c_str());
        case sbd::SoStatus::MaxIterations:
        case sbd::SoStatus::NumericalFailure:
            return set_error(SBD_ERR_NO_CONVERGENCE, ("solve_so: " + d.message).c_str());
    }
    return SBD_OK;
}

void sbd_so_result_destroy(sbd_so_result* r) { delete r; }

sbd_status sbd_so_result_summary(const sbd_so_result* r, sbd_so_summary* out) {
    return guarded([&] {
        need(r, "result");
        need(out, "out");
        const auto& d = r->result.diag;
        out->status = static_cast<int>(d.status);
        out->outer_iterations = d.outer_iterations;
        out->residual_gamma1 = d.residual14;
        out->residual_gamma2 = d.residual15;
        out->nbar = r->result.nbar;
        out->nbar_fo = r->result.nbar_fo;
        out->n_r = r->grid.n_r();
        out->n_theta = r->grid.n_theta();
    });
}

const char* sbd_so_result_message(const sbd_so_result* r) { return r ? r->result.diag.message.c_str() : ""; }

const char* sbd_so_status_name(int status) {
    if (status < 0 || status > 3) return "unknown";
    return sbd::so_status_name(static_cast<sbd::SoStatus>(status));
}

sbd_status sbd_so_result_centers(const sbd_so_result* r, double* buf, size_t cap, size_t* len) {
    return guarded([&] {
        need(r, "result");
        std::vector<double> c(r->grid.n_r());
        for (int i = 0; i < r->grid.n_r(); ++i) c[i] = r->grid.center(i);
        copy_out(c, buf, cap, len);
    });
}

sbd_status sbd_so_result_gamma1(const sbd_so_result* r, double* buf, size_t cap, size_t* len) {
    return guarded([&] {
        need(r, "result");
        copy_out(r->result.gamma1.v, buf, cap, len);
    });
}

sbd_status sbd_so_result_gamma2(const sbd_so_result* r, int i, int j, int k, double* out) {
    return guarded([&] {
        need(r, "result");
        need(out, "out");
        const auto& g = r->result.gamma2;
        sbd::require(i >= 0 && i < g.n_r && j >= 0 && j < g.n_r && k >= 0 && k < g.n_k,
                     "sbd_so_result_gamma2: index out of range");
        *out = g.at(i, j, k);
    });
}

sbd_status sbd_so_result_history(const sbd_so_result* r, int which, double* buf, size_t cap, size_t* len) {
    return guarded([&] {
        need(r, "result");
        const auto& d = r->result.diag;
        switch (which) {
            case SBD_SO_HISTORY_CHANGE: copy_out(d.change_history, buf, cap, len); break;
            case SBD_SO_HISTORY_RESIDUAL_GAMMA1: copy_out(d.residual14_history, buf, cap, len); break;
            case SBD_SO_HISTORY_RESIDUAL_GAMMA2: copy_out(d.residual15_history, buf, cap, len); break;
            default: sbd::fail(sbd::ErrorCode::InvalidArgument, "unknown history selector");
        }
    });
}

sbd_status sbd_so_result_conditional(const sbd_so_result* r, double observer_r, double* buf, size_t cap,
                                     size_t* len) {
    return guarded([&] {
        need(r, "result");
        sbd::require(observer_r >= 0 && observer_r <= r->grid.radius(), "observer radius outside the disk");
        copy_out(sbd::conditional_intensity(r->result.gamma1, r->result.gamma2, r->grid, observer_r), buf, cap, len);
    });
}

void sbd_sim_options_default(sbd_sim_options* o) {
    if (!o) return;
    const sbd::SimOptions d;
    o->mode = SBD_SIM_EXACT_EVENT;
    o->step = d.step;
    o->horizon = d.horizon;
    o->n_bands = d.n_bands;
    o->seed = d.seed;
    o->warmup_fraction = d.warmup_fraction;
    o->divergence_threshold = d.divergence_threshold;
    o->stop_on_divergence = d.stop_on_divergence;
    o->snapshot_every = d.snapshot_every;
    o->n_annuli = d.n_annuli;
    o->observer_zone = d.observer_zone;
    o->hit_target = d.hit_target;
}

sbd_status sbd_step_rule_epsilon(const sbd_params* p, double* out) {
    return guarded([&] {
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        *out = sbd::step_rule_epsilon(q);
    });
}

sbd_status sbd_simulate(const sbd_params* p, const sbd_sim_options* o, sbd_sim_result** out) {
    return guarded([&] {
        need(out, "out");
        *out = new sbd_sim_result{sbd::run(to_params(p), to_sim_options(o))};
    });
}

sbd_status sbd_simulate_replicas(const sbd_params* p, const sbd_sim_options* o, int replicas, int threads,
                                 sbd_sim_result** out, sbd_status* statuses, int* n_ok) {
    sbd::NetworkParams q;
    sbd::SimOptions so;
    const sbd_status st = guarded([&] {
        need(out, "out");
        need(statuses, "statuses");
        need(n_ok, "n_ok");
        sbd::require(replicas >= 1, "need at least one replica");
        q = to_params(p);
        so = to_sim_options(o);
        q.validate();
        so.validate();
    });
    if (st != SBD_OK) return st;

    std::vector<std::string> messages(replicas);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < replicas; i = next++) {
            sbd::SimOptions oi = so;
            oi.seed = so.seed + static_cast<std::uint64_t>(i);
            out[i] = nullptr;
            statuses[i] = guarded([&] { out[i] = new sbd_sim_result{sbd::run(q, oi)}; });
            if (statuses[i] != SBD_OK) messages[i] = last_error;
        }
    };
    const int nt = std::max(1, std::min(threads, replicas));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    *n_ok = static_cast<int>(std::count(statuses, statuses + replicas, SBD_OK));
    if (*n_ok > 0) {
        last_error.clear();
        return SBD_OK;
    }
    return set_error(statuses[0], ("all replicas failed; first: " + messages[0]).c_str());
}

void sbd_sim_result_destroy(sbd_sim_result* r) { delete r; }

sbd_status sbd_sim_result_summary(const sbd_sim_result* r, sbd_sim_summary* out) {
    return guarded([&] {
        need(r, "result");
        need(out, "out");
        const auto& s = r->summary;
        out->seed = s.seed;
        out->events = s.events;
        out->t_end = s.t_end;
        out->t_warm = s.t_warm;
        out->nbar = s.nbar;
        out->final_n = s.final_n;
        out->max_n = s.max_n;
        out->n_bands = s.n_bands;
        out->diverged = s.diverged;
        out->has_hit_time = s.hit_time.has_value();
        out->hit_time = s.hit_time.value_or(0.0);
        out->departures = s.departures;
        out->measured_time = s.measured_time;
        out->origin_exposure = s.origin_exposure;
        out->edge_exposure = s.edge_exposure;
        out->divergence_threshold = s.divergence_threshold;
    });
}

sbd_status sbd_sim_result_trace(const sbd_sim_result* r, double* t, long* n, size_t cap, size_t* len) {
    return guarded([&] {
        need(r, "result");
        need(len, "len");
        const auto& tr = r->summary.trace;
        *len = tr.size();
        if (!t && !n) return;
        if (cap < tr.size()) sbd::fail(sbd::ErrorCode::InvalidArgument, "output buffer too small");
        for (std::size_t i = 0; i < tr.size(); ++i) {
            if (t) t[i] = tr[i].t;
            if (n) n[i] = tr[i].n;
        }
    });
}

sbd_status sbd_sim_result_profile(const sbd_sim_result* r, int which, double* buf, size_t cap, size_t* len) {
    return guarded([&] {
        need(r, "result");
        const auto& s = r->summary;
        switch (which) {
            case SBD_PROFILE_EDGES: copy_out(s.annulus_edges, buf, cap, len); break;
            case SBD_PROFILE_INTENSITY: copy_out(s.intensity, buf, cap, len); break;
            case SBD_PROFILE_ORIGIN: copy_out(s.cond_origin, buf, cap, len); break;
            case SBD_PROFILE_EDGE_OBSERVER: copy_out(s.cond_edge, buf, cap, len); break;
            default: sbd::fail(sbd::ErrorCode::InvalidArgument, "unknown profile selector");
        }
    });
}

sbd_status sbd_sim_conservation(const sbd_sim_result* r, const sbd_params* p, sbd_conservation* out, double* buf,
                                size_t cap, size_t* len) {
    return guarded([&] {
        need(r, "result");
        need(out, "out");
        const auto c = sbd::rate_conservation_check(r->summary, to_params(p));
        out->aggregate_error = c.aggregate_error;
        out->aggregate_rate = c.aggregate_rate;
        out->low_confidence = c.low_confidence;
        out->defined = c.defined;
        if (len) copy_out(c.annulus_error, buf, cap, len);
    });
}

sbd_status sbd_hitting_times(const sbd_params* p, long n_target, int replicas, uint64_t seed, uint64_t max_events,
                             int threads, double* times, int* censored) {
    return guarded([&] {
        need(times, "times");
        need(censored, "censored");
        const auto h = sbd::hitting_times(to_params(p), n_target, replicas, seed, max_events, threads);
        for (std::size_t i = 0; i < h.size(); ++i) {
            times[i] = h[i].time;
            censored[i] = h[i].censored;
        }
    });
}

sbd_status sbd_departure_rate(long n, double sigma2, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::departure_rate(n, sigma2);
    });
}

sbd_status sbd_drift_bound(double epsilon, double sigma2, int* has, long* out) {
    return guarded([&] {
        need(has, "has");
        need(out, "out");
        const auto b = sbd::drift_bound(epsilon, sigma2);
        *has = b.has_value();
        *out = b.value_or(0);
    });
}

sbd_status sbd_tau_step(long n, double arrival_rate, double sigma2, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::tau_step(n, arrival_rate, sigma2);
    });
}

sbd_status sbd_tau_step_closed(long n, double epsilon, double sigma2, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::tau_step_closed(n, epsilon, sigma2);
    });
}

sbd_status sbd_tau_step_unit_noise(long n, double epsilon, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::tau_step_unit_noise(n, epsilon);
    });
}

sbd_status sbd_tau_cum(long n, double epsilon, double sigma2, int method, double* out) {
    return guarded([&] {
        need(out, "out");
        sbd::require(method == SBD_PASSAGE_RECURSION || method == SBD_PASSAGE_CLOSED, "unknown passage method");
        *out = sbd::tau_cum(n, epsilon, sigma2,
                            method == SBD_PASSAGE_CLOSED ? sbd::PassageMethod::Closed : sbd::PassageMethod::Recursion);
    });
}

sbd_status sbd_tau_cum_unit_noise(long n, double epsilon, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = sbd::tau_cum_unit_noise(n, epsilon);
    });
}

sbd_status sbd_passage_table(long n_max, double epsilon, double sigma2, double* step, double* cum) {
    return guarded([&] {
        need(step, "step");
        need(cum, "cum");
        const auto t = sbd::passage_table(n_max, epsilon, sigma2);
        std::copy(t.step.begin(), t.step.end(), step);
        std::copy(t.cum.begin(), t.cum.end(), cum);
    });
}

sbd_status sbd_chain_seconds(const sbd_params* p, double* out) {
    return guarded([&] {
        need(out, "out");
        const auto q = to_params(p);
        q.validate();
        *out = sbd::chain_seconds(q);
    });
}

sbd_status sbd_tau_sigma_sweep(long n, double epsilon, const double* sigma2, size_t count, double* tau,
                               sbd_linear_fit* fit) {
    return guarded([&] {
        need(sigma2, "sigma2");
        const auto s = sbd::tau_sigma_sweep(n, epsilon, std::vector<double>(sigma2, sigma2 + count));
        if (tau) std::copy(s.tau.begin(), s.tau.end(), tau);
        if (fit) *fit = {s.slope, s.intercept, s.r2};
    });
}

sbd_status sbd_mean_ci_of(const double* xs, size_t count, sbd_mean_ci* out) {
    return guarded([&] {
        need(out, "out");
        if (count > 0) need(xs, "xs");
        const auto m = sbd::mean_ci(std::vector<double>(xs, xs + count));
        *out = {m.mean, m.std_error, m.half_width, m.n};
    });
}

sbd_status sbd_linear_fit_of(const double* x, const double* y, size_t count, sbd_linear_fit* out) {
    return guarded([&] {
        need(x, "x");
        need(y, "y");
        need(out, "out");
        const auto f = sbd::linear_fit(std::vector<double>(x, x + count), std::vector<double>(y, y + count));
        *out = {f.slope, f.intercept, f.r2};
    });
}

}  // extern "C"
