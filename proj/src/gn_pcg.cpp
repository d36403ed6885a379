#include "epicorr/gn_pcg.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "epicorr/parallel.hpp"

namespace epicorr {

const char* to_string(PrecondKind k) {
    switch (k) {
        case PrecondKind::none: return "none";
        case PrecondKind::jacobi: return "jacobi";
        case PrecondKind::block_jacobi: return "block";
        case PrecondKind::sgs: return "sgs";
    }
    return "unknown";
}

PrecondKind precond_from_string(const std::string& s) {
    if (s == "none") return PrecondKind::none;
    if (s == "jacobi") return PrecondKind::jacobi;
    if (s == "block" || s == "block_jacobi") return PrecondKind::block_jacobi;
    if (s == "sgs") return PrecondKind::sgs;
    throw std::invalid_argument("unknown preconditioner: " + s);
}

void GNConfig::validate() const {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("GNConfig: eta must be in (0,1)");
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
        throw std::invalid_argument("GNConfig: need 0 < c1 < c2 < 1");
    if (max_outer < 1 || max_pcg < 1) throw std::invalid_argument("GNConfig: iteration caps");
}

LinOp make_preconditioner(PrecondKind kind, const GnHessian& h, int threads) {
    switch (kind) {
        case PrecondKind::none:
            return [](const std::vector<double>& r, std::vector<double>& z) { z = r; };
        case PrecondKind::jacobi: {
            auto diag = h.full_diagonal();
            return [diag](const std::vector<double>& r, std::vector<double>& z) {
                z.resize(r.size());
                for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / diag[i];
            };
        }
        case PrecondKind::block_jacobi: {
            auto factor = TridiagFactor::factorize(h.preconditioner_blocks());
            return [factor, threads](const std::vector<double>& r, std::vector<double>& z) {
                z = r;
                factor.solve_in_place(z, threads);
            };
        }
        case PrecondKind::sgs: {
            // (L + D) D^{-1} (U + D) with D the diagonal of H; sweeps run in the
            // natural face ordering and are sequential.
            const GridSpec g = h.grid();
            auto diag = h.full_diagonal();
            auto col = h.column_part(); // copies the tridiagonal stencil
            const double w2 = h.cross_w2(), w3 = h.cross_w3();
            return [g, diag, col, w2, w3](const std::vector<double>& r, std::vector<double>& z) {
                const int n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
                const std::int64_t layer = std::int64_t(n1) * m2;
                const std::int64_t n = g.faces();
                z.assign(n, 0.0);
                for (std::int64_t f = 0; f < n; ++f) {
                    const std::int64_t c = f / n1;
                    const int i = int(f % n1), j = int(c % m2), k = int(c / m2);
                    double acc = r[f];
                    if (i > 0) acc -= col.off[f - 1] * z[f - 1];
                    if (j > 0) acc += w2 * z[f - n1];
                    if (k > 0) acc += w3 * z[f - layer];
                    z[f] = acc / diag[f];
                }
                for (std::int64_t f = 0; f < n; ++f) z[f] *= diag[f];
                for (std::int64_t f = n - 1; f >= 0; --f) {
                    const std::int64_t c = f / n1;
                    const int i = int(f % n1), j = int(c % m2), k = int(c / m2);
                    double acc = z[f];
                    if (i < n1 - 1) acc -= col.off[f] * z[f + 1];
                    if (j + 1 < m2) acc += w2 * z[f + n1];
                    if (k + 1 < m3) acc += w3 * z[f + layer];
                    z[f] = acc / diag[f];
                }
            };
        }
    }
    throw std::logic_error("make_preconditioner: bad kind");
}

PcgResult pcg(const LinOp& apply_h, const LinOp& apply_m, const std::vector<double>& g,
              double eta, int max_iters) {
    const std::size_t n = g.size();
    PcgResult out;
    out.d.assign(n, 0.0);
    const double gnorm = norm2(g);
    if (gnorm == 0.0) {
        out.reached_tol = true;
        return out;
    }
    std::vector<double> r(n); // residual of H d = -g
    for (std::size_t i = 0; i < n; ++i) r[i] = -g[i];
    std::vector<double> z(n), p(n), q(n);
    apply_m(r, z);
    p = z;
    double rz = dot(r, z);
    const double prec0 = std::sqrt(std::max(rz, 0.0));
    for (int it = 0; it < max_iters; ++it) {
        apply_h(p, q);
        const double pq = dot(p, q);
        if (!(pq > 0.0))
            throw std::runtime_error("pcg: nonpositive curvature encountered");
        const double a = rz / pq;
        axpy(a, p, out.d);
        axpy(-a, q, r);
        out.iters = it + 1;
        out.relres = norm2(r) / gnorm;
        apply_m(r, z);
        const double rz_new = dot(r, z);
        out.relres_prec = prec0 > 0.0 ? std::sqrt(std::max(rz_new, 0.0)) / prec0 : 0.0;
        if (out.relres <= eta) {
            out.reached_tol = true;
            return out;
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return out;
}

namespace {

struct ProbePoint {
    double a = 0.0, f = 0.0, df = 0.0;
};

} // namespace

LineSearchResult wolfe_linesearch(const std::function<double(double, double*)>& phi, double phi0,
                                  double dphi0, double c1, double c2, int max_evals) {
    LineSearchResult res;
    if (!(dphi0 < 0.0) || !std::isfinite(phi0)) return res;

    auto sufficient = [&](double a, double f) { return f <= phi0 + c1 * a * dphi0; };

    // zoom on a bracket [lo, hi] where lo satisfies sufficient decrease
    auto zoom = [&](ProbePoint lo, ProbePoint hi) -> LineSearchResult {
        while (res.evals < max_evals) {
            const double a = 0.5 * (lo.a + hi.a);
            double df = 0.0;
            const double f = phi(a, &df);
            ++res.evals;
            if (!sufficient(a, f) || f >= lo.f) {
                hi = {a, f, df};
            } else {
                if (std::abs(df) <= -c2 * dphi0) {
                    res.lambda = a;
                    res.ok = true;
                    return res;
                }
                if (df * (hi.a - lo.a) >= 0.0) hi = lo;
                lo = {a, f, df};
            }
            if (std::abs(hi.a - lo.a) < 1e-16 * std::max(1.0, std::abs(lo.a))) break;
        }
        // bracket collapsed; accept lo if it at least decreases sufficiently
        if (lo.a > 0.0 && sufficient(lo.a, lo.f)) {
            res.lambda = lo.a;
            res.ok = true;
        }
        return res;
    };

    ProbePoint prev{0.0, phi0, dphi0};
    double a = 1.0;
    bool first = true;
    while (res.evals < max_evals) {
        double df = 0.0;
        const double f = phi(a, &df);
        ++res.evals;
        if (!sufficient(a, f) || (!first && f >= prev.f)) return zoom(prev, {a, f, df});
        if (std::abs(df) <= -c2 * dphi0) {
            res.lambda = a;
            res.ok = true;
            return res;
        }
        if (df >= 0.0) return zoom({a, f, df}, prev);
        prev = {a, f, df};
        a *= 2.0;
        first = false;
    }
    return res;
}

GnSolveResult gauss_newton_solve(const VolumePair& pair, const StaggeredField& b0,
                                 const ObjectiveParams& params, const GNConfig& config,
                                 int level_tag) {
    config.validate();
    params.validate();
    const GridSpec& g = pair.grid();
    if (!(b0.grid == g)) throw std::invalid_argument("gauss_newton_solve: grid mismatch");

    GnSolveResult out;
    out.b = b0;
    SolveReport& rep = out.report;

    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    ObjectiveEval cur = objective_gn(pair, out.b, params, config.threads);
    if (!cur.feasible)
        throw std::invalid_argument("gauss_newton_solve: starting guess is infeasible");
    const double j_ref =
        1.0 + std::abs(objective_gn(pair, StaggeredField(g), params, config.threads, false).value);

    double grad_norm = norm2(cur.grad.v);
    rep.gn.push_back({level_tag, 0, cur.value, grad_norm, 0.0, 0, 0.0, 0.0, elapsed()});

    if (grad_norm <= 1e-15 * j_ref) {
        rep.stop = StopReason::converged;
        rep.message = "gradient numerically zero at start";
        return out;
    }

    for (int k = 1; k <= config.max_outer; ++k) {
        GnHessian hess(pair, out.b, params, config.threads);
        LinOp precond = make_preconditioner(config.precond, hess, config.threads);
        LinOp apply_h = [&hess](const std::vector<double>& x, std::vector<double>& y) {
            y.resize(x.size());
            hess.apply(x, y);
        };
        PcgResult dir = pcg(apply_h, precond, cur.grad.v, config.eta, config.max_pcg);

        const double gd = dot(cur.grad.v, dir.d);
        if (!(gd < 0.0)) {
            rep.stop = StopReason::error;
            rep.message = "search direction is not a descent direction";
            return out;
        }

        StaggeredField trial(g);
        ObjectiveEval trial_eval;
        auto phi = [&](double t, double* dphi) -> double {
            for (std::int64_t i = 0; i < trial.size(); ++i)
                trial.v[i] = out.b.v[i] + t * dir.d[i];
            ObjectiveEval ev = objective_gn(pair, trial, params, config.threads);
            if (!ev.feasible) return std::numeric_limits<double>::infinity();
            if (dphi) *dphi = dot(ev.grad.v, dir.d);
            trial_eval = std::move(ev);
            return trial_eval.value;
        };
        LineSearchResult ls =
            wolfe_linesearch(phi, cur.value, gd, config.wolfe_c1, config.wolfe_c2, config.max_ls);
        if (!ls.ok) {
            rep.stop = StopReason::line_search_failure;
            rep.message = "no admissible Wolfe step within the evaluation budget";
            return out;
        }

        StaggeredField b_new(g);
        for (std::int64_t i = 0; i < b_new.size(); ++i)
            b_new.v[i] = out.b.v[i] + ls.lambda * dir.d[i];
        // phi() evaluated the accepted point last unless zoom exited on a
        // cached earlier point; re-evaluate if the iterate differs.
        if (trial.v != b_new.v) trial_eval = objective_gn(pair, b_new, params, config.threads);

        const double step_norm = ls.lambda * norm2(dir.d);
        const double dj = std::abs(trial_eval.value - cur.value);
        const double bnorm = norm2(out.b.v);
        const double grad_new = norm2(trial_eval.grad.v);

        out.b = std::move(b_new);
        cur = std::move(trial_eval);
        grad_norm = grad_new;
        rep.gn.push_back({level_tag, k, cur.value, grad_norm, ls.lambda, dir.iters, dir.relres,
                          dir.relres_prec, elapsed()});

        const bool stop_obj = dj <= config.eps_obj * j_ref;
        const bool stop_iter = step_norm <= config.eps_iter * (1.0 + bnorm);
        const bool stop_grad = grad_norm <= config.eps_grad * j_ref;
        if (stop_obj && stop_iter && stop_grad) {
            rep.stop = StopReason::converged;
            return out;
        }
    }
    rep.stop = StopReason::max_iterations;
    return out;
}

} // namespace epicorr
