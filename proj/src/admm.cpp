#include "epicorr/admm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "epicorr/parallel.hpp"

namespace epicorr {

const char* to_string(RhoSchedule s) {
    switch (s) {
        case RhoSchedule::fixed: return "fixed";
        case RhoSchedule::adaptive: return "adaptive";
        case RhoSchedule::adaptive_bounded: return "bounded";
    }
    return "unknown";
}

RhoSchedule rho_schedule_from_string(const std::string& s) {
    if (s == "fixed") return RhoSchedule::fixed;
    if (s == "adaptive") return RhoSchedule::adaptive;
    if (s == "bounded" || s == "adaptive_bounded") return RhoSchedule::adaptive_bounded;
    throw std::invalid_argument("unknown rho schedule: " + s);
}

void ADMMConfig::validate() const {
    if (!(rho_min > 0.0) || !(rho0 >= rho_min))
        throw std::invalid_argument("ADMMConfig: need rho0 >= rho_min > 0");
    if (!(eps_abs > 0.0) || !(eps_rel > 0.0))
        throw std::invalid_argument("ADMMConfig: tolerances must be positive");
    if (max_iter < 1 || sqp_max_iter < 1)
        throw std::invalid_argument("ADMMConfig: iteration caps must be >= 1");
    if (!(tau_incr > 1.0) || !(tau_decr > 1.0) || !(mu > 1.0))
        throw std::invalid_argument("ADMMConfig: adaptation constants must exceed 1");
}

namespace {

// LDL^T of one SPD tridiagonal block.
struct ColFactor {
    std::vector<double> d, l;

    void factorize(int n, const double* diag, const double* off) {
        d.resize(n);
        l.assign(n, 0.0);
        if (!(diag[0] > 0.0)) throw std::runtime_error("column factor: nonpositive pivot");
        d[0] = diag[0];
        for (int i = 1; i < n; ++i) {
            l[i - 1] = off[i - 1] / d[i - 1];
            d[i] = diag[i] - l[i - 1] * off[i - 1];
            if (!(d[i] > 0.0)) throw std::runtime_error("column factor: nonpositive pivot");
        }
    }
    void solve(int n, double* x) const {
        for (int i = 1; i < n; ++i) x[i] -= l[i - 1] * x[i - 1];
        for (int i = 0; i < n; ++i) x[i] /= d[i];
        for (int i = n - 2; i >= 0; --i) x[i] -= l[i] * x[i + 1];
    }
};

void tridiag_apply(int n, const double* diag, const double* off, const double* x, double* y) {
    for (int i = 0; i < n; ++i) {
        double acc = diag[i] * x[i];
        if (i > 0) acc += off[i - 1] * x[i - 1];
        if (i + 1 < n) acc += off[i] * x[i + 1];
        y[i] = acc;
    }
}

// In-place dense Cholesky solve for the small Schur system.
void dense_spd_solve(int n, std::vector<double>& a, std::vector<double>& rhs) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) {
            double s = a[std::size_t(i) * n + j];
            for (int k = 0; k < j; ++k) s -= a[std::size_t(i) * n + k] * a[std::size_t(j) * n + k];
            a[std::size_t(i) * n + j] = s / a[std::size_t(j) * n + j];
        }
        double s = a[std::size_t(i) * n + i];
        for (int k = 0; k < i; ++k) s -= a[std::size_t(i) * n + k] * a[std::size_t(i) * n + k];
        if (!(s > 0.0)) throw std::runtime_error("qp_active_set: singular Schur complement");
        a[std::size_t(i) * n + i] = std::sqrt(s);
    }
    for (int i = 0; i < n; ++i) {
        double s = rhs[i];
        for (int k = 0; k < i; ++k) s -= a[std::size_t(i) * n + k] * rhs[k];
        rhs[i] = s / a[std::size_t(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = rhs[i];
        for (int k = i + 1; k < n; ++k) s -= a[std::size_t(k) * n + i] * rhs[k];
        rhs[i] = s / a[std::size_t(i) * n + i];
    }
}

// Exact feasibility repair: |x[i+1]-x[i]| <= h in floating point, preserving
// all other differences bitwise by shifting the column tail.
void clamp_column_diffs(double* x, int n, double h) {
    double shift = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        double nx = x[i + 1] + shift;
        const double hi = x[i] + h, lo = x[i] - h;
        double cl = std::min(std::max(nx, lo), hi);
        while ((cl - x[i]) / h > 1.0) cl = std::nextafter(cl, x[i]);
        while ((cl - x[i]) / h < -1.0) cl = std::nextafter(cl, x[i]);
        shift += cl - nx;
        x[i + 1] = cl;
    }
}

} // namespace

QpResult qp_active_set(int n, double h, std::span<const double> gdiag,
                       std::span<const double> goff, std::span<const double> c,
                       std::span<const double> x0, int max_iter) {
    const int ncell = n - 1;
    QpResult res;
    res.x.assign(x0.begin(), x0.end());
    res.lambda.assign(ncell, 0.0);
    res.active_sign.assign(ncell, 0);

    ColFactor G;
    G.factorize(n, gdiag.data(), goff.data());

    auto dval = [&](int i) { return (res.x[i + 1] - res.x[i]) / h; };

    for (int i = 0; i < ncell; ++i)
        if (std::abs(dval(i)) > 1.0 + 1e-9)
            throw std::invalid_argument("qp_active_set: infeasible starting point");

    // warm start: rows active at x0
    std::vector<int> act;
    for (int i = 0; i < ncell; ++i) {
        const double d = dval(i);
        if (d <= -1.0 + 1e-10) {
            res.active_sign[i] = +1;
            act.push_back(i);
        } else if (d >= 1.0 - 1e-10) {
            res.active_sign[i] = -1;
            act.push_back(i);
        }
    }

    std::vector<double> gvec(n), w(n), p(n), q, schur, lam;
    for (int it = 1; it <= max_iter; ++it) {
        res.iters = it;
        // g = -c - G x
        tridiag_apply(n, gdiag.data(), goff.data(), res.x.data(), gvec.data());
        for (int i = 0; i < n; ++i) gvec[i] = -c[i] - gvec[i];
        w = gvec;
        G.solve(n, w.data());

        const int na = int(act.size());
        q.assign(std::size_t(na) * n, 0.0);
        for (int r = 0; r < na; ++r) {
            double* qr = q.data() + std::size_t(r) * n;
            const int i = act[r];
            const double s = res.active_sign[i] / h;
            qr[i] = -s;
            qr[i + 1] = s;
            G.solve(n, qr);
        }
        lam.assign(na, 0.0);
        if (na > 0) {
            schur.assign(std::size_t(na) * na, 0.0);
            for (int r = 0; r < na; ++r) {
                const int ir = act[r];
                const double sr = res.active_sign[ir] / h;
                for (int s = 0; s < na; ++s) {
                    const double* qs = q.data() + std::size_t(s) * n;
                    schur[std::size_t(r) * na + s] = sr * (qs[ir + 1] - qs[ir]);
                }
                // rhs_r = a_r^T w - (d_r - a_r^T x); active rows hold to rounding
                const double arx = res.active_sign[ir] * dval(ir);
                lam[r] = -(sr * (w[ir + 1] - w[ir]) - (-1.0 - arx));
            }
            dense_spd_solve(na, schur, lam);
        }
        // p = w + sum lambda_r q_r
        p = w;
        for (int r = 0; r < na; ++r) {
            const double* qr = q.data() + std::size_t(r) * n;
            for (int i = 0; i < n; ++i) p[i] += lam[r] * qr[i];
        }

        double xs = 1.0;
        for (int i = 0; i < n; ++i) xs = std::max(xs, std::abs(res.x[i]));
        double pn = 0.0;
        for (int i = 0; i < n; ++i) pn = std::max(pn, std::abs(p[i]));

        if (pn <= 1e-11 * xs) {
            // stationary on the working set; check multipliers
            int worst = -1;
            double worst_lam = -1e-9 * (1.0 + norm_inf(lam));
            for (int r = 0; r < na; ++r)
                if (lam[r] < worst_lam) {
                    worst_lam = lam[r];
                    worst = r;
                }
            if (worst < 0) {
                for (int r = 0; r < na; ++r) res.lambda[act[r]] = std::max(0.0, lam[r]);
                return res;
            }
            res.active_sign[act[worst]] = 0;
            act.erase(act.begin() + worst);
            continue;
        }

        // ratio test against inactive rows
        double t = 1.0;
        for (int i = 0; i < ncell; ++i) {
            if (res.active_sign[i] != 0) continue;
            const double d = dval(i);
            const double dp = (p[i + 1] - p[i]) / h;
            if (dp < -1e-14) t = std::min(t, (-1.0 - d) / dp);
            else if (dp > 1e-14) t = std::min(t, (1.0 - d) / dp);
        }
        t = std::max(t, 0.0);
        for (int i = 0; i < n; ++i) res.x[i] += t * p[i];
        if (t < 1.0) {
            // activate all rows blocking at t
            for (int i = 0; i < ncell; ++i) {
                if (res.active_sign[i] != 0) continue;
                const double d = dval(i);
                if (d <= -1.0 + 1e-12) {
                    res.active_sign[i] = +1;
                    act.push_back(i);
                } else if (d >= 1.0 - 1e-12) {
                    res.active_sign[i] = -1;
                    act.push_back(i);
                }
            }
        }
    }
    throw std::runtime_error("qp_active_set: iteration cap reached (cycling guard)");
}

double verify_qp_kkt(int n, double h, std::span<const double> gdiag,
                     std::span<const double> goff, std::span<const double> c, const QpResult& r) {
    const int ncell = n - 1;
    std::vector<double> s(n);
    tridiag_apply(n, gdiag.data(), goff.data(), r.x.data(), s.data());
    double scale = 1.0;
    for (int i = 0; i < n; ++i) scale = std::max({scale, std::abs(s[i]), std::abs(c[i])});
    for (int i = 0; i < n; ++i) s[i] += c[i];
    double lmax = 1.0;
    for (int i = 0; i < ncell; ++i) lmax = std::max(lmax, std::abs(r.lambda[i]));
    double viol = 0.0;
    for (int i = 0; i < ncell; ++i) {
        if (r.active_sign[i] == 0) continue;
        const double a = r.active_sign[i] / h;
        s[i] += a * r.lambda[i];
        s[i + 1] -= a * r.lambda[i];
    }
    for (int i = 0; i < n; ++i) viol = std::max(viol, std::abs(s[i]) / scale);
    for (int i = 0; i < ncell; ++i) {
        const double d = (r.x[i + 1] - r.x[i]) / h;
        viol = std::max(viol, std::abs(d) - 1.0);            // primal feasibility
        viol = std::max(viol, -r.lambda[i] / lmax);          // dual feasibility
        const double slack = r.active_sign[i] != 0 ? r.active_sign[i] * d + 1.0 : 0.0;
        viol = std::max(viol, std::abs(r.lambda[i] * slack) / (lmax * 1.0)); // comp. slackness
    }
    return viol;
}

double f_value(const VolumePair& pair, const StaggeredField& b, double alpha, int threads) {
    const GridSpec& g = pair.grid();
    const CellField r = residual(pair, b, threads);
    const CellField d1 = diff_x1(b);
    const double V = g.cell_volume();
    return 0.5 * V * dot(r.v, r.v) + 0.5 * alpha * V * dot(d1.v, d1.v);
}

double g_value(const StaggeredField& z, double alpha) {
    const GridSpec& g = z.grid;
    const double V = g.cell_volume();
    const std::vector<double> d2 = diff_perp(z, 2);
    double s = dot(d2, d2);
    if (g.dim == 3) {
        const std::vector<double> d3 = diff_perp(z, 3);
        s += dot(d3, d3);
    }
    return 0.5 * alpha * V * s;
}

double augmented_lagrangian(const VolumePair& pair, const StaggeredField& b,
                            const StaggeredField& z, const StaggeredField& u, double rho,
                            double alpha, int threads) {
    const double V = pair.grid().cell_volume();
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < b.v.size(); ++i) {
        const double diff = b.v[i] - z.v[i];
        lin += u.v[i] * diff;
        quad += diff * diff;
    }
    return f_value(pair, b, alpha, threads) + g_value(z, alpha) + rho * V * lin +
           0.5 * rho * V * quad;
}

StaggeredField b_update(const VolumePair& pair, const ADMMState& state,
                        const ObjectiveParams& params, const ADMMConfig& config,
                        BUpdateStats* stats) {
    const GridSpec& g = pair.grid();
    if (!(state.b.grid == g) || !(state.z.grid == g) || !(state.u.grid == g))
        throw std::invalid_argument("b_update: state grids do not match the pair");
    if (!(state.rho > 0.0)) throw std::invalid_argument("b_update: rho must be positive");
    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1];
    const double V = g.cell_volume();
    const double h1 = g.h[0];
    const double alpha_w = params.alpha * V;
    const double rho_w = state.rho * V;
    const double lap_w = alpha_w / (h1 * h1);
    const int qp_cap = 6 * n1 + 10;

    StaggeredField out = state.b;
    std::vector<double> col_kkt(g.columns(), 0.0);
    std::vector<long> col_sqp(g.columns(), 0), col_qp(g.columns(), 0);

    parallel_for(g.columns(), config.threads, [&](std::int64_t c0, std::int64_t c1) {
        std::vector<double> x(n1), tgt(n1), r(m1), jlo(m1), jhi(m1);
        std::vector<double> grad(n1), gd(n1), go(n1), cqp(n1), gx(n1), xtrial(n1), rtrial(m1);
        for (std::int64_t c = c0; c < c1; ++c) {
            const int j = int(c % m2), k = int(c / m2);
            const AxisInterpolant ip = image_column(pair.plus, j, k);
            const AxisInterpolant im = image_column(pair.minus, j, k);
            const double* bc = state.b.v.data() + c * n1;
            const double* zc = state.z.v.data() + c * n1;
            const double* uc = state.u.v.data() + c * n1;
            for (int i = 0; i < n1; ++i) {
                x[i] = bc[i];
                tgt[i] = zc[i] - uc[i];
            }

            auto subproblem_value = [&](const std::vector<double>& xx,
                                        std::vector<double>& rr) -> double {
                detail::residual_column(ip, im, g, xx.data(), rr.data(), nullptr, nullptr,
                                        nullptr, nullptr);
                double sr = 0.0;
                for (int i = 0; i < m1; ++i) sr += rr[i] * rr[i];
                double sd = 0.0, sq = 0.0;
                for (int i = 0; i < m1; ++i) {
                    const double d = (xx[i + 1] - xx[i]) / h1;
                    sd += d * d;
                }
                for (int i = 0; i < n1; ++i) {
                    const double e = xx[i] - tgt[i];
                    sq += e * e;
                }
                return 0.5 * V * sr + 0.5 * alpha_w * sd + 0.5 * rho_w * sq;
            };

            double s0 = -1.0;
            for (int sqp = 0; sqp < config.sqp_max_iter; ++sqp) {
                detail::residual_column(ip, im, g, x.data(), r.data(), jlo.data(), jhi.data(),
                                        nullptr, nullptr);
                // gradient of the smooth subproblem and its GN Hessian blocks
                double fval = 0.0;
                for (int i = 0; i < n1; ++i) {
                    grad[i] = rho_w * (x[i] - tgt[i]);
                    gd[i] = rho_w;
                    go[i] = 0.0;
                }
                double sr = 0.0, sd = 0.0;
                for (int i = 0; i < m1; ++i) {
                    sr += r[i] * r[i];
                    grad[i] += V * jlo[i] * r[i];
                    grad[i + 1] += V * jhi[i] * r[i];
                    gd[i] += V * jlo[i] * jlo[i] + lap_w;
                    gd[i + 1] += V * jhi[i] * jhi[i] + lap_w;
                    go[i] += V * jlo[i] * jhi[i] - lap_w;
                    const double d = (x[i + 1] - x[i]) / h1;
                    sd += d * d;
                    const double dd = alpha_w * d / h1;
                    grad[i] -= dd;
                    grad[i + 1] += dd;
                }
                double sq = 0.0;
                for (int i = 0; i < n1; ++i) {
                    const double e = x[i] - tgt[i];
                    sq += e * e;
                }
                fval = 0.5 * V * sr + 0.5 * alpha_w * sd + 0.5 * rho_w * sq;

                tridiag_apply(n1, gd.data(), go.data(), x.data(), gx.data());
                for (int i = 0; i < n1; ++i) cqp[i] = grad[i] - gx[i];

                QpResult qp;
                try {
                    qp = qp_active_set(n1, h1, gd, go, cqp, x, qp_cap);
                } catch (const std::exception& e) {
                    throw std::runtime_error("b_update: column " + std::to_string(c) + ": " +
                                             e.what());
                }
                col_qp[c] += qp.iters;
                col_sqp[c] += 1;
                if (config.check_kkt)
                    col_kkt[c] = std::max(col_kkt[c], verify_qp_kkt(n1, h1, gd, go, cqp, qp));

                double sn = 0.0, gdir = 0.0;
                for (int i = 0; i < n1; ++i) {
                    const double d = qp.x[i] - x[i];
                    sn += d * d;
                    gdir += grad[i] * d;
                }
                sn = std::sqrt(sn);
                if (s0 < 0.0) s0 = sn;
                double xs = 1.0;
                for (int i = 0; i < n1; ++i) xs = std::max(xs, std::abs(x[i]));
                if (sn <= std::max(config.sqp_tol_rel * s0, 1e-14 * xs)) break;
                if (!(gdir < 0.0)) break;

                // damp the step until the subproblem objective decreases
                double tls = 1.0;
                bool accepted = false;
                for (int ls = 0; ls < 40; ++ls) {
                    for (int i = 0; i < n1; ++i)
                        xtrial[i] = x[i] + tls * (qp.x[i] - x[i]);
                    const double ftrial = subproblem_value(xtrial, rtrial);
                    if (ftrial <= fval + 1e-4 * tls * gdir) {
                        accepted = true;
                        break;
                    }
                    tls *= 0.5;
                }
                if (!accepted) break;
                x.swap(xtrial);
            }
            clamp_column_diffs(x.data(), n1, h1);
            double* oc = out.v.data() + c * n1;
            for (int i = 0; i < n1; ++i) oc[i] = x[i];
        }
    });

    if (stats) {
        for (std::int64_t c = 0; c < g.columns(); ++c) {
            stats->sqp_iters += col_sqp[c];
            stats->qp_iters += col_qp[c];
            stats->kkt_violation = std::max(stats->kkt_violation, col_kkt[c]);
        }
    }
    return out;
}

StaggeredField z_update(const ADMMState& state, double alpha, const DctCoupledSolver& dct) {
    const GridSpec& g = state.b.grid;
    StaggeredField rhs(g);
    const double w = state.rho * g.cell_volume();
    for (std::int64_t i = 0; i < rhs.size(); ++i) rhs.v[i] = w * (state.b.v[i] + state.u.v[i]);
    return dct.solve(rhs, alpha, state.rho);
}

DualUpdate dual_update_and_residuals(const StaggeredField& b_new, const StaggeredField& z_new,
                                     const StaggeredField& z_old, const StaggeredField& u_old,
                                     double rho, double eps_abs, double eps_rel) {
    const GridSpec& g = b_new.grid;
    if (!(z_new.grid == g) || !(z_old.grid == g) || !(u_old.grid == g))
        throw std::invalid_argument("dual_update_and_residuals: grid mismatch");
    const double V = g.cell_volume();
    DualUpdate out;
    out.u = u_old;
    double pr = 0.0, du = 0.0;
    for (std::int64_t i = 0; i < b_new.size(); ++i) {
        const double diff = b_new.v[i] - z_new.v[i];
        out.u.v[i] += diff;
        pr += diff * diff;
        const double dz = z_old.v[i] - z_new.v[i];
        du += dz * dz;
    }
    out.primal_res = std::sqrt(pr);
    out.dual_res = rho * V * std::sqrt(du);
    const double sqrt_n = std::sqrt(double(g.faces()));
    out.eps_pri = sqrt_n * eps_abs + eps_rel * std::max(norm2(b_new.v), norm2(z_new.v));
    out.eps_dual = sqrt_n * eps_abs + eps_rel * rho * V * norm2(out.u.v);
    return out;
}

double rho_schedule(RhoSchedule schedule, double rho, double rho_min, double primal_res,
                    double dual_res, double tau_incr, double tau_decr, double mu) {
    if (schedule == RhoSchedule::fixed) return rho;
    double next = rho;
    if (primal_res > mu * dual_res) next = rho * tau_incr;
    else if (dual_res > mu * primal_res) next = rho / tau_decr;
    if (schedule == RhoSchedule::adaptive_bounded) next = std::max(next, rho_min);
    return next;
}

AdmmSolveResult admm_solve(const VolumePair& pair, ADMMState init, const ObjectiveParams& params,
                           const ADMMConfig& config, int level_tag) {
    params.validate();
    config.validate();
    const GridSpec& g = pair.grid();
    AdmmSolveResult out;
    ADMMState& st = out.state;
    st = std::move(init);
    if (st.b.v.empty()) st.b = StaggeredField(g);
    if (st.z.v.empty()) st.z = StaggeredField(g);
    if (st.u.v.empty()) st.u = StaggeredField(g);
    if (!(st.b.grid == g) || !(st.z.grid == g) || !(st.u.grid == g))
        throw std::invalid_argument("admm_solve: state grids do not match the pair");
    if (norm_inf(diff_x1(st.b).v) > 1.0)
        throw std::invalid_argument("admm_solve: infeasible starting field");
    if (st.rho <= 0.0) st.rho = config.rho0;

    const DctCoupledSolver dct(g, config.threads);
    const auto t0 = std::chrono::steady_clock::now();
    auto since = [](auto start) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    SolveReport& rep = out.report;
    rep.stop = StopReason::max_iterations;
    for (int it = 1; it <= config.max_iter; ++it) {
        st.iter = it;
        AdmmIterRow row;
        row.level = level_tag;
        row.iter = it;
        row.rho = st.rho;
        try {
            BUpdateStats stats;
            const auto tb = std::chrono::steady_clock::now();
            st.b = b_update(pair, st, params, config, &stats);
            row.b_update_s = since(tb);
            row.kkt_violation = stats.kkt_violation;

            StaggeredField z_new = z_update(st, params.alpha, dct);
            DualUpdate du = dual_update_and_residuals(st.b, z_new, st.z, st.u, st.rho,
                                                      config.eps_abs, config.eps_rel);
            st.z = std::move(z_new);
            st.u = std::move(du.u);
            st.lagrangian =
                augmented_lagrangian(pair, st.b, st.z, st.u, st.rho, params.alpha, config.threads);

            row.primal_res = du.primal_res;
            row.dual_res = du.dual_res;
            row.eps_pri = du.eps_pri;
            row.eps_dual = du.eps_dual;
            row.lagrangian = st.lagrangian;
            row.wall_s = since(t0);
            rep.admm.push_back(row);

            if (du.primal_res <= du.eps_pri && du.dual_res <= du.eps_dual) {
                rep.stop = StopReason::converged;
                break;
            }
            const double next = rho_schedule(config.schedule, st.rho, config.rho_min,
                                             du.primal_res, du.dual_res, config.tau_incr,
                                             config.tau_decr, config.mu);
            if (next != st.rho) {
                scale(st.u.v, st.rho / next); // keep y = rho*V*u continuous
                st.rho = next;
            }
        } catch (const std::exception& e) {
            rep.stop = StopReason::error;
            rep.message = e.what();
            break;
        }
    }
    return out;
}

} // namespace epicorr
