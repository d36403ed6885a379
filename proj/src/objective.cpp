#include "epicorr/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "epicorr/parallel.hpp"

namespace epicorr {

void ObjectiveParams::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("ObjectiveParams: alpha must be > 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("ObjectiveParams: beta must be >= 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("ObjectiveParams: gamma must be >= 0");
}

double phi(double x) {
    if (std::abs(x) >= 1.0) return std::numeric_limits<double>::infinity();
    const double x2 = x * x;
    return x2 * x2 / (1.0 - x2);
}

double phi_d1(double x) {
    const double x2 = x * x, x3 = x2 * x;
    const double d = 1.0 - x2;
    return (4.0 * x3 - 2.0 * x3 * x2) / (d * d);
}

double phi_d2(double x) {
    const double x2 = x * x;
    const double d = 1.0 - x2;
    return 2.0 * x2 * (x2 * x2 - 3.0 * x2 + 6.0) / (d * d * d);
}

bool is_strictly_feasible(const StaggeredField& b) {
    return norm_inf(diff_x1(b).v) <= 1.0 - kFeasEps;
}

bool within_linf_box(const StaggeredField& b) {
    const GridSpec& g = b.grid;
    double diam2 = 0.0;
    for (int a = 0; a < g.dim; ++a) diam2 += g.extent(a) * g.extent(a);
    return norm_inf(b.v) <= 2.0 * std::sqrt(diam2);
}

namespace detail {

void residual_column(const AxisInterpolant& ip, const AxisInterpolant& im, const GridSpec& g,
                     const double* b, double* r, double* jlo, double* jhi, double* tp,
                     double* tm) {
    const int m1 = g.m[0];
    const double h1 = g.h[0];
    for (int i = 0; i < m1; ++i) {
        const double xc = g.cell_center(0, i);
        const double a = 0.5 * (b[i] + b[i + 1]);
        const double d = (b[i + 1] - b[i]) / h1;
        const double vp = ip.value(xc + a);
        const double vm = im.value(xc - a);
        const double Tp = vp * (1.0 + d);
        const double Tm = vm * (1.0 - d);
        r[i] = Tp - Tm;
        if (tp) tp[i] = Tp;
        if (tm) tm[i] = Tm;
        if (jlo) {
            const double gp = ip.slope(xc + a);
            const double gm = im.slope(xc - a);
            const double wa = 0.5 * (gp * (1.0 + d) + gm * (1.0 - d));
            const double wd = (vp + vm) / h1;
            jlo[i] = wa - wd;
            jhi[i] = wa + wd;
        }
    }
}

} // namespace detail

CellField residual(const VolumePair& pair, const StaggeredField& b, int threads) {
    const GridSpec& g = pair.grid();
    if (!(b.grid == g)) throw std::invalid_argument("residual: field grid mismatch");
    CellField r(g);
    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1];
    parallel_for(g.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const int j = int(c % m2), k = int(c / m2);
            detail::residual_column(image_column(pair.plus, j, k), image_column(pair.minus, j, k),
                                    g, b.v.data() + c * n1, r.v.data() + c * m1, nullptr,
                                    nullptr, nullptr, nullptr);
        }
    });
    return r;
}

DistanceEval distance(const VolumePair& pair, const StaggeredField& b, int threads) {
    const GridSpec& g = pair.grid();
    if (!(b.grid == g)) throw std::invalid_argument("distance: field grid mismatch");
    DistanceEval ev;
    ev.residual = CellField(g);
    ev.grad = StaggeredField(g);
    ev.jac_lo.assign(g.cells(), 0.0);
    ev.jac_hi.assign(g.cells(), 0.0);
    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1];
    const double V = g.cell_volume();
    std::vector<double> partial(g.columns(), 0.0);
    parallel_for(g.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const int j = int(c % m2), k = int(c / m2);
            double* r = ev.residual.v.data() + c * m1;
            double* jlo = ev.jac_lo.data() + c * m1;
            double* jhi = ev.jac_hi.data() + c * m1;
            detail::residual_column(image_column(pair.plus, j, k), image_column(pair.minus, j, k),
                                    g, b.v.data() + c * n1, r, jlo, jhi, nullptr, nullptr);
            double* gc = ev.grad.v.data() + c * n1;
            double s = 0.0;
            for (int i = 0; i < m1; ++i) {
                s += r[i] * r[i];
                gc[i] += V * jlo[i] * r[i];
                gc[i + 1] += V * jhi[i] * r[i];
            }
            partial[c] = s;
        }
    });
    double s = 0.0;
    for (double p : partial) s += p;
    ev.value = 0.5 * V * s;
    return ev;
}

StaggeredField DistanceEval::hessian_apply(const StaggeredField& p, int threads) const {
    const GridSpec& g = p.grid;
    StaggeredField out(g);
    const int m1 = g.m[0], n1 = g.n1();
    const double V = g.cell_volume();
    parallel_for(g.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const double* jlo = jac_lo.data() + c * m1;
            const double* jhi = jac_hi.data() + c * m1;
            const double* pc = p.v.data() + c * n1;
            double* oc = out.v.data() + c * n1;
            for (int i = 0; i < m1; ++i) {
                const double jp = jlo[i] * pc[i] + jhi[i] * pc[i + 1];
                oc[i] += V * jlo[i] * jp;
                oc[i + 1] += V * jhi[i] * jp;
            }
        }
    });
    return out;
}

void DistanceEval::add_hessian_blocks(TridiagBlocks& t) const {
    const GridSpec& g = t.grid;
    const int m1 = g.m[0], n1 = g.n1();
    const double V = g.cell_volume();
    for (std::int64_t c = 0; c < g.columns(); ++c) {
        const double* jlo = jac_lo.data() + c * m1;
        const double* jhi = jac_hi.data() + c * m1;
        double* d = t.diag.data() + c * n1;
        double* o = t.off.data() + c * n1;
        for (int i = 0; i < m1; ++i) {
            d[i] += V * jlo[i] * jlo[i];
            d[i + 1] += V * jhi[i] * jhi[i];
            o[i] += V * jlo[i] * jhi[i];
        }
    }
}

SmootherEval smoother(const StaggeredField& b, int threads) {
    const GridSpec& g = b.grid;
    SmootherEval ev;
    const double V = g.cell_volume();
    const CellField d1 = diff_x1(b);
    double s = dot(d1.v, d1.v);
    {
        const std::vector<double> d2 = diff_perp(b, 2);
        s += dot(d2, d2);
    }
    if (g.dim == 3) {
        const std::vector<double> d3 = diff_perp(b, 3);
        s += dot(d3, d3);
    }
    ev.value = 0.5 * V * s;
    ev.grad = smoother_hessian_apply(b, threads);
    return ev;
}

double penalty_value(const StaggeredField& b, double beta) {
    if (beta == 0.0) return 0.0;
    const CellField d = diff_x1(b);
    double s = 0.0;
    for (double x : d.v) {
        if (std::abs(x) >= 1.0) return std::numeric_limits<double>::infinity();
        s += phi(x);
    }
    return beta * b.grid.cell_volume() * s;
}

PenaltyEval penalty(const StaggeredField& b, double beta, int threads) {
    const GridSpec& g = b.grid;
    PenaltyEval ev;
    ev.grad = StaggeredField(g);
    ev.phi2.assign(g.cells(), 0.0);
    if (beta == 0.0) return ev;
    const CellField d = diff_x1(b);
    if (norm_inf(d.v) > 1.0 - kFeasEps)
        throw std::domain_error("penalty: derivatives requested at an infeasible point");
    const int m1 = g.m[0], n1 = g.n1();
    const double w = beta * g.cell_volume();
    const double ih = 1.0 / g.h[0];
    std::vector<double> partial(g.columns(), 0.0);
    parallel_for(g.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const double* dc = d.v.data() + c * m1;
            double* gc = ev.grad.v.data() + c * n1;
            double* p2 = ev.phi2.data() + c * m1;
            double s = 0.0;
            for (int i = 0; i < m1; ++i) {
                s += phi(dc[i]);
                const double dphi = w * phi_d1(dc[i]) * ih;
                gc[i] -= dphi;
                gc[i + 1] += dphi;
                p2[i] = phi_d2(dc[i]);
            }
            partial[c] = s;
        }
    });
    double s = 0.0;
    for (double p : partial) s += p;
    ev.value = w * s;
    return ev;
}

ObjectiveEval objective_gn(const VolumePair& pair, const StaggeredField& b,
                           const ObjectiveParams& p, int threads, bool need_grad) {
    p.validate();
    const GridSpec& g = pair.grid();
    if (!(b.grid == g)) throw std::invalid_argument("objective_gn: field grid mismatch");
    ObjectiveEval ev;
    const CellField d1 = diff_x1(b);
    const double dmax = norm_inf(d1.v);
    ev.feasible = p.beta == 0.0 || dmax <= 1.0 - kFeasEps;
    if (p.enforce_linf_box && !within_linf_box(b)) ev.feasible = false;
    if (!ev.feasible) {
        ev.value = std::numeric_limits<double>::infinity();
        ev.pen = ev.value;
        return ev;
    }
    DistanceEval de = distance(pair, b, threads);
    SmootherEval se = smoother(b, threads);
    ev.dist = de.value;
    ev.smooth = se.value;
    ev.residual = std::move(de.residual);
    if (need_grad) {
        ev.grad = std::move(de.grad);
        axpy(p.alpha, se.grad.v, ev.grad.v);
        if (p.beta > 0.0) {
            PenaltyEval pe = penalty(b, p.beta, threads);
            ev.pen = pe.value;
            axpy(1.0, pe.grad.v, ev.grad.v);
        }
    } else {
        ev.pen = penalty_value(b, p.beta);
    }
    ev.value = ev.dist + p.alpha * ev.smooth + ev.pen;
    return ev;
}

GnHessian::GnHessian(const VolumePair& pair, const StaggeredField& b, const ObjectiveParams& p,
                     int threads)
    : grid_(pair.grid()), col_(pair.grid()), threads_(threads) {
    p.validate();
    const GridSpec& g = grid_;
    const double V = g.cell_volume();
    w2_ = p.alpha * V / (g.h[1] * g.h[1]);
    w3_ = g.dim == 3 ? p.alpha * V / (g.h[2] * g.h[2]) : 0.0;

    DistanceEval de = distance(pair, b, threads);
    de.add_hessian_blocks(col_);
    col_.add_axis1_laplacian(p.alpha * V);
    col_.add_identity(p.gamma);
    if (p.beta > 0.0) {
        PenaltyEval pe = penalty(b, p.beta, threads);
        const int m1 = g.m[0], n1 = g.n1();
        const double w = p.beta * V / (g.h[0] * g.h[0]);
        for (std::int64_t c = 0; c < g.columns(); ++c) {
            const double* p2 = pe.phi2.data() + c * m1;
            double* d = col_.diag.data() + c * n1;
            double* o = col_.off.data() + c * n1;
            for (int i = 0; i < m1; ++i) {
                d[i] += w * p2[i];
                d[i + 1] += w * p2[i];
                o[i] -= w * p2[i];
            }
        }
    }
}

double GnHessian::cross_diag(int j, int k) const {
    double d = w2_ * ((j == 0 || j == grid_.m[1] - 1) ? 1.0 : 2.0);
    if (grid_.dim == 3) d += w3_ * ((k == 0 || k == grid_.m[2] - 1) ? 1.0 : 2.0);
    return d;
}

void GnHessian::apply(std::span<const double> x, std::span<double> y) const {
    const GridSpec& g = grid_;
    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
    parallel_for(g.columns(), threads_, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const int j = int(c % m2), k = int(c / m2);
            const double* xc = x.data() + c * n1;
            const double* d = col_.diag.data() + c * n1;
            const double* o = col_.off.data() + c * n1;
            double* yc = y.data() + c * n1;
            for (int i = 0; i <= m1; ++i) {
                double acc = d[i] * xc[i];
                if (i > 0) acc += o[i - 1] * xc[i - 1];
                if (i < m1) acc += o[i] * xc[i + 1];
                yc[i] = acc;
            }
            if (j > 0)
                for (int i = 0; i < n1; ++i) yc[i] += w2_ * (xc[i] - xc[i - n1]);
            if (j + 1 < m2)
                for (int i = 0; i < n1; ++i) yc[i] += w2_ * (xc[i] - xc[i + n1]);
            if (m3 > 1) {
                const std::int64_t layer = std::int64_t(n1) * m2;
                if (k > 0)
                    for (int i = 0; i < n1; ++i) yc[i] += w3_ * (xc[i] - xc[i - layer]);
                if (k + 1 < m3)
                    for (int i = 0; i < n1; ++i) yc[i] += w3_ * (xc[i] - xc[i + layer]);
            }
        }
    });
}

StaggeredField GnHessian::apply(const StaggeredField& x) const {
    StaggeredField out(grid_);
    apply(x.v, out.v);
    return out;
}

TridiagBlocks GnHessian::preconditioner_blocks() const {
    TridiagBlocks t = col_;
    const int n1 = grid_.n1(), m2 = grid_.m[1];
    for (std::int64_t c = 0; c < grid_.columns(); ++c) {
        const double cd = cross_diag(int(c % m2), int(c / m2));
        double* d = t.diag.data() + c * n1;
        for (int i = 0; i < n1; ++i) d[i] += cd;
    }
    return t;
}

std::vector<double> GnHessian::full_diagonal() const {
    std::vector<double> d(col_.diag);
    const int n1 = grid_.n1(), m2 = grid_.m[1];
    for (std::int64_t c = 0; c < grid_.columns(); ++c) {
        const double cd = cross_diag(int(c % m2), int(c / m2));
        for (int i = 0; i < n1; ++i) d[c * n1 + i] += cd;
    }
    return d;
}

std::vector<double> GnHessian::dense() const {
    const std::int64_t n = grid_.faces();
    const int n1 = grid_.n1(), m2 = grid_.m[1], m3 = grid_.m[2];
    std::vector<double> a(std::size_t(n) * n, 0.0);
    for (std::int64_t c = 0; c < grid_.columns(); ++c) {
        const int j = int(c % m2), k = int(c / m2);
        const double cd = cross_diag(j, k);
        for (int i = 0; i < n1; ++i) {
            const std::int64_t f = c * n1 + i;
            a[std::size_t(f) * n + f] = col_.diag[f] + cd;
            if (i + 1 < n1) {
                a[std::size_t(f) * n + f + 1] = col_.off[f];
                a[std::size_t(f + 1) * n + f] = col_.off[f];
            }
            if (j > 0) a[std::size_t(f) * n + (f - n1)] = -w2_;
            if (j + 1 < m2) a[std::size_t(f) * n + (f + n1)] = -w2_;
            if (m3 > 1) {
                const std::int64_t layer = std::int64_t(n1) * m2;
                if (k > 0) a[std::size_t(f) * n + (f - layer)] = -w3_;
                if (k + 1 < m3) a[std::size_t(f) * n + (f + layer)] = -w3_;
            }
        }
    }
    return a;
}

} // namespace epicorr
