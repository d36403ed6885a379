#include "epicorr/operators.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "epicorr/parallel.hpp"

namespace epicorr {

namespace {

void check_staggered(const StaggeredField& b, const char* who) {
    if (std::int64_t(b.v.size()) != b.grid.faces())
        throw std::invalid_argument(std::string(who) + ": staggered values length does not match grid");
}

void check_cell(const CellField& r, const char* who) {
    if (std::int64_t(r.v.size()) != r.grid.cells())
        throw std::invalid_argument(std::string(who) + ": cell values length does not match grid");
}

} // namespace

CellField avg_x1(const StaggeredField& b) {
    check_staggered(b, "avg_x1");
    const GridSpec& g = b.grid;
    CellField out(g);
    const int m1 = g.m[0], n1 = g.n1();
    for (std::int64_t c = 0; c < g.columns(); ++c) {
        const double* bc = b.v.data() + c * n1;
        double* oc = out.v.data() + c * m1;
        for (int i = 0; i < m1; ++i) oc[i] = 0.5 * (bc[i] + bc[i + 1]);
    }
    return out;
}

CellField diff_x1(const StaggeredField& b) {
    check_staggered(b, "diff_x1");
    const GridSpec& g = b.grid;
    CellField out(g);
    const int m1 = g.m[0], n1 = g.n1();
    const double ih = 1.0 / g.h[0];
    for (std::int64_t c = 0; c < g.columns(); ++c) {
        const double* bc = b.v.data() + c * n1;
        double* oc = out.v.data() + c * m1;
        for (int i = 0; i < m1; ++i) oc[i] = (bc[i + 1] - bc[i]) * ih;
    }
    return out;
}

StaggeredField diff_x1_adjoint(const CellField& r) {
    check_cell(r, "diff_x1_adjoint");
    const GridSpec& g = r.grid;
    StaggeredField out(g);
    const int m1 = g.m[0], n1 = g.n1();
    const double ih = 1.0 / g.h[0];
    for (std::int64_t c = 0; c < g.columns(); ++c) {
        const double* rc = r.v.data() + c * m1;
        double* oc = out.v.data() + c * n1;
        oc[0] = -rc[0] * ih;
        for (int i = 1; i < m1; ++i) oc[i] = (rc[i - 1] - rc[i]) * ih;
        oc[m1] = rc[m1 - 1] * ih;
    }
    return out;
}

std::vector<double> diff_perp(const StaggeredField& b, int axis) {
    check_staggered(b, "diff_perp");
    const GridSpec& g = b.grid;
    if (axis != 2 && axis != 3)
        throw std::invalid_argument("diff_perp: axis must be 2 or 3");
    if (axis == 3 && g.dim == 2)
        throw std::invalid_argument("diff_perp: axis 3 invalid on a 2D grid");
    const int n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
    if (axis == 2) {
        std::vector<double> out(std::size_t(n1) * (m2 - 1) * m3, 0.0);
        const double ih = 1.0 / g.h[1];
        for (int k = 0; k < m3; ++k)
            for (int j = 0; j + 1 < m2; ++j) {
                const double* lo = b.v.data() + n1 * (j + std::int64_t(m2) * k);
                const double* hi = lo + n1;
                double* o = out.data() + n1 * (j + std::int64_t(m2 - 1) * k);
                for (int i = 0; i < n1; ++i) o[i] = (hi[i] - lo[i]) * ih;
            }
        return out;
    }
    std::vector<double> out(std::size_t(n1) * m2 * (m3 - 1), 0.0);
    const double ih = 1.0 / g.h[2];
    const std::int64_t layer = std::int64_t(n1) * m2;
    for (int k = 0; k + 1 < m3; ++k) {
        const double* lo = b.v.data() + layer * k;
        const double* hi = lo + layer;
        double* o = out.data() + layer * k;
        for (std::int64_t i = 0; i < layer; ++i) o[i] = (hi[i] - lo[i]) * ih;
    }
    return out;
}

StaggeredField diff_perp_adjoint(const std::vector<double>& y, int axis, const GridSpec& g) {
    if (axis != 2 && axis != 3)
        throw std::invalid_argument("diff_perp_adjoint: axis must be 2 or 3");
    if (axis == 3 && g.dim == 2)
        throw std::invalid_argument("diff_perp_adjoint: axis 3 invalid on a 2D grid");
    const int n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
    StaggeredField out(g);
    if (axis == 2) {
        if (std::int64_t(y.size()) != std::int64_t(n1) * (m2 - 1) * m3)
            throw std::invalid_argument("diff_perp_adjoint: input length mismatch (axis 2)");
        const double ih = 1.0 / g.h[1];
        for (int k = 0; k < m3; ++k)
            for (int j = 0; j + 1 < m2; ++j) {
                const double* yc = y.data() + n1 * (j + std::int64_t(m2 - 1) * k);
                double* lo = out.v.data() + n1 * (j + std::int64_t(m2) * k);
                double* hi = lo + n1;
                for (int i = 0; i < n1; ++i) {
                    lo[i] -= yc[i] * ih;
                    hi[i] += yc[i] * ih;
                }
            }
        return out;
    }
    const std::int64_t layer = std::int64_t(n1) * m2;
    if (std::int64_t(y.size()) != layer * (m3 - 1))
        throw std::invalid_argument("diff_perp_adjoint: input length mismatch (axis 3)");
    const double ih = 1.0 / g.h[2];
    for (int k = 0; k + 1 < m3; ++k) {
        const double* yc = y.data() + layer * k;
        double* lo = out.v.data() + layer * k;
        double* hi = lo + layer;
        for (std::int64_t i = 0; i < layer; ++i) {
            lo[i] -= yc[i] * ih;
            hi[i] += yc[i] * ih;
        }
    }
    return out;
}

StaggeredField smoother_hessian_apply(const StaggeredField& b, int threads) {
    check_staggered(b, "smoother_hessian_apply");
    const GridSpec& g = b.grid;
    StaggeredField out(g);
    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
    const double V = g.cell_volume();
    const double w1 = V / (g.h[0] * g.h[0]);
    const double w2 = V / (g.h[1] * g.h[1]);
    const double w3 = V / (g.h[2] * g.h[2]);
    parallel_for(g.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const int j = int(c % m2), k = int(c / m2);
            const double* bc = b.v.data() + c * n1;
            double* oc = out.v.data() + c * n1;
            // axis 1: Dtilde^T Dtilde within the column
            oc[0] = w1 * (bc[0] - bc[1]);
            for (int i = 1; i < m1; ++i) oc[i] = w1 * (2.0 * bc[i] - bc[i - 1] - bc[i + 1]);
            oc[m1] = w1 * (bc[m1] - bc[m1 - 1]);
            // axis 2 neighbors
            if (j > 0) {
                const double* nb = bc - n1;
                for (int i = 0; i < n1; ++i) oc[i] += w2 * (bc[i] - nb[i]);
            }
            if (j + 1 < m2) {
                const double* nb = bc + n1;
                for (int i = 0; i < n1; ++i) oc[i] += w2 * (bc[i] - nb[i]);
            }
            // axis 3 neighbors
            if (m3 > 1) {
                const std::int64_t layer = std::int64_t(n1) * m2;
                if (k > 0) {
                    const double* nb = bc - layer;
                    for (int i = 0; i < n1; ++i) oc[i] += w3 * (bc[i] - nb[i]);
                }
                if (k + 1 < m3) {
                    const double* nb = bc + layer;
                    for (int i = 0; i < n1; ++i) oc[i] += w3 * (bc[i] - nb[i]);
                }
            }
        }
    });
    return out;
}

void TridiagBlocks::add_identity(double s) {
    for (double& d : diag) d += s;
}

void TridiagBlocks::add_axis1_laplacian(double s) {
    const int m1 = grid.m[0], n1 = grid.n1();
    const double w = s / (grid.h[0] * grid.h[0]);
    for (std::int64_t c = 0; c < grid.columns(); ++c) {
        double* d = diag.data() + c * n1;
        double* o = off.data() + c * n1;
        d[0] += w;
        for (int i = 1; i < m1; ++i) d[i] += 2.0 * w;
        d[m1] += w;
        for (int i = 0; i < m1; ++i) o[i] -= w;
    }
}

void TridiagBlocks::apply(std::span<const double> x, std::span<double> y, double s) const {
    const int m1 = grid.m[0], n1 = grid.n1();
    for (std::int64_t c = 0; c < grid.columns(); ++c) {
        const double* xc = x.data() + c * n1;
        const double* d = diag.data() + c * n1;
        const double* o = off.data() + c * n1;
        double* yc = y.data() + c * n1;
        for (int i = 0; i <= m1; ++i) {
            double acc = d[i] * xc[i];
            if (i > 0) acc += o[i - 1] * xc[i - 1];
            if (i < m1) acc += o[i] * xc[i + 1];
            yc[i] += s * acc;
        }
    }
}

TridiagFactor TridiagFactor::factorize(const TridiagBlocks& t) {
    TridiagFactor f;
    f.grid = t.grid;
    f.d.resize(t.diag.size());
    f.l.resize(t.off.size());
    const int n1 = t.grid.n1();
    for (std::int64_t c = 0; c < t.grid.columns(); ++c) {
        const double* d = t.diag.data() + c * n1;
        const double* o = t.off.data() + c * n1;
        double* fd = f.d.data() + c * n1;
        double* fl = f.l.data() + c * n1;
        double prev = d[0];
        if (!(prev > 0.0))
            throw std::runtime_error("tridiag factorize: nonpositive pivot in column " +
                                     std::to_string(c));
        fd[0] = prev;
        for (int i = 1; i < n1; ++i) {
            const double li = o[i - 1] / fd[i - 1];
            fl[i - 1] = li;
            const double piv = d[i] - li * o[i - 1];
            if (!(piv > 0.0))
                throw std::runtime_error("tridiag factorize: nonpositive pivot in column " +
                                         std::to_string(c));
            fd[i] = piv;
        }
        fl[n1 - 1] = 0.0;
    }
    return f;
}

void TridiagFactor::solve_column(std::int64_t col, double* x) const {
    const int n1 = grid.n1();
    const double* fd = d.data() + col * n1;
    const double* fl = l.data() + col * n1;
    for (int i = 1; i < n1; ++i) x[i] -= fl[i - 1] * x[i - 1];
    for (int i = 0; i < n1; ++i) x[i] /= fd[i];
    for (int i = n1 - 2; i >= 0; --i) x[i] -= fl[i] * x[i + 1];
}

void TridiagFactor::solve_in_place(std::span<double> x, int threads) const {
    const int n1 = grid.n1();
    parallel_for(grid.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) solve_column(c, x.data() + c * n1);
    });
}

StaggeredField tridiag_solve_batched(const TridiagBlocks& t, const StaggeredField& rhs,
                                     int threads) {
    check_staggered(rhs, "tridiag_solve_batched");
    if (!(rhs.grid == t.grid))
        throw std::invalid_argument("tridiag_solve_batched: grid mismatch");
    TridiagFactor f = TridiagFactor::factorize(t);
    StaggeredField x = rhs;
    f.solve_in_place(x.v, threads);
    return x;
}

std::vector<double> neumann_eigenvalues(int m, double h) {
    std::vector<double> lam(m, 0.0);
    for (int q = 0; q < m; ++q) {
        const double s = std::sin(std::numbers::pi * q / (2.0 * m));
        lam[q] = 4.0 / (h * h) * s * s;
    }
    return lam;
}

namespace {

// Orthonormal DCT-II matrix, row-major: C[q*m + j].
std::vector<double> dct2_matrix(int m) {
    std::vector<double> c(std::size_t(m) * m);
    const double s0 = std::sqrt(1.0 / m), sq = std::sqrt(2.0 / m);
    for (int q = 0; q < m; ++q)
        for (int j = 0; j < m; ++j)
            c[std::size_t(q) * m + j] =
                (q == 0 ? s0 : sq) * std::cos(std::numbers::pi * q * (2.0 * j + 1.0) / (2.0 * m));
    return c;
}

#ifndef NDEBUG
// One-time sanity check of the analytic eigenvalues against the transform:
// C * Dtilde^T Dtilde * C^T must equal diag(lambda).
void verify_dct_diagonalization(const std::vector<double>& c, int m, double h) {
    if (m > 64) return;
    std::vector<double> lap(std::size_t(m) * m, 0.0);
    const double w = 1.0 / (h * h);
    for (int i = 0; i < m; ++i) {
        lap[std::size_t(i) * m + i] = (i == 0 || i == m - 1) ? w : 2.0 * w;
        if (i + 1 < m) {
            lap[std::size_t(i) * m + i + 1] = -w;
            lap[std::size_t(i + 1) * m + i] = -w;
        }
    }
    const std::vector<double> lam = neumann_eigenvalues(m, h);
    double scale = 1.0;
    for (double x : lam) scale = std::max(scale, std::abs(x));
    for (int q = 0; q < m; ++q)
        for (int r = 0; r < m; ++r) {
            double acc = 0.0;
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    acc += c[std::size_t(q) * m + a] * lap[std::size_t(a) * m + b] *
                           c[std::size_t(r) * m + b];
            const double expect = (q == r) ? lam[q] : 0.0;
            assert(std::abs(acc - expect) <= 1e-10 * scale);
        }
}
#endif

} // namespace

DctCoupledSolver::DctCoupledSolver(const GridSpec& g, int threads)
    : grid_(g), threads_(threads) {
    g.validate();
    const int m2 = g.m[1], m3 = g.m[2];
    c2_ = dct2_matrix(m2);
    if (m3 > 1) c3_ = dct2_matrix(m3);
#ifndef NDEBUG
    verify_dct_diagonalization(c2_, m2, g.h[1]);
    if (m3 > 1) verify_dct_diagonalization(c3_, m3, g.h[2]);
#endif
    const std::vector<double> l2 = neumann_eigenvalues(m2, g.h[1]);
    const std::vector<double> l3 =
        (m3 > 1) ? neumann_eigenvalues(m3, g.h[2]) : std::vector<double>{0.0};
    lam23_.resize(std::size_t(m2) * m3);
    for (int k = 0; k < m3; ++k)
        for (int j = 0; j < m2; ++j) lam23_[std::size_t(k) * m2 + j] = l2[j] + l3[k];
}

void DctCoupledSolver::transform_axis2(const std::vector<double>& in, std::vector<double>& out,
                                       bool inverse) const {
    const int n1 = grid_.n1(), m2 = grid_.m[1], m3 = grid_.m[2];
    out.assign(in.size(), 0.0);
    parallel_for(m3, threads_, [&](std::int64_t k0, std::int64_t k1) {
        for (std::int64_t k = k0; k < k1; ++k) {
            const double* slab_in = in.data() + n1 * std::int64_t(m2) * k;
            double* slab_out = out.data() + n1 * std::int64_t(m2) * k;
            for (int q = 0; q < m2; ++q) {
                double* o = slab_out + std::int64_t(q) * n1;
                for (int j = 0; j < m2; ++j) {
                    const double coef =
                        inverse ? c2_[std::size_t(j) * m2 + q] : c2_[std::size_t(q) * m2 + j];
                    if (coef == 0.0) continue;
                    const double* s = slab_in + std::int64_t(j) * n1;
                    for (int i = 0; i < n1; ++i) o[i] += coef * s[i];
                }
            }
        }
    });
}

void DctCoupledSolver::transform_axis3(const std::vector<double>& in, std::vector<double>& out,
                                       bool inverse) const {
    const int n1 = grid_.n1(), m2 = grid_.m[1], m3 = grid_.m[2];
    const std::int64_t layer = std::int64_t(n1) * m2;
    out.assign(in.size(), 0.0);
    parallel_for(m3, threads_, [&](std::int64_t q0, std::int64_t q1) {
        for (std::int64_t q = q0; q < q1; ++q) {
            double* o = out.data() + layer * q;
            for (int k = 0; k < m3; ++k) {
                const double coef =
                    inverse ? c3_[std::size_t(k) * m3 + q] : c3_[std::size_t(q) * m3 + k];
                if (coef == 0.0) continue;
                const double* s = in.data() + layer * k;
                for (std::int64_t i = 0; i < layer; ++i) o[i] += coef * s[i];
            }
        }
    });
}

StaggeredField DctCoupledSolver::solve(const StaggeredField& rhs, double alpha,
                                       double rho) const {
    check_staggered(rhs, "dct_coupled_solve");
    if (!(rhs.grid == grid_))
        throw std::invalid_argument("dct_coupled_solve: grid mismatch");
    if (!(alpha > 0.0)) throw std::invalid_argument("dct_coupled_solve: alpha must be > 0");
    if (!(rho > 0.0)) throw std::invalid_argument("dct_coupled_solve: rho must be > 0");
    const int n1 = grid_.n1();
    const double V = grid_.cell_volume();

    std::vector<double> hat, tmp;
    transform_axis2(rhs.v, hat, false);
    if (grid_.m[2] > 1) {
        transform_axis3(hat, tmp, false);
        hat.swap(tmp);
    }
    parallel_for(grid_.columns(), threads_, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const double denom = alpha * V * lam23_[c] + rho * V;
            double* x = hat.data() + c * n1;
            for (int i = 0; i < n1; ++i) x[i] /= denom;
        }
    });
    if (grid_.m[2] > 1) {
        transform_axis3(hat, tmp, true);
        hat.swap(tmp);
    }
    StaggeredField out(grid_);
    transform_axis2(hat, out.v, true);
    return out;
}

StaggeredField DctCoupledSolver::apply(const StaggeredField& z, double alpha, double rho) const {
    check_staggered(z, "DctCoupledSolver::apply");
    const GridSpec& g = z.grid;
    const double V = g.cell_volume();
    StaggeredField out(g);
    const int n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
    const double w2 = alpha * V / (g.h[1] * g.h[1]);
    const double w3 = alpha * V / (g.h[2] * g.h[2]);
    for (std::int64_t c = 0; c < g.columns(); ++c) {
        const int j = int(c % m2), k = int(c / m2);
        const double* zc = z.v.data() + c * n1;
        double* oc = out.v.data() + c * n1;
        for (int i = 0; i < n1; ++i) oc[i] = rho * V * zc[i];
        if (j > 0)
            for (int i = 0; i < n1; ++i) oc[i] += w2 * (zc[i] - zc[i - n1]);
        if (j + 1 < m2)
            for (int i = 0; i < n1; ++i) oc[i] += w2 * (zc[i] - zc[i + n1]);
        if (m3 > 1) {
            const std::int64_t layer = std::int64_t(n1) * m2;
            if (k > 0)
                for (int i = 0; i < n1; ++i) oc[i] += w3 * (zc[i] - zc[i - layer]);
            if (k + 1 < m3)
                for (int i = 0; i < n1; ++i) oc[i] += w3 * (zc[i] - zc[i + layer]);
        }
    }
    return out;
}

StaggeredField dct_coupled_solve(const StaggeredField& rhs, double alpha, double rho,
                                 int threads) {
    DctCoupledSolver solver(rhs.grid, threads);
    return solver.solve(rhs, alpha, rho);
}

} // namespace epicorr
