// Discrete operators on the face-staggered grid.
//
// The building blocks are Kronecker products of the 1D stencils
//
//   A1 = I(m2*m3) (x) Atilde,   Atilde = 1/2 [1 1; ... ; 1 1]   (m1 x m1+1)
//   D1 = I(m2*m3) (x) Dtilde(m1+1, h1)
//   D2 = I(m3) (x) Dtilde(m2, h2) (x) I(m1+1)
//   D3 = Dtilde(m3, h3) (x) I(m2*(m1+1))
//
// where Dtilde(m, h) is the (m-1) x m forward difference divided by h. D1 is
// read as the m1 x (m1+1) stencil mapping face values to cell values; A1
// likewise. All loops below are direct stencil applications of these
// definitions; tests check them against dense Kronecker assemblies.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "epicorr/grid.hpp"

namespace epicorr {

// Face-to-cell averaging along axis 1 (the geometric transformation term).
CellField avg_x1(const StaggeredField& b);

// Face-to-cell forward difference along axis 1 (the intensity modulation term).
CellField diff_x1(const StaggeredField& b);

// D1^T r, cell-to-face.
StaggeredField diff_x1_adjoint(const CellField& r);

// D2 b or D3 b; axis is 2 or 3. Result length: faces() scaled by (m_axis-1)/m_axis.
std::vector<double> diff_perp(const StaggeredField& b, int axis);

// D2^T y or D3^T y.
StaggeredField diff_perp_adjoint(const std::vector<double>& y, int axis, const GridSpec& grid);

// V * (D1^T D1 + D2^T D2 [+ D3^T D3]) b, the Hessian of the smoothness term.
// Symmetric positive semidefinite; annihilates constant fields (homogeneous
// Neumann boundary).
StaggeredField smoother_hessian_apply(const StaggeredField& b, int threads = 1);

// One symmetric tridiagonal block of size n1 = m1+1 per column (j,k).
// off[f] couples faces f and f+1 of the same column; the entry at the last
// face of each column is unused and kept at zero.
struct TridiagBlocks {
    GridSpec grid;
    std::vector<double> diag;
    std::vector<double> off;

    TridiagBlocks() = default;
    explicit TridiagBlocks(const GridSpec& g)
        : grid(g), diag(g.faces(), 0.0), off(g.faces(), 0.0) {}

    void add_identity(double s);
    // s * D1tilde^T D1tilde per column (the axis-1 Laplacian stencil).
    void add_axis1_laplacian(double s);
    // y += s * T x (per-column matrix application; used by tests and PCG).
    void apply(std::span<const double> x, std::span<double> y, double s = 1.0) const;
};

// LDL^T factorization of all blocks. Blocks are independent; solves may run
// in parallel over columns and are deterministic regardless of the schedule.
struct TridiagFactor {
    GridSpec grid;
    std::vector<double> d;   // pivots
    std::vector<double> l;   // subdiagonal multipliers (last face per column unused)

    // Throws std::runtime_error naming the column when a nonpositive pivot is
    // met (non-SPD block).
    static TridiagFactor factorize(const TridiagBlocks& t);

    void solve_column(std::int64_t col, double* x) const;
    void solve_in_place(std::span<double> x, int threads = 1) const;
};

// Direct solve of T x = rhs for every column block.
StaggeredField tridiag_solve_batched(const TridiagBlocks& t, const StaggeredField& rhs,
                                     int threads = 1);

// Analytic eigenvalues of Dtilde(m,h)^T Dtilde(m,h): (4/h^2) sin^2(pi*q/(2m)),
// q = 0..m-1. These are the diagonal entries produced by the orthonormal
// DCT-II similarity transform.
std::vector<double> neumann_eigenvalues(int m, double h);

// Direct solver for the cross-column coupled system
//
//   Gt z = rhs,  Gt = alpha*V*(D2^T D2 [+ D3^T D3]) + rho*V*I,
//
// diagonalized by orthonormal DCT-II transforms along axes 2 and 3. Each of
// the n1 face-index layers decouples; the transforms act per layer. In 2D the
// axis-3 transform is elided.
class DctCoupledSolver {
public:
    explicit DctCoupledSolver(const GridSpec& g, int threads = 1);

    StaggeredField solve(const StaggeredField& rhs, double alpha, double rho) const;

    // Matrix-free application of Gt for residual checks.
    StaggeredField apply(const StaggeredField& z, double alpha, double rho) const;

    const std::vector<double>& coupled_eigenvalues() const { return lam23_; }

private:
    GridSpec grid_;
    int threads_;
    std::vector<double> c2_, c3_;   // orthonormal DCT-II matrices, row-major
    std::vector<double> lam23_;     // lambda2[j] + lambda3[k] per column (j,k)

    void transform_axis2(const std::vector<double>& in, std::vector<double>& out,
                         bool inverse) const;
    void transform_axis3(const std::vector<double>& in, std::vector<double>& out,
                         bool inverse) const;
};

// One-shot convenience wrapper.
StaggeredField dct_coupled_solve(const StaggeredField& rhs, double alpha, double rho,
                                 int threads = 1);

} // namespace epicorr
