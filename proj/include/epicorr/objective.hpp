// Discrete objective terms and their derivatives.
//
//   D(b) = (V/2) ||r(b)||^2,  r(b) = Iplus(x+Ab).*(e+D1 b) - Iminus(x-Ab).*(e-D1 b)
//   S(b) = (V/2) (||D1 b||^2 + ||D2 b||^2 + ||D3 b||^2)
//   P(b) = beta*V * sum(phi(D1 b)),  phi(x) = x^4/(1-x^2) on (-1,1), +inf outside
//
//   J_GN(b) = D + alpha*S + P, with Gauss-Newton Hessian
//   H = V*Jr'Jr + alpha*V*(D1'D1 + D2'D2 + D3'D3) + gamma*I + beta*V*D1'diag(phi'')D1.
//
// The residual Jacobian touches only the two faces of each cell's column, so
// V*Jr'Jr, the D1'D1 term, and the penalty Hessian are block-diagonal with one
// symmetric tridiagonal block per column; only the D2/D3 terms couple columns.

#pragma once

#include <cstdint>
#include <vector>

#include "epicorr/grid.hpp"
#include "epicorr/image.hpp"
#include "epicorr/operators.hpp"

namespace epicorr {

struct ObjectiveParams {
    double alpha = 50.0;  // smoothness weight, > 0
    double beta = 10.0;   // penalty weight, >= 0
    double gamma = 1e-3;  // SPD shift, >= 0
    // Optional box on the field magnitude itself, radius 2*diam(domain).
    // Off by default; the Jacobian constraint alone suffices in practice.
    bool enforce_linf_box = false;

    void validate() const;
};

// max |b_i| <= 2 * diam(domain)
bool within_linf_box(const StaggeredField& b);

// Strict feasibility margin for derivative evaluation.
inline constexpr double kFeasEps = 1e-10;

double phi(double x);
double phi_d1(double x);
double phi_d2(double x);

bool is_strictly_feasible(const StaggeredField& b);

CellField residual(const VolumePair& pair, const StaggeredField& b, int threads = 1);

struct DistanceEval {
    double value = 0.0;
    StaggeredField grad;
    CellField residual;
    std::vector<double> jac_lo, jac_hi; // per cell: d r_i / d b_i, d r_i / d b_{i+1}

    // H_D p = V * Jr' (Jr p)
    StaggeredField hessian_apply(const StaggeredField& p, int threads = 1) const;
    // T += H_D (exact per-column tridiagonal blocks, assembled from the stencil)
    void add_hessian_blocks(TridiagBlocks& t) const;
};

DistanceEval distance(const VolumePair& pair, const StaggeredField& b, int threads = 1);

struct SmootherEval {
    double value = 0.0;
    StaggeredField grad;
};

SmootherEval smoother(const StaggeredField& b, int threads = 1);

// Value only; +inf when any |(D1 b)_i| >= 1. Never throws for finite b.
double penalty_value(const StaggeredField& b, double beta);

struct PenaltyEval {
    double value = 0.0;
    StaggeredField grad;
    std::vector<double> phi2; // per cell, phi''(D1 b) >= 0
};

// Value, gradient and Hessian weights; throws std::domain_error unless b is
// strictly feasible (max |D1 b| <= 1 - kFeasEps).
PenaltyEval penalty(const StaggeredField& b, double beta, int threads = 1);

struct ObjectiveEval {
    double value = 0.0; // +inf when infeasible
    double dist = 0.0, smooth = 0.0, pen = 0.0;
    bool feasible = false;
    StaggeredField grad; // empty when infeasible
    CellField residual;
};

// J_GN and its gradient. Infeasible b yields value = +inf and no gradient.
ObjectiveEval objective_gn(const VolumePair& pair, const StaggeredField& b,
                           const ObjectiveParams& p, int threads = 1, bool need_grad = true);

// Matrix-free Gauss-Newton Hessian at a linearization point, plus the exact
// per-column tridiagonal part used by the block-Jacobi preconditioner and the
// ADMM b-update.
class GnHessian {
public:
    GnHessian(const VolumePair& pair, const StaggeredField& b, const ObjectiveParams& p,
              int threads = 1);

    StaggeredField apply(const StaggeredField& x) const;
    void apply(std::span<const double> x, std::span<double> y) const; // y = H x; x and y must not alias

    // Column-separable part: H_D + alpha*V*D1'D1 + penalty Hessian + gamma*I.
    const TridiagBlocks& column_part() const { return col_; }
    // Cross-column coupling weights alpha*V/h2^2 and alpha*V/h3^2 (0 in 2D).
    double cross_w2() const { return w2_; }
    double cross_w3() const { return w3_; }
    // Diagonal of alpha*V*(D2'D2 + D3'D3) at column (j,k).
    double cross_diag(int j, int k) const;

    // column_part plus cross_diag added to the diagonals (the block-Jacobi
    // preconditioner matrix).
    TridiagBlocks preconditioner_blocks() const;
    // Full diagonal of H (the Jacobi preconditioner).
    std::vector<double> full_diagonal() const;

    // Dense row-major assembly for small-problem diagnostics.
    std::vector<double> dense() const;

    const GridSpec& grid() const { return grid_; }

private:
    GridSpec grid_;
    TridiagBlocks col_;
    double w2_ = 0.0, w3_ = 0.0;
    int threads_ = 1;
};

namespace detail {

// Per-column residual kernel. b points at the n1 staggered values of one
// column; out pointers are m1-sized and nullable except r.
void residual_column(const AxisInterpolant& ip, const AxisInterpolant& im, const GridSpec& g,
                     const double* b, double* r, double* jlo, double* jhi, double* tp,
                     double* tm);

} // namespace detail

} // namespace epicorr
