// Non-convex ADMM for the constrained correction problem.
//
// The objective splits into a column-separable part and the cross-column
// coupling:
//
//   f(b) = D(b) + (alpha*V/2) ||D1 b||^2   (constrained: -1 <= D1 b <= 1)
//   g(z) = (alpha*V/2) (||D2 z||^2 + ||D3 z||^2)
//
// minimized subject to b = z via the scaled iteration
//
//   b <- argmin  i_C(b) + f(b) + (rho*V/2) ||b - z + u||^2   (per-column SQP)
//   z <- Gt^{-1} (rho*V (b + u))                             (DCT direct solve)
//   u <- u + b - z
//
// with Boyd-style residual stopping and optional adaptation of rho bounded
// below by rho_min. Every b iterate satisfies the constraints exactly.

#pragma once

#include <span>
#include <vector>

#include "epicorr/grid.hpp"
#include "epicorr/image.hpp"
#include "epicorr/objective.hpp"
#include "epicorr/operators.hpp"
#include "epicorr/report.hpp"

namespace epicorr {

enum class RhoSchedule { fixed, adaptive, adaptive_bounded };

const char* to_string(RhoSchedule s);
RhoSchedule rho_schedule_from_string(const std::string& s);

struct ADMMConfig {
    double rho0 = 1e6;    // initial rho (and the fixed value under `fixed`)
    double rho_min = 1e2; // lower bound under `adaptive_bounded`
    RhoSchedule schedule = RhoSchedule::adaptive_bounded;
    double eps_abs = 0.2;
    double eps_rel = 0.2;
    int max_iter = 50; // per level
    double tau_incr = 2.0, tau_decr = 2.0, mu = 10.0;
    int sqp_max_iter = 20;
    double sqp_tol_rel = 1e-2; // stop SQP when the QP step shrinks by this factor
    bool check_kkt = true;     // verify every column QP solution independently
    int threads = 1;

    void validate() const;
};

struct ADMMState {
    StaggeredField b, z, u; // u is the scaled dual y/(rho*V)
    double rho = 0.0;
    int iter = 0;
    double lagrangian = 0.0;
};

// --- column QP ------------------------------------------------------------
//
// min 1/2 x'Gx + c'x  s.t.  -1 <= (x_{i+1}-x_i)/h <= 1 for every cell i,
// solved by the primal active-set method; each KKT step eliminates the step
// through the tridiagonal factorization of G and solves the small Schur
// system for the multipliers of the active rows.

struct QpResult {
    std::vector<double> x;
    std::vector<double> lambda;   // per cell: multiplier of its active row (0 if inactive)
    std::vector<int> active_sign; // per cell: 0 none, +1 lower bound, -1 upper bound
    int iters = 0;
};

// x0 must be feasible; throws std::runtime_error on the cycling guard.
QpResult qp_active_set(int n, double h, std::span<const double> gdiag,
                       std::span<const double> goff, std::span<const double> c,
                       std::span<const double> x0, int max_iter);

// Largest normalized KKT residual (stationarity, primal/dual feasibility,
// complementary slackness), recomputed from G, c, x and the multipliers.
double verify_qp_kkt(int n, double h, std::span<const double> gdiag,
                     std::span<const double> goff, std::span<const double> c, const QpResult& r);

// --- ADMM steps -------------------------------------------------------------

double f_value(const VolumePair& pair, const StaggeredField& b, double alpha, int threads = 1);
double g_value(const StaggeredField& z, double alpha);
double augmented_lagrangian(const VolumePair& pair, const StaggeredField& b,
                            const StaggeredField& z, const StaggeredField& u, double rho,
                            double alpha, int threads = 1);

struct BUpdateStats {
    long sqp_iters = 0;
    long qp_iters = 0;
    double kkt_violation = 0.0;
};

// Approximately minimizes the b-subproblem per column, warm-started at
// state.b; the result never increases the subproblem objective and satisfies
// the constraints exactly.
StaggeredField b_update(const VolumePair& pair, const ADMMState& state,
                        const ObjectiveParams& params, const ADMMConfig& config,
                        BUpdateStats* stats = nullptr);

// Closed-form z-subproblem via the coupled DCT solver.
StaggeredField z_update(const ADMMState& state, double alpha, const DctCoupledSolver& dct);

struct DualUpdate {
    StaggeredField u;
    double primal_res = 0.0, dual_res = 0.0;
    double eps_pri = 0.0, eps_dual = 0.0;
};

DualUpdate dual_update_and_residuals(const StaggeredField& b_new, const StaggeredField& z_new,
                                     const StaggeredField& z_old, const StaggeredField& u_old,
                                     double rho, double eps_abs, double eps_rel);

// One adaptation step; `fixed` returns rho unchanged. The caller rescales u
// by rho/rho' to keep the unscaled multiplier continuous.
double rho_schedule(RhoSchedule schedule, double rho, double rho_min, double primal_res,
                    double dual_res, double tau_incr, double tau_decr, double mu);

struct AdmmSolveResult {
    ADMMState state;
    SolveReport report;
};

// init fields may be empty (zero start). init.rho <= 0 selects config.rho0.
AdmmSolveResult admm_solve(const VolumePair& pair, ADMMState init, const ObjectiveParams& params,
                           const ADMMConfig& config, int level_tag = 0);

} // namespace epicorr
