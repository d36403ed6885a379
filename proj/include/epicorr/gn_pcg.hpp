// Inexact Gauss-Newton with PCG inner solves.
//
// Each outer step solves H d = -g to the forcing tolerance
// ||g + H d|| <= eta ||g|| and takes b <- b + lambda d with lambda satisfying
// the Wolfe conditions. Trial points outside the feasible set evaluate to
// +inf and are rejected by the sufficient-decrease test, which keeps every
// iterate strictly feasible.

#pragma once

#include <functional>
#include <vector>

#include "epicorr/grid.hpp"
#include "epicorr/image.hpp"
#include "epicorr/objective.hpp"
#include "epicorr/report.hpp"

namespace epicorr {

enum class PrecondKind { none, jacobi, block_jacobi, sgs };

const char* to_string(PrecondKind k);
PrecondKind precond_from_string(const std::string& s);

struct GNConfig {
    double eta = 0.1; // PCG forcing parameter, in (0,1)
    int max_outer = 10;
    double eps_obj = 1e-3;
    double eps_iter = 1e-2;
    double eps_grad = 1e-2;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_pcg = 100;
    int max_ls = 30; // line-search evaluation budget
    PrecondKind precond = PrecondKind::block_jacobi;
    int threads = 1;

    void validate() const;
};

using LinOp = std::function<void(const std::vector<double>&, std::vector<double>&)>;

// Inverse application of the chosen preconditioner, built once per outer
// iteration. block_jacobi factors the per-column tridiagonal blocks; sgs uses
// forward/backward sweeps over the assembled stencil (sequential by nature).
LinOp make_preconditioner(PrecondKind kind, const GnHessian& h, int threads = 1);

struct PcgResult {
    std::vector<double> d;
    int iters = 0;
    double relres = 0.0;      // ||g + H d|| / ||g||, unpreconditioned
    double relres_prec = 0.0; // preconditioned-norm counterpart
    bool reached_tol = false;
};

// CG on H d = -g. Stops when the unpreconditioned relative residual drops to
// eta (this is the contract the outer iteration relies on) or at max_iters;
// the preconditioned norm is tracked alongside for reporting. Throws on
// nonpositive curvature (numerical breakdown of an SPD operator).
PcgResult pcg(const LinOp& apply_h, const LinOp& apply_m, const std::vector<double>& g,
              double eta, int max_iters);

// phi(t) evaluates the objective along the ray and fills dphi when the value
// is finite. Returns a step satisfying both Wolfe conditions.
struct LineSearchResult {
    double lambda = 0.0;
    int evals = 0;
    bool ok = false;
};

LineSearchResult wolfe_linesearch(const std::function<double(double, double*)>& phi, double phi0,
                                  double dphi0, double c1, double c2, int max_evals);

struct GnSolveResult {
    StaggeredField b;
    SolveReport report;
};

// b0 must be strictly feasible (the zero field always is).
GnSolveResult gauss_newton_solve(const VolumePair& pair, const StaggeredField& b0,
                                 const ObjectiveParams& params, const GNConfig& config,
                                 int level_tag = 0);

} // namespace epicorr
