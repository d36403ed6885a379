// Dense spectral diagnostics for small problems: eigenvalues of the
// Gauss-Newton Hessian before and after preconditioning. Intended for
// coarse-level studies only; refuses problems above `max_unknowns`.

#pragma once

#include <cstdint>
#include <vector>

#include "epicorr/objective.hpp"

namespace epicorr {

struct SpectrumResult {
    std::vector<double> plain;  // eigenvalues of H, ascending
    std::vector<double> block;  // eigenvalues of P_block^{-1} H
    std::vector<double> jacobi; // eigenvalues of P_jac^{-1} H
    std::vector<double> sgs;    // eigenvalues of P_sgs^{-1} H
};

SpectrumResult preconditioned_spectra(const GnHessian& h, std::int64_t max_unknowns = 2000);

// Fraction of eigenvalues inside [lo, hi].
double clustered_fraction(const std::vector<double>& eigs, double lo = 0.5, double hi = 2.0);

} // namespace epicorr
