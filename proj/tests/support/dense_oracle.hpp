// Dense reference implementations used as test oracles. The operators are
// assembled literally from their Kronecker-product definitions, independent of
// the stencil loops in the library.

#pragma once

#include <vector>

#include "epicorr/grid.hpp"

namespace oracle {

struct Dense {
    int rows = 0, cols = 0;
    std::vector<double> a; // row-major

    Dense() = default;
    Dense(int r, int c) : rows(r), cols(c), a(std::size_t(r) * c, 0.0) {}
    double& at(int r, int c) { return a[std::size_t(r) * cols + c]; }
    double at(int r, int c) const { return a[std::size_t(r) * cols + c]; }
};

Dense identity(int n);
Dense kron(const Dense& x, const Dense& y);
Dense transpose(const Dense& x);
Dense matmul(const Dense& x, const Dense& y);
std::vector<double> matvec(const Dense& x, const std::vector<double>& v);

// 1D forward difference, (m-1) x m, scaled by 1/h.
Dense dtilde(int m, double h);
// 1D two-point average, m x (m+1).
Dense atilde(int m);

// Operators on the staggered/cell grids, axis-1-fastest ordering.
Dense avg_a1(const epicorr::GridSpec& g);  // cells x faces
Dense diff_d1(const epicorr::GridSpec& g); // cells x faces
Dense diff_d2(const epicorr::GridSpec& g);
Dense diff_d3(const epicorr::GridSpec& g);
// V * (D1'D1 + D2'D2 [+ D3'D3])
Dense smoother_hessian(const epicorr::GridSpec& g);

// Dense linear algebra (via Eigen).
std::vector<double> solve(const Dense& x, const std::vector<double>& rhs);
std::vector<double> sym_eigenvalues(const Dense& x); // ascending

} // namespace oracle
