#include "epicorr/dense_diag.hpp"

#include <stdexcept>

#include <Eigen/Dense>

namespace epicorr {

namespace {

using Mat = Eigen::MatrixXd;

std::vector<double> generalized_eigs(const Mat& h, const Mat& p) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(h, p, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("preconditioned_spectra: eigensolver failed");
    const auto& ev = es.eigenvalues();
    return std::vector<double>(ev.data(), ev.data() + ev.size());
}

} // namespace

SpectrumResult preconditioned_spectra(const GnHessian& h, std::int64_t max_unknowns) {
    const std::int64_t n = h.grid().faces();
    if (n > max_unknowns)
        throw std::invalid_argument("preconditioned_spectra: problem too large for dense work (" +
                                    std::to_string(n) + " > " + std::to_string(max_unknowns) +
                                    " unknowns)");
    const std::vector<double> dense = h.dense();
    Mat H = Eigen::Map<const Mat>(dense.data(), n, n); // symmetric, ordering irrelevant

    SpectrumResult out;
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(H, Eigen::EigenvaluesOnly);
        const auto& ev = es.eigenvalues();
        out.plain.assign(ev.data(), ev.data() + ev.size());
    }
    {
        const TridiagBlocks blocks = h.preconditioner_blocks();
        Mat P = Mat::Zero(n, n);
        const int n1 = h.grid().n1();
        for (std::int64_t c = 0; c < h.grid().columns(); ++c)
            for (int i = 0; i < n1; ++i) {
                const std::int64_t f = c * n1 + i;
                P(f, f) = blocks.diag[f];
                if (i + 1 < n1) {
                    P(f, f + 1) = blocks.off[f];
                    P(f + 1, f) = blocks.off[f];
                }
            }
        out.block = generalized_eigs(H, P);
    }
    {
        Mat P = Mat::Zero(n, n);
        const std::vector<double> d = h.full_diagonal();
        for (std::int64_t i = 0; i < n; ++i) P(i, i) = d[i];
        out.jacobi = generalized_eigs(H, P);
    }
    {
        const Mat D = H.diagonal().asDiagonal();
        const Mat L = H.triangularView<Eigen::StrictlyLower>();
        const Mat U = H.triangularView<Eigen::StrictlyUpper>();
        const Mat P = (L + D) * D.inverse() * (U + D);
        out.sgs = generalized_eigs(H, P);
    }
    return out;
}

double clustered_fraction(const std::vector<double>& eigs, double lo, double hi) {
    if (eigs.empty()) return 0.0;
    std::size_t count = 0;
    for (double e : eigs)
        if (e >= lo && e <= hi) ++count;
    return double(count) / double(eigs.size());
}

} // namespace epicorr
