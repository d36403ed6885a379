#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "epicorr/gn_pcg.hpp"
#include "epicorr/multilevel.hpp"
#include "epicorr/image.hpp"
#include "epicorr/objective.hpp"
#include "support/dense_oracle.hpp"

using namespace epicorr;

namespace {

LinOp dense_op(const oracle::Dense& m) {
    return [m](const std::vector<double>& x, std::vector<double>& y) { y = oracle::matvec(m, x); };
}

const LinOp identity_op = [](const std::vector<double>& x, std::vector<double>& y) { y = x; };

oracle::Dense random_spd(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    oracle::Dense r(n, n);
    for (auto& x : r.a) x = u(rng);
    oracle::Dense a = oracle::matmul(oracle::transpose(r), r);
    for (int i = 0; i < n; ++i) a.at(i, i) += 0.5;
    return a;
}

} // namespace

TEST_CASE("pcg basics") {
    std::vector<double> g{1.0, -2.0, 3.0, 0.5};

    PcgResult r = pcg(identity_op, identity_op, g, 0.1, 10);
    CHECK(r.iters == 1);
    CHECK(r.reached_tol);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(r.d[i] == doctest::Approx(-g[i]));

    // a perfect preconditioner solves in one iteration
    const oracle::Dense a = random_spd(12, 5);
    LinOp apply_a = dense_op(a);
    LinOp apply_ainv = [a](const std::vector<double>& x, std::vector<double>& y) {
        y = oracle::solve(a, x);
    };
    std::vector<double> g12(12);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : g12) x = u(rng);
    PcgResult rp = pcg(apply_a, apply_ainv, g12, 0.1, 20);
    CHECK(rp.iters == 1);
    CHECK(rp.reached_tol);

    // forcing contract on a random 50x50 SPD system, checked densely
    const oracle::Dense h = random_spd(50, 7);
    std::vector<double> g50(50);
    for (auto& x : g50) x = u(rng);
    PcgResult rr = pcg(dense_op(h), identity_op, g50, 0.1, 200);
    CHECK(rr.reached_tol);
    std::vector<double> resid = oracle::matvec(h, rr.d);
    for (int i = 0; i < 50; ++i) resid[i] += g50[i];
    CHECK(norm2(resid) <= 0.1 * norm2(g50) * (1.0 + 1e-10));
    CHECK(rr.relres == doctest::Approx(norm2(resid) / norm2(g50)).epsilon(1e-6));

    // nonpositive curvature is a breakdown
    LinOp neg = [](const std::vector<double>& x, std::vector<double>& y) {
        y.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = -x[i];
    };
    CHECK_THROWS_AS((void)pcg(neg, identity_op, g, 0.1, 10), std::runtime_error);

    // zero gradient short-circuits
    std::vector<double> zero(4, 0.0);
    PcgResult rz = pcg(identity_op, identity_op, zero, 0.1, 10);
    CHECK(rz.iters == 0);
    CHECK(norm2(rz.d) == 0.0);
}

TEST_CASE("wolfe line search") {
    // quadratic with exact minimizer at t = 1
    auto quad = [](double t, double* d) {
        const double f = 0.5 * (1.0 - t) * (1.0 - t);
        if (d) *d = t - 1.0;
        return f;
    };
    LineSearchResult r = wolfe_linesearch(quad, 0.5, -1.0, 1e-4, 0.9, 30);
    CHECK(r.ok);
    CHECK(r.lambda == doctest::Approx(1.0));

    // pole at t = 0.8: infinite trial values must be bracketed away
    auto barrier = [](double t, double* d) {
        if (t >= 0.8) return std::numeric_limits<double>::infinity();
        const double f = -2.0 * t + 1.0 / (0.8 - t) - 1.0 / 0.8;
        if (d) *d = -2.0 + 1.0 / ((0.8 - t) * (0.8 - t));
        return f;
    };
    double d0 = 0.0;
    (void)barrier(0.0, &d0);
    LineSearchResult rb = wolfe_linesearch(barrier, 0.0, d0, 1e-4, 0.9, 30);
    CHECK(rb.ok);
    CHECK(rb.lambda < 0.8);
    // both Wolfe inequalities hold at the returned step
    double dl = 0.0;
    const double fl = barrier(rb.lambda, &dl);
    CHECK(fl <= 0.0 + 1e-4 * rb.lambda * d0);
    CHECK(std::abs(dl) <= 0.9 * std::abs(d0));

    // non-descent directions are rejected
    LineSearchResult bad = wolfe_linesearch(quad, 0.5, +1.0, 1e-4, 0.9, 30);
    CHECK(!bad.ok);
}

TEST_CASE("preconditioners coincide on a diagonal Hessian") {
    const GridSpec g = GridSpec::make2d(6, 4);
    ImageVolume zero(g);
    const VolumePair pair(zero, zero); // H_D == 0
    const ObjectiveParams params{1e-30, 0.0, 0.5};
    const StaggeredField b(g);
    const GnHessian h(pair, b, params);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> r(g.faces());
    for (auto& x : r) x = u(rng);

    std::vector<double> zj, zb, zs;
    make_preconditioner(PrecondKind::jacobi, h)(r, zj);
    make_preconditioner(PrecondKind::block_jacobi, h)(r, zb);
    make_preconditioner(PrecondKind::sgs, h)(r, zs);
    for (std::int64_t i = 0; i < g.faces(); ++i) {
        CHECK(zj[i] == doctest::Approx(r[i] / 0.5).epsilon(1e-9));
        CHECK(zb[i] == doctest::Approx(zj[i]).epsilon(1e-9));
        CHECK(zs[i] == doctest::Approx(zj[i]).epsilon(1e-9));
    }
}

TEST_CASE("block preconditioner is exact for a column-separable Hessian") {
    const GridSpec g = GridSpec::make2d(8, 6);
    const VolumePair pair = simulate_pair(phantom_gaussian(g), bump_field(g, 0.3));
    // alpha ~ 0 removes the cross-column coupling; H is then block-tridiagonal
    const ObjectiveParams params{1e-30, 10.0, 1e-3};
    const StaggeredField b(g);
    const GnHessian h(pair, b, params);

    LinOp apply_h = [&h](const std::vector<double>& x, std::vector<double>& y) {
        y.resize(x.size());
        h.apply(x, y);
    };
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> grad(g.faces());
    for (auto& x : grad) x = u(rng);
    PcgResult r = pcg(apply_h, make_preconditioner(PrecondKind::block_jacobi, h), grad, 0.1, 50);
    CHECK(r.iters == 1);
    CHECK(r.reached_tol);
}

TEST_CASE("gauss_newton_solve: identical images stop immediately") {
    const GridSpec g = GridSpec::make2d(16, 16);
    const ImageVolume truth = phantom_gaussian(g);
    const VolumePair pair(truth, truth);
    GNConfig cfg;
    GnSolveResult res = gauss_newton_solve(pair, StaggeredField(g), {50.0, 10.0, 1e-3}, cfg);
    CHECK(res.report.converged());
    CHECK(res.report.gn.size() == 1);
    CHECK(norm2(res.b.v) == 0.0);
}

TEST_CASE("gauss_newton_solve: descent, feasibility, forcing contract") {
    const GridSpec g = GridSpec::make2d(64, 64);
    const ImageVolume truth = phantom_gaussian(g);
    const StaggeredField b_true = bump_field(g, 0.5);
    const VolumePair pair = simulate_pair(truth, b_true);
    const ObjectiveParams params{50.0, 10.0, 1e-3};
    GNConfig cfg;
    cfg.max_outer = 10;
    cfg.precond = PrecondKind::block_jacobi;

    GnSolveResult res = gauss_newton_solve(pair, StaggeredField(g), params, cfg);
    REQUIRE(res.report.gn.size() >= 2);

    // J strictly decreases over accepted iterations
    for (std::size_t i = 1; i < res.report.gn.size(); ++i)
        CHECK(res.report.gn[i].j_value < res.report.gn[i - 1].j_value);
    // every inner solve honors the forcing contract
    for (std::size_t i = 1; i < res.report.gn.size(); ++i)
        CHECK(res.report.gn[i].pcg_relres <= cfg.eta * (1.0 + 1e-12));

    CHECK(norm_inf(diff_x1(res.b).v) < 1.0);

    auto [cp, cm] = correct_pair(pair, res.b);
    CHECK(ssd(cp, cm) <= 0.10 * ssd(pair.plus, pair.minus));
}

TEST_CASE("coarse-to-fine GN recovers the ground-truth field") {
    const GridSpec g = GridSpec::make2d(64, 64);
    const ImageVolume truth = phantom_gaussian(g);
    const StaggeredField b_true = bump_field(g, 0.5);
    const VolumePair pair = simulate_pair(truth, b_true);
    const ObjectiveParams params{50.0, 10.0, 1e-3};
    GNConfig cfg;

    const MultilevelResult res = multilevel_solve(pair, default_schedule(g), SolverKind::gn,
                                                  params, cfg, ADMMConfig{});
    double err = 0.0;
    for (std::int64_t i = 0; i < g.faces(); ++i)
        err += (res.b.v[i] - b_true.v[i]) * (res.b.v[i] - b_true.v[i]);
    err = std::sqrt(err) / norm2(b_true.v);
    CHECK(err <= 0.15);

    auto [cp, cm] = correct_pair(pair, res.b);
    CHECK(ssd(cp, cm) <= 0.10 * ssd(pair.plus, pair.minus));
}

TEST_CASE("PCG iteration counts are equivariant under column reordering") {
    // flipping axis 2 of both volumes permutes the columns; the block
    // structure and thus the inner iteration counts must not change
    const GridSpec g = GridSpec::make2d(24, 20);
    const VolumePair pair = simulate_pair(phantom_gaussian(g), bump_field(g, 0.4));
    ImageVolume fp(g), fm(g);
    for (int j = 0; j < g.m[1]; ++j)
        for (int i = 0; i < g.m[0]; ++i) {
            fp.v[g.cell_index(i, g.m[1] - 1 - j, 0)] = pair.plus.v[g.cell_index(i, j, 0)];
            fm.v[g.cell_index(i, g.m[1] - 1 - j, 0)] = pair.minus.v[g.cell_index(i, j, 0)];
        }
    const VolumePair flipped(fp, fm);
    GNConfig cfg;
    const ObjectiveParams params{50.0, 10.0, 1e-3};
    const GnSolveResult a = gauss_newton_solve(pair, StaggeredField(g), params, cfg);
    const GnSolveResult b = gauss_newton_solve(flipped, StaggeredField(g), params, cfg);
    REQUIRE(a.report.gn.size() == b.report.gn.size());
    for (std::size_t i = 0; i < a.report.gn.size(); ++i)
        CHECK(a.report.gn[i].pcg_iters == b.report.gn[i].pcg_iters);
}

TEST_CASE("gn config validation") {
    GNConfig bad;
    bad.eta = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    GNConfig c12;
    c12.wolfe_c1 = 0.95;
    CHECK_THROWS_AS(c12.validate(), std::invalid_argument);
}

TEST_CASE("the optional field-magnitude box flags runaway fields") {
    const GridSpec g = GridSpec::make2d(8, 6);
    const VolumePair pair = simulate_pair(phantom_gaussian(g), bump_field(g, 0.3));
    StaggeredField big(g);
    for (auto& x : big.v) x = 100.0; // constant: feasible for D1, far outside the box
    CHECK(!within_linf_box(big));
    ObjectiveParams boxed{50.0, 10.0, 1e-3, true};
    CHECK(!objective_gn(pair, big, boxed).feasible);
    ObjectiveParams open7{50.0, 10.0, 1e-3, false};
    CHECK(objective_gn(pair, big, open7).feasible);
}

TEST_CASE("infeasible starting guesses are rejected") {
    const GridSpec g = GridSpec::make2d(8, 6);
    const VolumePair pair = simulate_pair(phantom_gaussian(g), bump_field(g, 0.3));
    StaggeredField bad(g);
    for (int j = 0; j < g.m[1]; ++j)
        for (int i = 0; i <= g.m[0]; ++i) bad.v[g.face_index(i, j, 0)] = (i % 2) ? 1.5 : 0.0;
    CHECK_THROWS_AS((void)gauss_newton_solve(pair, bad, {50.0, 10.0, 1e-3}, GNConfig{}),
                    std::invalid_argument);
}
