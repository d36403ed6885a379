#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "epicorr/admm.hpp"
#include "epicorr/gn_pcg.hpp"
#include "epicorr/image.hpp"
#include "epicorr/operators.hpp"
#include "support/dense_oracle.hpp"

using namespace epicorr;

namespace {

// Exhaustive oracle: enumerate all active-set sign patterns, solve each
// equality-constrained KKT system densely, keep the feasible candidate with
// nonnegative multipliers (unique for SPD G).
struct BruteResult {
    std::vector<double> x;
    double objective = std::numeric_limits<double>::infinity();
    bool found = false;
};

BruteResult brute_force_qp(int n, double h, const std::vector<double>& gdiag,
                           const std::vector<double>& goff, const std::vector<double>& c) {
    const int ncell = n - 1;
    BruteResult best;
    std::vector<int> sign(ncell, 0);
    const int patterns = int(std::pow(3, ncell));
    for (int code = 0; code < patterns; ++code) {
        int v = code;
        int na = 0;
        for (int i = 0; i < ncell; ++i, v /= 3) {
            sign[i] = v % 3 == 2 ? -1 : v % 3; // 0, +1, -1
            if (sign[i] != 0) ++na;
        }
        // bordered KKT system [G A'; A 0] [x; -lambda] = [-c; d]
        const int dim = n + na;
        oracle::Dense kkt(dim, dim);
        std::vector<double> rhs(dim, 0.0);
        for (int i = 0; i < n; ++i) {
            kkt.at(i, i) = gdiag[i];
            if (i + 1 < n) {
                kkt.at(i, i + 1) = goff[i];
                kkt.at(i + 1, i) = goff[i];
            }
            rhs[i] = -c[i];
        }
        int r = 0;
        for (int i = 0; i < ncell; ++i) {
            if (sign[i] == 0) continue;
            const double a = sign[i] / h;
            kkt.at(n + r, i) = -a;
            kkt.at(n + r, i + 1) = a;
            kkt.at(i, n + r) = -a;
            kkt.at(i + 1, n + r) = a;
            rhs[n + r] = -1.0;
            ++r;
        }
        std::vector<double> sol;
        try {
            sol = oracle::solve(kkt, rhs);
        } catch (...) {
            continue;
        }
        bool ok = true;
        r = 0;
        for (int i = 0; i < ncell && ok; ++i)
            if (sign[i] != 0 && -sol[n + r++] < -1e-9) ok = false; // lambda >= 0
        for (int i = 0; i < ncell && ok; ++i) {
            const double d = (sol[i + 1] - sol[i]) / h;
            if (std::abs(d) > 1.0 + 1e-9) ok = false;
        }
        if (!ok) continue;
        double obj = 0.0;
        for (int i = 0; i < n; ++i) {
            double gx = gdiag[i] * sol[i];
            if (i > 0) gx += goff[i - 1] * sol[i - 1];
            if (i + 1 < n) gx += goff[i] * sol[i + 1];
            obj += 0.5 * sol[i] * gx + c[i] * sol[i];
        }
        if (obj < best.objective - 1e-12) {
            best.objective = obj;
            best.x.assign(sol.begin(), sol.begin() + n);
            best.found = true;
        }
    }
    return best;
}

VolumePair test_pair(const GridSpec& g, double dinf = 0.4) {
    return simulate_pair(phantom_gaussian(g), bump_field(g, dinf));
}

} // namespace

TEST_CASE("qp_active_set: trivial and two-face cases") {
    {
        std::vector<double> gd{1, 1}, go{0, 0}, c{0, 0}, x0{0, 0};
        QpResult r = qp_active_set(2, 1.0, gd, go, c, x0, 50);
        CHECK(norm2(r.x) == 0.0);
        CHECK(r.active_sign[0] == 0);
        CHECK(r.lambda[0] == 0.0);
    }
    {
        // unconstrained optimum [3,-3] violates x2-x1 >= -1; clamps to the bound
        std::vector<double> gd{1, 1}, go{0, 0}, c{-3, 3}, x0{0, 0};
        QpResult r = qp_active_set(2, 1.0, gd, go, c, x0, 50);
        CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.x[1] == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(r.active_sign[0] == +1);
        CHECK(r.lambda[0] == doctest::Approx(2.5).epsilon(1e-12));
        CHECK(verify_qp_kkt(2, 1.0, gd, go, c, r) <= 1e-10);
    }
    {
        // infeasible start is rejected
        std::vector<double> gd{1, 1}, go{0, 0}, c{0, 0}, x0{0, 5.0};
        CHECK_THROWS_AS((void)qp_active_set(2, 1.0, gd, go, c, x0, 50), std::invalid_argument);
    }
}

TEST_CASE("qp_active_set agrees with exhaustive enumeration on 5-face columns") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 5;
    const double h = 0.8;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> gd(n), go(n, 0.0), c(n), x0(n, 0.0);
        for (int i = 0; i < n; ++i) {
            gd[i] = 2.5 + u(rng);
            c[i] = 4.0 * u(rng);
            if (i + 1 < n) go[i] = 0.9 * u(rng);
        }
        const BruteResult expect = brute_force_qp(n, h, gd, go, c);
        REQUIRE(expect.found);
        QpResult r = qp_active_set(n, h, gd, go, c, x0, 200);
        for (int i = 0; i < n; ++i) CHECK(r.x[i] == doctest::Approx(expect.x[i]).epsilon(1e-7));
        CHECK(verify_qp_kkt(n, h, gd, go, c, r) <= 1e-8);
        // constraints hold exactly after the solve
        for (int i = 0; i + 1 < n; ++i)
            CHECK(std::abs((r.x[i + 1] - r.x[i]) / h) <= 1.0 + 1e-12);
    }
}

TEST_CASE("qp_active_set cycling guard trips at the iteration cap") {
    // needs several activations; a cap of 1 cannot finish
    std::vector<double> gd{1, 1, 1}, go{0, 0, 0}, c{-9, 0, 9}, x0{0, 0, 0};
    CHECK_THROWS_AS((void)qp_active_set(3, 1.0, gd, go, c, x0, 1), std::runtime_error);
}

TEST_CASE("config validation") {
    ADMMConfig bad;
    bad.rho0 = 1.0;
    bad.rho_min = 10.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    ADMMConfig neg;
    neg.eps_abs = 0.0;
    CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("b_update: stationary at zero for identical images") {
    const GridSpec g = GridSpec::make2d(8, 6);
    const ImageVolume truth = phantom_gaussian(g);
    const VolumePair pair(truth, truth);
    ADMMState st;
    st.b = StaggeredField(g);
    st.z = StaggeredField(g);
    st.u = StaggeredField(g);
    st.rho = 100.0;
    const StaggeredField b = b_update(pair, st, {50.0, 10.0, 1e-3}, ADMMConfig{});
    CHECK(norm2(b.v) == 0.0);
}

TEST_CASE("b_update: inactive constraints reduce to the tridiagonal solve") {
    // with a zero image pair the residual vanishes identically, the
    // subproblem is exactly quadratic, and one SQP step must equal the
    // unconstrained solve G^{-1}(-c)
    const GridSpec g = GridSpec::make2d(6, 4);
    ImageVolume zero(g);
    const VolumePair pair(zero, zero);
    const ObjectiveParams params{5.0, 10.0, 1e-3};
    ADMMState st;
    st.b = StaggeredField(g);
    st.z = StaggeredField(g);
    st.u = StaggeredField(g);
    st.rho = 50.0;
    std::mt19937_64 rng(78);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (auto& x : st.z.v) x = u(rng);

    ADMMConfig cfg;
    cfg.sqp_max_iter = 1; // a single quadratic model step
    const StaggeredField b1 = b_update(pair, st, params, cfg);

    const double V = g.cell_volume();
    TridiagBlocks G(g);
    G.add_axis1_laplacian(params.alpha * V);
    G.add_identity(st.rho * V);
    StaggeredField rhs(g);
    for (std::int64_t i = 0; i < g.faces(); ++i)
        rhs.v[i] = st.rho * V * (st.z.v[i] - st.u.v[i]);
    const StaggeredField expect = tridiag_solve_batched(G, rhs);
    CHECK(norm_inf(diff_x1(expect).v) < 0.9); // constraints genuinely inactive
    for (std::int64_t i = 0; i < g.faces(); ++i)
        CHECK(b1.v[i] == doctest::Approx(expect.v[i]).epsilon(1e-11));
}

TEST_CASE("b_update converges to a fixed point on image data") {
    const GridSpec g = GridSpec::make2d(8, 6);
    const VolumePair pair = test_pair(g, 0.2);
    const ObjectiveParams params{5.0, 10.0, 1e-3};
    ADMMState st;
    st.b = StaggeredField(g);
    st.z = StaggeredField(g);
    st.u = StaggeredField(g);
    st.rho = 50.0;
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (auto& x : st.z.v) x = u(rng);

    ADMMConfig cfg;
    cfg.sqp_max_iter = 40;
    cfg.sqp_tol_rel = 1e-8;
    ADMMState st1 = st;
    st1.b = b_update(pair, st, params, cfg);
    const StaggeredField again = b_update(pair, st1, params, cfg);
    double diff = 0.0;
    for (std::int64_t i = 0; i < g.faces(); ++i)
        diff = std::max(diff, std::abs(again.v[i] - st1.b.v[i]));
    CHECK(diff <= 1e-6 * (1.0 + norm_inf(st1.b.v)));
}

TEST_CASE("b_update saturates constraints exactly when pulled past the bound") {
    const GridSpec g = GridSpec::make2d(6, 4);
    const ImageVolume truth = phantom_gaussian(g);
    const VolumePair pair(truth, truth); // no data force
    ADMMState st;
    st.b = StaggeredField(g);
    st.z = StaggeredField(g);
    st.u = StaggeredField(g);
    st.rho = 1e6; // proximal term dominates: b wants to match z
    for (int j = 0; j < g.m[1]; ++j)
        for (int i = 0; i <= g.m[0]; ++i)
            st.z.v[g.face_index(i, j, 0)] = 2.0 * i; // D1 z = 2, infeasible for b
    BUpdateStats stats;
    const StaggeredField b = b_update(pair, st, {1e-6, 0.0, 1e-3}, ADMMConfig{}, &stats);
    const CellField d = diff_x1(b);
    for (double v : d.v) {
        CHECK(v <= 1.0);
        CHECK(v >= 1.0 - 1e-9); // every cell sits on the bound
    }
    CHECK(norm_inf(d.v) <= 1.0);
    CHECK(stats.kkt_violation <= 1e-8);
}

TEST_CASE("z_update: closed form via the coupled DCT solve") {
    const GridSpec g = GridSpec::make3d(6, 5, 4, 0.5, 1.0, 1.5);
    const DctCoupledSolver dct(g);
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ADMMState st;
    st.b = StaggeredField(g);
    st.u = StaggeredField(g);
    st.rho = 3.0;
    for (auto& x : st.b.v) x = u(rng);
    for (auto& x : st.u.v) x = u(rng);

    // alpha -> 0 limit: z = b + u
    const StaggeredField z0 = z_update(st, 1e-30, dct);
    for (std::int64_t i = 0; i < g.faces(); ++i)
        CHECK(z0.v[i] == doctest::Approx(st.b.v[i] + st.u.v[i]).epsilon(1e-9));

    // constant b + u stays constant (Laplacian nullspace)
    ADMMState stc = st;
    for (auto& x : stc.b.v) x = 1.5;
    for (auto& x : stc.u.v) x = 0.75;
    const StaggeredField zc = z_update(stc, 7.0, dct);
    for (double v : zc.v) CHECK(v == doctest::Approx(2.25).epsilon(1e-12));

    // residual of the normal equations
    const double alpha = 7.0;
    const StaggeredField z = z_update(st, alpha, dct);
    const StaggeredField gz = dct.apply(z, alpha, st.rho);
    double num = 0.0, den = 0.0;
    const double w = st.rho * g.cell_volume();
    for (std::int64_t i = 0; i < g.faces(); ++i) {
        const double rhs = w * (st.b.v[i] + st.u.v[i]);
        num += (gz.v[i] - rhs) * (gz.v[i] - rhs);
        den += rhs * rhs;
    }
    CHECK(std::sqrt(num) <= 1e-10 * std::sqrt(den));
}

TEST_CASE("dual update residuals and tolerances") {
    // n = 100 faces: 4x20 cells -> (4+1)*20 = 100
    const GridSpec g = GridSpec::make2d(4, 20);
    REQUIRE(g.faces() == 100);
    StaggeredField b(g), z(g), z_old(g), u(g);
    // ||b|| = 5, ||z|| smaller
    b.v[0] = 5.0;
    z.v[0] = 1.0;
    const DualUpdate du = dual_update_and_residuals(b, z, z_old, u, 2.0, 0.2, 0.2);
    CHECK(du.eps_pri == doctest::Approx(std::sqrt(100.0) * 0.2 + 0.2 * 5.0).epsilon(1e-15));
    CHECK(du.eps_pri == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(du.primal_res == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(du.u.v[0] == doctest::Approx(4.0).epsilon(1e-15));

    // b == z: primal zero, u unchanged
    StaggeredField same(g);
    same.v[3] = 2.0;
    const DualUpdate d2 = dual_update_and_residuals(same, same, same, u, 2.0, 0.2, 0.2);
    CHECK(d2.primal_res == 0.0);
    CHECK(d2.u.v == u.v);

    // z unchanged: dual residual zero
    const DualUpdate d3 = dual_update_and_residuals(b, z, z, u, 2.0, 0.2, 0.2);
    CHECK(d3.dual_res == 0.0);
}

TEST_CASE("rho schedule") {
    CHECK(rho_schedule(RhoSchedule::fixed, 7.0, 1.0, 100.0, 1.0, 2, 2, 10) == 7.0);
    CHECK(rho_schedule(RhoSchedule::adaptive, 8.0, 1.0, 5.0, 5.0, 2, 2, 10) == 8.0);
    CHECK(rho_schedule(RhoSchedule::adaptive, 8.0, 1.0, 20.0, 1.0, 2, 2, 10) == 16.0);
    CHECK(rho_schedule(RhoSchedule::adaptive, 8.0, 1.0, 1.0, 20.0, 2, 2, 10) == 4.0);
    // bounded never drops below rho_min
    CHECK(rho_schedule(RhoSchedule::adaptive_bounded, 1.0, 1.0, 0.0, 100.0, 2, 2, 10) == 1.0);
}

TEST_CASE("admm_solve: identical images terminate at the first check") {
    const GridSpec g = GridSpec::make2d(12, 10);
    const ImageVolume truth = phantom_gaussian(g);
    const VolumePair pair(truth, truth);
    ADMMConfig cfg;
    cfg.schedule = RhoSchedule::fixed;
    cfg.rho0 = 100.0;
    cfg.rho_min = 100.0;
    AdmmSolveResult res = admm_solve(pair, ADMMState{}, {50.0, 10.0, 1e-3}, cfg);
    CHECK(res.report.converged());
    CHECK(res.report.admm.size() == 1);
    CHECK(norm2(res.state.b.v) == 0.0);
}

TEST_CASE("admm_solve: Lagrangian decrease, dual identity, feasibility") {
    const GridSpec g = GridSpec::make2d(32, 32);
    const ImageVolume truth = phantom_gaussian(g);
    const StaggeredField bt = bump_field(g, 0.5);
    const VolumePair pair = simulate_pair(truth, bt);
    const ObjectiveParams params{50.0, 10.0, 1e-3};
    ADMMConfig cfg;
    cfg.schedule = RhoSchedule::fixed;
    cfg.rho0 = 100.0;
    cfg.rho_min = 100.0;
    cfg.max_iter = 40;
    AdmmSolveResult res = admm_solve(pair, ADMMState{}, params, cfg);
    REQUIRE(res.report.admm.size() >= 5);

    // fixed rho: the augmented Lagrangian never increases
    for (std::size_t i = 1; i < res.report.admm.size(); ++i)
        CHECK(res.report.admm[i].lagrangian <=
              res.report.admm[i - 1].lagrangian * (1.0 + 1e-12) + 1e-9);

    // y = grad g(z) after the z-update
    const double w = res.state.rho * g.cell_volume();
    const std::vector<double> d2 = diff_perp(res.state.z, 2);
    const StaggeredField gz = diff_perp_adjoint(d2, 2, g);
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < g.faces(); ++i) {
        const double y = w * res.state.u.v[i];
        const double grad_g = params.alpha * g.cell_volume() * gz.v[i];
        num += (y - grad_g) * (y - grad_g);
        den += grad_g * grad_g;
    }
    CHECK(std::sqrt(num) <= 1e-8 * std::max(1.0, std::sqrt(den)));

    // every iterate feasible and KKT-verified
    CHECK(norm_inf(diff_x1(res.state.b).v) <= 1.0);
    for (const auto& row : res.report.admm) CHECK(row.kkt_violation <= 1e-8);
}

TEST_CASE("b_update is deterministic across thread counts") {
    const GridSpec g = GridSpec::make2d(24, 20);
    const VolumePair pair = test_pair(g, 0.45);
    ADMMState st;
    st.b = StaggeredField(g);
    st.z = bump_field(g, 0.4);
    st.u = StaggeredField(g);
    std::mt19937_64 rng(80);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    for (auto& x : st.u.v) x = u(rng);
    st.rho = 100.0;
    ADMMConfig c1, c4;
    c1.threads = 1;
    c4.threads = 4;
    const StaggeredField b1 = b_update(pair, st, {50.0, 10.0, 1e-3}, c1);
    const StaggeredField b4 = b_update(pair, st, {50.0, 10.0, 1e-3}, c4);
    CHECK(b1.v == b4.v);
}
