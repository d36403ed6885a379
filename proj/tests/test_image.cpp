#include <cmath>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "epicorr/image.hpp"
#include "epicorr/objective.hpp"
#include "epicorr/operators.hpp"

using namespace epicorr;

namespace {

double rel_l2(const std::vector<double>& a, const std::vector<double>& ref) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ref[i]) * (a[i] - ref[i]);
        den += ref[i] * ref[i];
    }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("interp reproduces cell values and has compact support") {
    GridSpec g = GridSpec::make3d(4, 3, 2, 0.5, 1.0, 2.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    ImageVolume img(g);
    for (auto& x : img.v) x = u(rng);

    for (int k = 0; k < g.m[2]; ++k)
        for (int j = 0; j < g.m[1]; ++j)
            for (int i = 0; i < g.m[0]; ++i)
                CHECK(interp(img, {g.cell_center(0, i), g.cell_center(1, j),
                                   g.cell_center(2, k)}) ==
                      doctest::Approx(img.v[g.cell_index(i, j, k)]).epsilon(1e-14));

    CHECK(interp(img, {-5.0, 1.0, 1.0}) == 0.0);
    CHECK(interp(img, {1.0, 99.0, 1.0}) == 0.0);
    CHECK(interp_d1(img, {1.0, 99.0, 1.0}) == 0.0);

    // midpoint between centers with values 2 and 6
    GridSpec g2 = GridSpec::make2d(2, 2);
    ImageVolume two(g2, {2, 6, 2, 6});
    CHECK(interp(two, {1.0, 0.5, 0.0}) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("interp is exact on multilinear functions in the interior") {
    GridSpec g = GridSpec::make3d(6, 5, 4, 0.5, 1.0, 0.75, -1.0, 0.5, 0.0);
    auto f = [](double x, double y, double z) {
        return 2.0 + 0.3 * x - 0.7 * y + 0.1 * z + 0.25 * x * y - 0.05 * y * z + 0.02 * x * z;
    };
    ImageVolume img(g);
    for (int k = 0; k < g.m[2]; ++k)
        for (int j = 0; j < g.m[1]; ++j)
            for (int i = 0; i < g.m[0]; ++i)
                img.v[g.cell_index(i, j, k)] =
                    f(g.cell_center(0, i), g.cell_center(1, j), g.cell_center(2, k));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        // stay strictly between the first and last sample planes per axis
        const double x = g.cell_center(0, 0) + u(rng) * (g.cell_center(0, g.m[0] - 1) - g.cell_center(0, 0));
        const double y = g.cell_center(1, 0) + u(rng) * (g.cell_center(1, g.m[1] - 1) - g.cell_center(1, 0));
        const double z = g.cell_center(2, 0) + u(rng) * (g.cell_center(2, g.m[2] - 1) - g.cell_center(2, 0));
        CHECK(interp(img, {x, y, z}) == doctest::Approx(f(x, y, z)).epsilon(1e-12));
    }
}

TEST_CASE("interp_d1 is the axis-1 slope of the model") {
    GridSpec g = GridSpec::make2d(16, 4, 0.25, 1.0);
    ImageVolume ramp(g);
    for (int j = 0; j < g.m[1]; ++j)
        for (int i = 0; i < g.m[0]; ++i)
            ramp.v[g.cell_index(i, j, 0)] = g.cell_center(0, i);
    CHECK(interp_d1(ramp, {2.1, 2.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));

    ImageVolume cst(g);
    for (auto& x : cst.v) x = 3.0;
    CHECK(interp_d1(cst, {2.1, 2.0, 0.0}) == 0.0);

    // central differences away from the kinks
    ImageVolume img = phantom_gaussian(g);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.3, 0.7);
    for (int t = 0; t < 20; ++t) {
        const double x = g.origin[0] + (4 + t % 8 + u(rng)) * g.h[0];
        const double y = g.cell_center(1, 1 + t % 2);
        const double eps = 1e-7;
        const double fd =
            (interp(img, {x + eps, y, 0.0}) - interp(img, {x - eps, y, 0.0})) / (2 * eps);
        CHECK(interp_d1(img, {x, y, 0.0}) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("simulate_pair: identity, pure shift, mass conservation") {
    GridSpec g = GridSpec::make2d(64, 64);
    const ImageVolume truth = phantom_gaussian(g);

    // zero field reproduces the truth
    const VolumePair id = simulate_pair(truth, StaggeredField(g));
    for (std::int64_t i = 0; i < g.cells(); ++i) {
        CHECK(std::abs(id.plus.v[i] - truth.v[i]) <= 1e-12);
        CHECK(id.plus.v[i] == id.minus.v[i]);
    }

    // constant field is a pure shift with unit modulation
    StaggeredField shift(g);
    for (auto& x : shift.v) x = 2.5;
    const VolumePair sh = simulate_pair(truth, shift);
    for (int j = 0; j < g.m[1]; ++j)
        for (int i = 0; i < g.m[0]; ++i) {
            const double y = g.cell_center(0, i);
            const double expect_p = interp(truth, {y - 2.5, g.cell_center(1, j), 0.0});
            const double expect_m = interp(truth, {y + 2.5, g.cell_center(1, j), 0.0});
            CHECK(std::abs(sh.plus.v[g.cell_index(i, j, 0)] - expect_p) <= 1e-7);
            CHECK(std::abs(sh.minus.v[g.cell_index(i, j, 0)] - expect_m) <= 1e-7);
        }

    // mass preservation of the modulated model
    const StaggeredField b = bump_field(g, 0.5);
    const VolumePair pair = simulate_pair(truth, b);
    double m0 = 0.0, mp = 0.0, mm = 0.0;
    for (std::int64_t i = 0; i < g.cells(); ++i) {
        m0 += truth.v[i];
        mp += pair.plus.v[i];
        mm += pair.minus.v[i];
    }
    CHECK(std::abs(mp - m0) <= 0.01 * m0);
    CHECK(std::abs(mm - m0) <= 0.01 * m0);

    // infeasible field is rejected
    StaggeredField bad(g);
    for (int j = 0; j < g.m[1]; ++j)
        for (int i = 0; i <= g.m[0]; ++i) bad.v[g.face_index(i, j, 0)] = (i % 2) ? 1.0 : 0.0;
    CHECK_THROWS_AS((void)simulate_pair(truth, bad), std::invalid_argument);
}

TEST_CASE("simulate_pair noise is deterministic under a seed") {
    GridSpec g = GridSpec::make2d(16, 16);
    const ImageVolume truth = phantom_gaussian(g);
    SimulateOptions o;
    o.noise_sigma = 0.5;
    o.seed = 1234;
    const VolumePair a = simulate_pair(truth, bump_field(g, 0.3), o);
    const VolumePair b = simulate_pair(truth, bump_field(g, 0.3), o);
    CHECK(a.plus.v == b.plus.v);
    CHECK(a.minus.v == b.minus.v);
    o.seed = 99;
    const VolumePair c = simulate_pair(truth, bump_field(g, 0.3), o);
    CHECK(a.plus.v != c.plus.v);
}

TEST_CASE("correct_pair: identity, simulator round trip, residual identity") {
    GridSpec g = GridSpec::make2d(64, 64);
    const ImageVolume truth = phantom_gaussian(g);
    const StaggeredField b = bump_field(g, 0.5);
    const VolumePair pair = simulate_pair(truth, b);

    auto [same_p, same_m] = correct_pair(pair, StaggeredField(g));
    CHECK(same_p.v == pair.plus.v);
    CHECK(same_m.v == pair.minus.v);

    auto [cp, cm] = correct_pair(pair, b);
    CHECK(rel_l2(cp.v, truth.v) <= 0.02);
    CHECK(rel_l2(cm.v, truth.v) <= 0.02);

    // ||c+ - c-||^2 = 2 D(b) / V by definition of the distance
    const DistanceEval de = distance(pair, b);
    double n2 = 0.0;
    for (std::int64_t i = 0; i < g.cells(); ++i)
        n2 += (cp.v[i] - cm.v[i]) * (cp.v[i] - cm.v[i]);
    CHECK(n2 == doctest::Approx(2.0 * de.value / g.cell_volume()).epsilon(1e-12));

    // correcting with the true field removes nearly all of the disagreement
    CHECK(ssd(cp, cm) <= 0.05 * ssd(pair.plus, pair.minus));

    for (double v : cp.v) CHECK(std::isfinite(v));
}

TEST_CASE("ssd and ncc") {
    GridSpec g = GridSpec::make2d(2, 2, 0.5, 0.5);
    ImageVolume a(g, {0, 1, 2, 3});
    ImageVolume b = a;
    CHECK(ssd(a, b) == 0.0);
    CHECK(ncc(a, b) == doctest::Approx(1.0).epsilon(1e-14));

    // ssd = (V/2) * sum of squared differences
    ImageVolume c(g, {1, 1, 1, 1});
    CHECK(ssd(a, c) == doctest::Approx(0.5 * 0.25 * (1 + 0 + 1 + 4)).epsilon(1e-14));

    // perfect anticorrelation scores 1 under the squared convention
    const double mean = (0 + 1 + 2 + 3) / 4.0;
    ImageVolume anti(g);
    for (int i = 0; i < 4; ++i) anti.v[i] = -a.v[i] + 2 * mean;
    CHECK(ncc(a, anti) == doctest::Approx(1.0).epsilon(1e-14));

    CHECK_THROWS_AS((void)ncc(a, c), std::invalid_argument);
}

TEST_CASE("bump_field hits the requested derivative bound") {
    for (const auto& g : {GridSpec::make2d(64, 64), GridSpec::make2d(33, 17, 0.7, 1.3)}) {
        const StaggeredField b = bump_field(g, 0.5);
        CHECK(norm_inf(diff_x1(b).v) == doctest::Approx(0.5).epsilon(1e-12));
    }
    const GridSpec g3 = GridSpec::make3d(16, 12, 10);
    CHECK(norm_inf(diff_x1(bump_field(g3, 0.4)).v) == doctest::Approx(0.4).epsilon(1e-12));
}
