#include "epicorr/image.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "epicorr/operators.hpp"
#include "epicorr/parallel.hpp"

namespace epicorr {

ImageVolume::ImageVolume(const GridSpec& g, std::vector<double> values)
    : grid(g), v(std::move(values)) {
    if (std::int64_t(v.size()) != g.cells())
        throw std::invalid_argument("ImageVolume: values length does not match grid");
}

VolumePair::VolumePair(ImageVolume p, ImageVolume m) : plus(std::move(p)), minus(std::move(m)) {
    if (!(plus.grid == minus.grid))
        throw std::invalid_argument("VolumePair: volumes must share one grid");
}

double AxisInterpolant::value(double x) const {
    const double u = (x - origin) / h - 0.5; // sample i sits at u == i
    if (u <= -0.5 || u >= m - 0.5) return 0.0;
    if (u <= 0.0) return (u + 0.5) * 2.0 * samples[0];
    if (u >= m - 1.0) return (m - 0.5 - u) * 2.0 * samples[m - 1];
    const double fi = std::floor(u);
    const int i = int(fi);
    const double w = u - fi;
    return (1.0 - w) * samples[i] + w * samples[i + 1];
}

double AxisInterpolant::slope(double x) const {
    const double u = (x - origin) / h - 0.5;
    if (u <= -0.5 || u > m - 0.5) return 0.0;
    if (u <= 0.0) return 2.0 * samples[0] / h;
    if (u > m - 1.0) return -2.0 * samples[m - 1] / h;
    // left-interval slope at interior kinks
    double fi = std::floor(u);
    if (fi == u) fi -= 1.0;
    const int i = int(fi);
    if (i < 0) return 2.0 * samples[0] / h;
    return (samples[i + 1] - samples[i]) / h;
}

AxisInterpolant image_column(const ImageVolume& img, int j, int k) {
    const GridSpec& g = img.grid;
    return AxisInterpolant{img.v.data() + std::int64_t(g.m[0]) * (j + std::int64_t(g.m[1]) * k),
                           g.m[0], g.h[0], g.origin[0]};
}

namespace {

// Two-tap decomposition of the 1D interpolant at coordinate x: value is
// w[0]*sample(i[0]) + w[1]*sample(i[1]) with index -1 meaning a zero ghost.
struct AxisTaps {
    int i[2];
    double w[2];
};

AxisTaps axis_taps(double x, double origin, double h, int m) {
    const double u = (x - origin) / h - 0.5;
    if (u <= -0.5 || u >= m - 0.5) return {{-1, -1}, {0.0, 0.0}};
    if (u <= 0.0) return {{0, -1}, {(u + 0.5) * 2.0, 0.0}};
    if (u >= m - 1.0) return {{m - 1, -1}, {(m - 0.5 - u) * 2.0, 0.0}};
    const double fi = std::floor(u);
    const int i = int(fi);
    const double w = u - fi;
    return {{i, i + 1}, {1.0 - w, w}};
}

// Taps of the axis-1 derivative, using the left-interval slope at kinks.
AxisTaps axis_taps_d1(double x, double origin, double h, int m) {
    const double u = (x - origin) / h - 0.5;
    if (u <= -0.5 || u > m - 0.5) return {{-1, -1}, {0.0, 0.0}};
    if (u <= 0.0) return {{0, -1}, {2.0 / h, 0.0}};
    if (u > m - 1.0) return {{m - 1, -1}, {-2.0 / h, 0.0}};
    double fi = std::floor(u);
    if (fi == u) fi -= 1.0;
    const int i = int(fi);
    if (i < 0) return {{0, -1}, {2.0 / h, 0.0}};
    return {{i, i + 1}, {-1.0 / h, 1.0 / h}};
}

double gather(const ImageVolume& img, const AxisTaps& t1, const AxisTaps& t2,
              const AxisTaps& t3) {
    const GridSpec& g = img.grid;
    double acc = 0.0;
    for (int c = 0; c < 2; ++c) {
        if (t3.i[c] < 0) continue; // zero ghost
        for (int b = 0; b < 2; ++b) {
            if (t2.i[b] < 0) continue;
            const double wjk = t3.w[c] * t2.w[b];
            for (int a = 0; a < 2; ++a) {
                if (t1.i[a] < 0) continue;
                acc += wjk * t1.w[a] * img.v[g.cell_index(t1.i[a], t2.i[b], t3.i[c])];
            }
        }
    }
    return acc;
}

} // namespace

double interp(const ImageVolume& img, const std::array<double, 3>& x) {
    const GridSpec& g = img.grid;
    const AxisTaps t1 = axis_taps(x[0], g.origin[0], g.h[0], g.m[0]);
    const AxisTaps t2 = axis_taps(x[1], g.origin[1], g.h[1], g.m[1]);
    const AxisTaps t3 = g.dim == 3 ? axis_taps(x[2], g.origin[2], g.h[2], g.m[2])
                                   : AxisTaps{{0, -1}, {1.0, 0.0}};
    return gather(img, t1, t2, t3);
}

double interp_d1(const ImageVolume& img, const std::array<double, 3>& x) {
    const GridSpec& g = img.grid;
    const AxisTaps t1 = axis_taps_d1(x[0], g.origin[0], g.h[0], g.m[0]);
    const AxisTaps t2 = axis_taps(x[1], g.origin[1], g.h[1], g.m[1]);
    const AxisTaps t3 = g.dim == 3 ? axis_taps(x[2], g.origin[2], g.h[2], g.m[2])
                                   : AxisTaps{{0, -1}, {1.0, 0.0}};
    return gather(img, t1, t2, t3);
}

std::vector<double> interp(const ImageVolume& img, const std::vector<std::array<double, 3>>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = interp(img, pts[i]);
    return out;
}

std::vector<double> interp_d1(const ImageVolume& img,
                              const std::vector<std::array<double, 3>>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = interp_d1(img, pts[i]);
    return out;
}

namespace {

// Piecewise-linear field along one staggered column: values at faces
// origin + i*h, clamped constant outside.
struct FieldLine {
    const double* faces;
    int n1;
    double h;
    double origin;

    double value(double x) const {
        const double u = (x - origin) / h;
        if (u <= 0.0) return faces[0];
        if (u >= n1 - 1) return faces[n1 - 1];
        const double fi = std::floor(u);
        const int i = int(fi);
        const double w = u - fi;
        return (1.0 - w) * faces[i] + w * faces[i + 1];
    }
    double slope(double x) const {
        const double u = (x - origin) / h;
        if (u <= 0.0 || u >= n1 - 1) return 0.0;
        double fi = std::floor(u);
        if (fi == u) fi -= 1.0;
        const int i = std::max(0, int(fi));
        return (faces[i + 1] - faces[i]) / h;
    }
};

// Solve psi(x) = x + s*b(x) = y for the strictly monotone map by bisection.
double invert_monotone(const FieldLine& b, double sign, double y, double tol) {
    double bmax = 0.0;
    for (int i = 0; i < b.n1; ++i) bmax = std::max(bmax, std::abs(b.faces[i]));
    if (bmax == 0.0) return y;
    double lo = y - bmax, hi = y + bmax;
    auto psi = [&](double x) { return x + sign * b.value(x) - y; };
    double flo = psi(lo), fhi = psi(hi);
    // psi is increasing, so any widening terminates immediately
    while (flo > 0.0) { lo -= bmax + b.h; flo = psi(lo); }
    while (fhi < 0.0) { hi += bmax + b.h; fhi = psi(hi); }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (psi(mid) <= 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

VolumePair simulate_pair(const ImageVolume& truth, const StaggeredField& b_true,
                         const SimulateOptions& opts) {
    const GridSpec& g = truth.grid;
    if (!(b_true.grid == g))
        throw std::invalid_argument("simulate_pair: field and truth grids differ");
    const CellField d1 = diff_x1(b_true);
    const double dmax = norm_inf(d1.v);
    if (dmax > 1.0 - opts.feas_margin)
        throw std::invalid_argument("simulate_pair: field infeasible, max|D1 b| = " +
                                    std::to_string(dmax));

    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1], m3 = g.m[2];
    ImageVolume iplus(g), iminus(g);
    const double tol = 1e-10 * g.h[0];
    for (int k = 0; k < m3; ++k)
        for (int j = 0; j < m2; ++j) {
            const AxisInterpolant tr = image_column(truth, j, k);
            const FieldLine fl{b_true.v.data() + std::int64_t(n1) * (j + std::int64_t(m2) * k),
                               n1, g.h[0], g.origin[0]};
            double* up = iplus.v.data() + std::int64_t(m1) * (j + std::int64_t(m2) * k);
            double* um = iminus.v.data() + std::int64_t(m1) * (j + std::int64_t(m2) * k);
            for (int i = 0; i < m1; ++i) {
                const double y = g.cell_center(0, i);
                const double xp = invert_monotone(fl, +1.0, y, tol);
                up[i] = tr.value(xp) / (1.0 + fl.slope(xp));
                const double xm = invert_monotone(fl, -1.0, y, tol);
                um[i] = tr.value(xm) / (1.0 - fl.slope(xm));
            }
        }

    if (opts.noise_sigma > 0.0) {
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> noise(0.0, opts.noise_sigma);
        for (double& x : iplus.v) x += noise(rng);
        for (double& x : iminus.v) x += noise(rng);
    }
    return VolumePair(std::move(iplus), std::move(iminus));
}

std::pair<ImageVolume, ImageVolume> correct_pair(const VolumePair& pair, const StaggeredField& b,
                                                 int threads) {
    const GridSpec& g = pair.grid();
    if (!(b.grid == g)) throw std::invalid_argument("correct_pair: field grid mismatch");
    const CellField d1 = diff_x1(b);
    if (norm_inf(d1.v) > 1.0)
        throw std::invalid_argument("correct_pair: field infeasible, |D1 b| > 1");

    const int m1 = g.m[0], n1 = g.n1(), m2 = g.m[1];
    ImageVolume cp(g), cm(g);
    parallel_for(g.columns(), threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const int j = int(c % m2), k = int(c / m2);
            const AxisInterpolant ip = image_column(pair.plus, j, k);
            const AxisInterpolant im = image_column(pair.minus, j, k);
            const double* bc = b.v.data() + c * n1;
            double* op = cp.v.data() + c * m1;
            double* om = cm.v.data() + c * m1;
            for (int i = 0; i < m1; ++i) {
                const double xc = g.cell_center(0, i);
                const double a = 0.5 * (bc[i] + bc[i + 1]);
                const double d = (bc[i + 1] - bc[i]) / g.h[0];
                op[i] = ip.value(xc + a) * (1.0 + d);
                om[i] = im.value(xc - a) * (1.0 - d);
            }
        }
    });
    return {std::move(cp), std::move(cm)};
}

double ssd(const ImageVolume& a, const ImageVolume& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("ssd: grids differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return 0.5 * a.grid.cell_volume() * s;
}

double ncc(const ImageVolume& a, const ImageVolume& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("ncc: grids differ");
    const std::size_t n = a.v.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) { ma += a.v[i]; mb += b.v[i]; }
    ma /= double(n);
    mb /= double(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.v[i] - ma, db = b.v[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw std::invalid_argument("ncc: zero-variance image");
    return (sab * sab) / (saa * sbb);
}

ImageVolume phantom_gaussian(const GridSpec& g, double amplitude) {
    ImageVolume img(g);
    const std::array<double, 3> center{g.origin[0] + 0.52 * g.extent(0),
                                       g.origin[1] + 0.47 * g.extent(1),
                                       g.origin[2] + 0.5 * g.extent(2)};
    // anisotropic widths relative to the domain
    const std::array<double, 3> sigma{0.23 * g.extent(0), 0.34 * g.extent(1),
                                      0.29 * std::max(g.extent(2), g.h[2])};
    for (int k = 0; k < g.m[2]; ++k)
        for (int j = 0; j < g.m[1]; ++j)
            for (int i = 0; i < g.m[0]; ++i) {
                double e = 0.0;
                const std::array<int, 3> idx{i, j, k};
                for (int a = 0; a < g.dim; ++a) {
                    const double t = (g.cell_center(a, idx[a]) - center[a]) / sigma[a];
                    e += t * t;
                }
                img.v[g.cell_index(i, j, k)] = amplitude * std::exp(-0.5 * e);
            }
    return img;
}

ImageVolume phantom_checker(const GridSpec& g, double amplitude) {
    // smoothed checkerboard: products of soft square waves
    ImageVolume img(g);
    auto soft = [](double t) { return std::tanh(3.0 * std::sin(t)); };
    const double cycles = 3.0;
    for (int k = 0; k < g.m[2]; ++k)
        for (int j = 0; j < g.m[1]; ++j)
            for (int i = 0; i < g.m[0]; ++i) {
                double p = 1.0;
                const std::array<int, 3> idx{i, j, k};
                for (int a = 0; a < g.dim; ++a) {
                    const double t = (g.cell_center(a, idx[a]) - g.origin[a]) / g.extent(a);
                    p *= soft(2.0 * std::numbers::pi * cycles * t);
                }
                // taper to keep compact support plausible
                double w = 1.0;
                for (int a = 0; a < g.dim; ++a) {
                    const double t = (g.cell_center(a, idx[a]) - g.origin[a]) / g.extent(a);
                    w *= std::sin(std::numbers::pi * t);
                }
                img.v[g.cell_index(i, j, k)] = amplitude * 0.5 * (1.0 + p) * w;
            }
    return img;
}

StaggeredField bump_field(const GridSpec& g, double d1_target) {
    StaggeredField b(g);
    for (int k = 0; k < g.m[2]; ++k)
        for (int j = 0; j < g.m[1]; ++j)
            for (int i = 0; i <= g.m[0]; ++i) {
                double p = std::sin(std::numbers::pi * (g.face1_coord(i) - g.origin[0]) /
                                    g.extent(0));
                p *= std::sin(std::numbers::pi * (g.cell_center(1, j) - g.origin[1]) /
                              g.extent(1));
                if (g.dim == 3)
                    p *= std::sin(std::numbers::pi * (g.cell_center(2, k) - g.origin[2]) /
                                  g.extent(2));
                b.v[g.face_index(i, j, k)] = p;
            }
    const double dmax = norm_inf(diff_x1(b).v);
    if (dmax > 0.0) scale(b.v, d1_target / dmax);
    return b;
}

} // namespace epicorr
