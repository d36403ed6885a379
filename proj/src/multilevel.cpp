#include "epicorr/multilevel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "epicorr/operators.hpp"

namespace epicorr {

void LevelSchedule::validate() const {
    if (grids.empty()) throw std::invalid_argument("LevelSchedule: no levels");
    for (const auto& g : grids) g.validate();
    for (std::size_t l = 1; l < grids.size(); ++l)
        for (int a = 0; a < 3; ++a)
            if (grids[l - 1].m[a] > grids[l].m[a])
                throw std::invalid_argument("LevelSchedule: levels must be ordered coarse to fine");
    if (!overrides.empty() && overrides.size() != grids.size())
        throw std::invalid_argument("LevelSchedule: overrides must match the level count");
}

LevelSchedule default_schedule(const GridSpec& fine, int max_levels, int min_cells) {
    fine.validate();
    LevelSchedule s;
    s.grids.push_back(fine);
    GridSpec cur = fine;
    while (int(s.grids.size()) < max_levels) {
        GridSpec next = cur;
        bool ok = true;
        for (int a = 0; a < fine.dim; ++a) {
            next.m[a] = (cur.m[a] + 1) / 2;
            if (next.m[a] < min_cells) ok = false;
            next.h[a] = fine.extent(a) / next.m[a];
        }
        if (!ok || next.m == cur.m) break;
        s.grids.push_back(next);
        cur = next;
    }
    std::reverse(s.grids.begin(), s.grids.end());
    return s;
}

void truncate_to_finest(LevelSchedule& s, int levels) {
    if (levels < 1) throw std::invalid_argument("truncate_to_finest: need at least one level");
    if (levels < int(s.grids.size()))
        s.grids.erase(s.grids.begin(), s.grids.end() - levels);
    if (!s.overrides.empty() && int(s.overrides.size()) > levels)
        s.overrides.erase(s.overrides.begin(), s.overrides.end() - levels);
}

namespace {

// Overlap weights of one coarse interval against the fine intervals along one
// axis; both discretize [0, L].
struct AxisWeights {
    std::vector<int> first;            // first fine index per coarse index
    std::vector<std::vector<double>> w; // overlap/Hc
};

AxisWeights make_axis_weights(int mf, int mc, double L) {
    AxisWeights aw;
    aw.first.resize(mc);
    aw.w.resize(mc);
    const double hf = L / mf, hc = L / mc;
    for (int c = 0; c < mc; ++c) {
        const double lo = c * hc, hi = (c + 1) * hc;
        int f0 = std::max(0, int(std::floor(lo / hf + 1e-12)));
        aw.first[c] = f0;
        for (int f = f0; f < mf; ++f) {
            const double flo = f * hf, fhi = (f + 1) * hf;
            if (flo >= hi - 1e-12 * hc && f > f0) break;
            const double ov = std::min(hi, fhi) - std::max(lo, flo);
            if (ov <= 0.0) {
                if (f == f0) { aw.first[c] = f + 1; continue; }
                break;
            }
            aw.w[c].push_back(ov / hc);
        }
    }
    return aw;
}

std::vector<double> restrict_axis(const std::vector<double>& in, std::int64_t pre, int mf,
                                  std::int64_t post, const AxisWeights& aw) {
    const int mc = int(aw.first.size());
    std::vector<double> out(pre * mc * post, 0.0);
    for (std::int64_t p = 0; p < post; ++p)
        for (int c = 0; c < mc; ++c) {
            double* o = out.data() + pre * (c + std::int64_t(mc) * p);
            for (std::size_t t = 0; t < aw.w[c].size(); ++t) {
                const int f = aw.first[c] + int(t);
                const double wt = aw.w[c][t];
                const double* s = in.data() + pre * (f + std::int64_t(mf) * p);
                for (std::int64_t i = 0; i < pre; ++i) o[i] += wt * s[i];
            }
        }
    return out;
}

} // namespace

ImageVolume restrict_image(const ImageVolume& img, const GridSpec& coarse) {
    const GridSpec& fine = img.grid;
    coarse.validate();
    if (coarse.dim != fine.dim)
        throw std::invalid_argument("restrict_image: dimension mismatch");
    for (int a = 0; a < 3; ++a) {
        if (coarse.m[a] > fine.m[a])
            throw std::invalid_argument("restrict_image: coarse grid larger than fine");
        if (std::abs(coarse.extent(a) - fine.extent(a)) > 1e-9 * std::max(1.0, fine.extent(a)) ||
            std::abs(coarse.origin[a] - fine.origin[a]) > 1e-12 * std::max(1.0, fine.extent(a)))
            throw std::invalid_argument("restrict_image: domains differ");
    }
    std::vector<double> data = img.v;
    // axis 1
    {
        const AxisWeights aw = make_axis_weights(fine.m[0], coarse.m[0], fine.extent(0));
        data = restrict_axis(data, 1, fine.m[0], std::int64_t(fine.m[1]) * fine.m[2], aw);
    }
    // axis 2
    {
        const AxisWeights aw = make_axis_weights(fine.m[1], coarse.m[1], fine.extent(1));
        data = restrict_axis(data, coarse.m[0], fine.m[1], fine.m[2], aw);
    }
    // axis 3
    if (fine.dim == 3 && fine.m[2] != coarse.m[2]) {
        const AxisWeights aw = make_axis_weights(fine.m[2], coarse.m[2], fine.extent(2));
        data = restrict_axis(data, std::int64_t(coarse.m[0]) * coarse.m[1], fine.m[2], 1, aw);
    }
    return ImageVolume(coarse, std::move(data));
}

namespace {

struct Tap {
    int i0, i1;
    double w1; // value = (1-w1)*v[i0] + w1*v[i1]
};

// Linear interpolation tables: fine face/center coordinate against the coarse
// sample coordinates c0 + idx*step, idx = 0..count-1, clamped at the ends.
std::vector<Tap> make_taps(int count_f, double x0f, double stepf, int count_c, double x0c,
                           double stepc) {
    std::vector<Tap> taps(count_f);
    for (int i = 0; i < count_f; ++i) {
        const double x = x0f + i * stepf;
        double u = (x - x0c) / stepc;
        if (u <= 0.0) taps[i] = {0, 0, 0.0};
        else if (u >= count_c - 1) taps[i] = {count_c - 1, count_c - 1, 0.0};
        else {
            const int i0 = int(std::floor(u));
            taps[i] = {i0, std::min(i0 + 1, count_c - 1), u - i0};
        }
    }
    return taps;
}

} // namespace

StaggeredField prolong_field(const StaggeredField& b_coarse, const GridSpec& fine) {
    const GridSpec& coarse = b_coarse.grid;
    fine.validate();
    if (fine.dim != coarse.dim)
        throw std::invalid_argument("prolong_field: dimension mismatch");
    for (int a = 0; a < 3; ++a) {
        if (fine.m[a] < coarse.m[a])
            throw std::invalid_argument("prolong_field: fine grid smaller than coarse");
        if (std::abs(coarse.extent(a) - fine.extent(a)) > 1e-9 * std::max(1.0, fine.extent(a)))
            throw std::invalid_argument("prolong_field: domains differ");
    }
    const auto t1 = make_taps(fine.n1(), fine.origin[0], fine.h[0], coarse.n1(), coarse.origin[0],
                              coarse.h[0]);
    const auto t2 = make_taps(fine.m[1], fine.origin[1] + 0.5 * fine.h[1], fine.h[1], coarse.m[1],
                              coarse.origin[1] + 0.5 * coarse.h[1], coarse.h[1]);
    const auto t3 = fine.dim == 3
                        ? make_taps(fine.m[2], fine.origin[2] + 0.5 * fine.h[2], fine.h[2],
                                    coarse.m[2], coarse.origin[2] + 0.5 * coarse.h[2], coarse.h[2])
                        : std::vector<Tap>{{0, 0, 0.0}};

    StaggeredField out(fine);
    auto at = [&](int i, int j, int k) { return b_coarse.v[coarse.face_index(i, j, k)]; };
    for (int k = 0; k < fine.m[2]; ++k)
        for (int j = 0; j < fine.m[1]; ++j)
            for (int i = 0; i <= fine.m[0]; ++i) {
                const Tap &a = t1[i], &b = t2[j], &c = t3[k];
                double v = 0.0;
                for (int ck = 0; ck < 2; ++ck) {
                    const double wk = ck ? c.w1 : 1.0 - c.w1;
                    if (wk == 0.0) continue;
                    const int kk = ck ? c.i1 : c.i0;
                    for (int cj = 0; cj < 2; ++cj) {
                        const double wj = cj ? b.w1 : 1.0 - b.w1;
                        if (wj == 0.0) continue;
                        const int jj = cj ? b.i1 : b.i0;
                        for (int ci = 0; ci < 2; ++ci) {
                            const double wi = ci ? a.w1 : 1.0 - a.w1;
                            if (wi == 0.0) continue;
                            v += wk * wj * wi * at(ci ? a.i1 : a.i0, jj, kk);
                        }
                    }
                }
                out.v[fine.face_index(i, j, k)] = v;
            }

    const double dmax = norm_inf(diff_x1(out).v);
    if (dmax > 1.0 - 1e-10) scale(out.v, 0.95 / dmax);
    return out;
}

MultilevelResult multilevel_solve(const VolumePair& pair, const LevelSchedule& schedule,
                                  SolverKind solver, const ObjectiveParams& params,
                                  const GNConfig& gn_config, const ADMMConfig& admm_config,
                                  AdmmRestart restart) {
    schedule.validate();
    const int nlev = schedule.levels();
    if (!(schedule.grids.back() == pair.grid()))
        throw std::invalid_argument("multilevel_solve: finest level must match the data grid");

    MultilevelResult out;
    StaggeredField b_start; // GN starting guess
    ADMMState state;        // ADMM carry-over
    for (int lvl = 0; lvl < nlev; ++lvl) {
        const GridSpec& g = schedule.grids[lvl];
        const bool finest = lvl == nlev - 1;
        VolumePair level_pair =
            finest ? pair
                   : VolumePair(restrict_image(pair.plus, g), restrict_image(pair.minus, g));

        if (solver == SolverKind::gn) {
            GNConfig cfg = gn_config;
            if (!schedule.overrides.empty() && schedule.overrides[lvl].gn_max_outer)
                cfg.max_outer = *schedule.overrides[lvl].gn_max_outer;
            if (lvl == 0) b_start = StaggeredField(g);
            GnSolveResult res = gauss_newton_solve(level_pair, b_start, params, cfg, lvl);
            out.report.append(res.report);
            out.b = std::move(res.b);
            if (res.report.stop == StopReason::error ||
                res.report.stop == StopReason::line_search_failure)
                return out;
            if (!finest) b_start = prolong_field(out.b, schedule.grids[lvl + 1]);
        } else {
            ADMMConfig cfg = admm_config;
            if (!schedule.overrides.empty() && schedule.overrides[lvl].admm_max_iter)
                cfg.max_iter = *schedule.overrides[lvl].admm_max_iter;
            if (lvl == 0) {
                state = ADMMState{};
                state.b = StaggeredField(g);
                state.z = StaggeredField(g);
                state.u = StaggeredField(g);
                state.rho = cfg.rho0;
            }
            AdmmSolveResult res = admm_solve(level_pair, std::move(state), params, cfg, lvl);
            out.report.append(res.report);
            out.b = res.state.b;
            if (res.report.stop == StopReason::error) return out;
            if (!finest) {
                const GridSpec& gf = schedule.grids[lvl + 1];
                ADMMState next;
                next.rho = res.state.rho; // rho carries across levels
                switch (restart) {
                    case AdmmRestart::prolong_all:
                        next.b = prolong_field(res.state.b, gf);
                        next.z = prolong_field(res.state.z, gf);
                        next.u = prolong_field(res.state.u, gf);
                        break;
                    case AdmmRestart::b_for_both:
                        next.b = prolong_field(res.state.b, gf);
                        next.z = next.b;
                        next.u = StaggeredField(gf);
                        break;
                    case AdmmRestart::average: {
                        StaggeredField bf = prolong_field(res.state.b, gf);
                        const StaggeredField zf = prolong_field(res.state.z, gf);
                        for (std::int64_t i = 0; i < bf.size(); ++i)
                            bf.v[i] = 0.5 * (bf.v[i] + zf.v[i]);
                        const double dmax = norm_inf(diff_x1(bf).v);
                        if (dmax > 1.0 - 1e-10) scale(bf.v, 0.95 / dmax);
                        next.b = bf;
                        next.z = std::move(bf);
                        next.u = StaggeredField(gf);
                        break;
                    }
                }
                state = std::move(next);
            }
        }
    }
    return out;
}

} // namespace epicorr
