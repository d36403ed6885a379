#include "epicorr/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace epicorr {

GridSpec GridSpec::make2d(int m1, int m2, double h1, double h2, double o1, double o2) {
    GridSpec g;
    g.dim = 2;
    g.m = {m1, m2, 1};
    g.h = {h1, h2, 1.0};
    g.origin = {o1, o2, 0.0};
    g.validate();
    return g;
}

GridSpec GridSpec::make3d(int m1, int m2, int m3, double h1, double h2, double h3,
                          double o1, double o2, double o3) {
    GridSpec g;
    g.dim = 3;
    g.m = {m1, m2, m3};
    g.h = {h1, h2, h3};
    g.origin = {o1, o2, o3};
    g.validate();
    return g;
}

void GridSpec::validate() const {
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("GridSpec: dim must be 2 or 3");
    if (m[0] < 2 || m[1] < 2)
        throw std::invalid_argument("GridSpec: m1 and m2 must be >= 2");
    if (dim == 3 && m[2] < 2)
        throw std::invalid_argument("GridSpec: m3 must be >= 2 in 3D");
    if (dim == 2 && m[2] != 1)
        throw std::invalid_argument("GridSpec: m3 must be 1 in 2D");
    for (int a = 0; a < 3; ++a) {
        if (!(h[a] > 0.0) || !std::isfinite(h[a]))
            throw std::invalid_argument("GridSpec: spacings must be positive");
        if (!std::isfinite(origin[a]))
            throw std::invalid_argument("GridSpec: origin must be finite");
    }
}

CellField::CellField(const GridSpec& g, std::vector<double> values) : grid(g), v(std::move(values)) {
    if (std::int64_t(v.size()) != g.cells())
        throw std::invalid_argument("CellField: expected " + std::to_string(g.cells()) +
                                    " values, got " + std::to_string(v.size()));
}

StaggeredField::StaggeredField(const GridSpec& g, std::vector<double> values)
    : grid(g), v(std::move(values)) {
    if (std::int64_t(v.size()) != g.faces())
        throw std::invalid_argument("StaggeredField: expected " + std::to_string(g.faces()) +
                                    " values, got " + std::to_string(v.size()));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s = std::max(s, std::abs(x));
    return s;
}

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(std::vector<double>& x, double a) {
    for (double& xi : x) xi *= a;
}

} // namespace epicorr
