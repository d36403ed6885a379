// Grid descriptors and the two field types used throughout: cell-centered
// scalars and scalars staggered on the x1-faces of a rectangular cell grid.
//
// Value ordering is canonical everywhere: axis 1 fastest, then axis 2, then
// axis 3. A "column" is the set of faces (or cells) sharing one (j,k) index
// pair; columns are contiguous in memory.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace epicorr {

struct GridSpec {
    int dim = 3;                            // 2 or 3
    std::array<int, 3> m{2, 2, 2};          // cells per axis; m[2] == 1 in 2D
    std::array<double, 3> h{1.0, 1.0, 1.0}; // spacing; h[2] == 1 in 2D
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    static GridSpec make2d(int m1, int m2, double h1 = 1.0, double h2 = 1.0,
                           double o1 = 0.0, double o2 = 0.0);
    static GridSpec make3d(int m1, int m2, int m3, double h1 = 1.0, double h2 = 1.0,
                           double h3 = 1.0, double o1 = 0.0, double o2 = 0.0, double o3 = 0.0);

    // Throws std::invalid_argument when the invariants do not hold
    // (m1, m2 >= 2; m3 >= 2 in 3D, == 1 in 2D; all spacings > 0).
    void validate() const;

    std::int64_t cells() const { return std::int64_t(m[0]) * m[1] * m[2]; }
    std::int64_t faces() const { return std::int64_t(m[0] + 1) * m[1] * m[2]; }
    int n1() const { return m[0] + 1; }                    // faces per column
    std::int64_t columns() const { return std::int64_t(m[1]) * m[2]; }
    double cell_volume() const { return h[0] * h[1] * h[2]; }
    double extent(int axis) const { return m[axis] * h[axis]; }

    // 0-based index helpers; i along axis 1 is the fastest index.
    std::int64_t cell_index(int i, int j, int k) const {
        return i + std::int64_t(m[0]) * (j + std::int64_t(m[1]) * k);
    }
    std::int64_t face_index(int i, int j, int k) const {
        return i + std::int64_t(n1()) * (j + std::int64_t(m[1]) * k);
    }

    double cell_center(int axis, int i) const { return origin[axis] + (i + 0.5) * h[axis]; }
    double face1_coord(int i) const { return origin[0] + i * h[0]; } // i = 0..m1

    bool operator==(const GridSpec& o) const = default;
};

struct CellField {
    GridSpec grid;
    std::vector<double> v;

    CellField() = default;
    explicit CellField(const GridSpec& g) : grid(g), v(g.cells(), 0.0) {}
    CellField(const GridSpec& g, std::vector<double> values);

    double& operator[](std::int64_t i) { return v[i]; }
    double operator[](std::int64_t i) const { return v[i]; }
    std::int64_t size() const { return std::int64_t(v.size()); }
};

struct StaggeredField {
    GridSpec grid;
    std::vector<double> v;

    StaggeredField() = default;
    explicit StaggeredField(const GridSpec& g) : grid(g), v(g.faces(), 0.0) {}
    StaggeredField(const GridSpec& g, std::vector<double> values);

    double& operator[](std::int64_t i) { return v[i]; }
    double operator[](std::int64_t i) const { return v[i]; }
    std::int64_t size() const { return std::int64_t(v.size()); }
};

// Small vector helpers. Reductions are sequential on purpose: results must not
// depend on the number of worker threads.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
double norm_inf(const std::vector<double>& a);
void axpy(double a, const std::vector<double>& x, std::vector<double>& y); // y += a*x
void scale(std::vector<double>& x, double a);

} // namespace epicorr
