#include "epicorr/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "epicorr/report.hpp"

namespace epicorr {

static_assert(std::endian::native == std::endian::little,
              "volume files are little-endian; big-endian hosts are unsupported");

namespace {
constexpr std::size_t kHeaderBytes = 512;
} // namespace

const char* to_string(GridKind k) {
    switch (k) {
        case GridKind::cell: return "cell";
        case GridKind::face1: return "face1";
        case GridKind::face2: return "face2";
        case GridKind::face3: return "face3";
    }
    return "unknown";
}

static GridKind kind_from_string(const std::string& s) {
    if (s == "cell") return GridKind::cell;
    if (s == "face1") return GridKind::face1;
    if (s == "face2") return GridKind::face2;
    if (s == "face3") return GridKind::face3;
    throw std::runtime_error("volume header: unknown kind '" + s + "'");
}

std::array<int, 3> VolumeData::payload_dims() const {
    std::array<int, 3> d = grid.m;
    if (kind != GridKind::cell) d[int(kind) - int(GridKind::face1)] += 1;
    return d;
}

std::int64_t VolumeData::payload_size() const {
    const auto d = payload_dims();
    return std::int64_t(d[0]) * d[1] * d[2];
}

VolumeData make_cell_volume(const ImageVolume& img) {
    return VolumeData{img.grid, GridKind::cell, img.v};
}

VolumeData make_face1_volume(const StaggeredField& b) {
    return VolumeData{b.grid, GridKind::face1, b.v};
}

ImageVolume to_image(const VolumeData& vd) {
    if (vd.kind != GridKind::cell) throw std::invalid_argument("to_image: not a cell volume");
    return ImageVolume(vd.grid, vd.v);
}

StaggeredField to_staggered(const VolumeData& vd) {
    if (vd.kind != GridKind::face1)
        throw std::invalid_argument("to_staggered: not a face1 volume");
    return StaggeredField(vd.grid, vd.v);
}

void write_volume(const std::filesystem::path& path, const VolumeData& vd) {
    vd.grid.validate();
    if (std::int64_t(vd.v.size()) != vd.payload_size())
        throw std::invalid_argument("write_volume: payload length does not match dimensions");
    std::ostringstream h;
    const int dim = vd.grid.dim;
    const auto pd = vd.payload_dims();
    h << "EPIVOL 1\n";
    h << "dim: " << dim << '\n';
    h << "kind: " << to_string(vd.kind) << '\n';
    h << "size:";
    for (int a = 0; a < dim; ++a) h << ' ' << pd[a];
    h << "\nspacing:";
    for (int a = 0; a < dim; ++a) h << ' ' << format_g17(vd.grid.h[a]);
    h << "\norigin:";
    for (int a = 0; a < dim; ++a) h << ' ' << format_g17(vd.grid.origin[a]);
    h << "\ntype: float32\n";
    h << "byteorder: little\n";
    h << "offset: " << kHeaderBytes << '\n';
    std::string header = h.str();
    if (header.size() > kHeaderBytes)
        throw std::runtime_error("write_volume: header overflow");
    header.resize(kHeaderBytes, '\n');

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_volume: cannot open " + path.string());
    os.write(header.data(), std::streamsize(header.size()));
    std::vector<float> payload(vd.v.size());
    for (std::size_t i = 0; i < vd.v.size(); ++i) payload[i] = float(vd.v[i]);
    os.write(reinterpret_cast<const char*>(payload.data()),
             std::streamsize(payload.size() * sizeof(float)));
    if (!os) throw std::runtime_error("write_volume: short write to " + path.string());
}

VolumeData read_volume(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_volume: cannot open " + path.string());
    std::string header(kHeaderBytes, '\0');
    is.read(header.data(), std::streamsize(kHeaderBytes));
    if (!is) throw std::runtime_error("read_volume: truncated header in " + path.string());

    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != "EPIVOL" || version != 1)
        throw std::runtime_error("read_volume: not an EPIVOL 1 file: " + path.string());

    int dim = 0;
    GridKind kind = GridKind::cell;
    std::array<int, 3> size{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0}, origin{0.0, 0.0, 0.0};
    std::size_t offset = 0;
    std::string key;
    while (hs >> key) {
        if (key == "dim:") hs >> dim;
        else if (key == "kind:") {
            std::string v;
            hs >> v;
            kind = kind_from_string(v);
        } else if (key == "size:") {
            for (int a = 0; a < dim; ++a) hs >> size[a];
        } else if (key == "spacing:") {
            for (int a = 0; a < dim; ++a) hs >> spacing[a];
        } else if (key == "origin:") {
            for (int a = 0; a < dim; ++a) hs >> origin[a];
        } else if (key == "type:") {
            std::string v;
            hs >> v;
            if (v != "float32") throw std::runtime_error("read_volume: unsupported type " + v);
        } else if (key == "byteorder:") {
            std::string v;
            hs >> v;
            if (v != "little") throw std::runtime_error("read_volume: unsupported byte order");
        } else if (key == "offset:") {
            hs >> offset;
        }
    }
    if (dim != 2 && dim != 3)
        throw std::runtime_error("read_volume: bad dim in " + path.string());
    if (offset != kHeaderBytes)
        throw std::runtime_error("read_volume: unexpected data offset");

    VolumeData vd;
    vd.kind = kind;
    vd.grid.dim = dim;
    vd.grid.m = size;
    if (kind != GridKind::cell) vd.grid.m[int(kind) - int(GridKind::face1)] -= 1;
    vd.grid.h = spacing;
    vd.grid.origin = origin;
    if (dim == 2) {
        vd.grid.m[2] = 1;
        vd.grid.h[2] = 1.0;
        vd.grid.origin[2] = 0.0;
    }
    vd.grid.validate();

    std::vector<float> payload(std::size_t(vd.payload_size()));
    is.read(reinterpret_cast<char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(float)));
    if (!is) throw std::runtime_error("read_volume: truncated payload in " + path.string());
    vd.v.assign(payload.begin(), payload.end());
    return vd;
}

namespace {

GridSpec swap_grid_axes(const GridSpec& g, int a, int b) {
    GridSpec o = g;
    std::swap(o.m[a], o.m[b]);
    std::swap(o.h[a], o.h[b]);
    std::swap(o.origin[a], o.origin[b]);
    return o;
}

// Swap two axes of a raw array with the given dimensions (axis 0 fastest).
std::vector<double> swap_axes_raw(const std::vector<double>& in, std::array<int, 3> d, int a,
                                  int b) {
    std::array<int, 3> od = d;
    std::swap(od[a], od[b]);
    std::vector<double> out(in.size());
    std::array<int, 3> idx{};
    for (idx[2] = 0; idx[2] < d[2]; ++idx[2])
        for (idx[1] = 0; idx[1] < d[1]; ++idx[1])
            for (idx[0] = 0; idx[0] < d[0]; ++idx[0]) {
                std::array<int, 3> oidx = idx;
                std::swap(oidx[a], oidx[b]);
                out[oidx[0] + std::int64_t(od[0]) * (oidx[1] + std::int64_t(od[1]) * oidx[2])] =
                    in[idx[0] + std::int64_t(d[0]) * (idx[1] + std::int64_t(d[1]) * idx[2])];
            }
    return out;
}

} // namespace

ImageVolume permute_to_axis1(const ImageVolume& img, int pe_axis) {
    if (pe_axis < 1 || pe_axis > img.grid.dim)
        throw std::invalid_argument("pe_axis must be between 1 and the volume dimension");
    if (pe_axis == 1) return img;
    const int a = pe_axis - 1;
    return ImageVolume(swap_grid_axes(img.grid, 0, a), swap_axes_raw(img.v, img.grid.m, 0, a));
}

VolumeData unpermute_field(const StaggeredField& b, int pe_axis) {
    if (pe_axis < 1 || pe_axis > b.grid.dim)
        throw std::invalid_argument("pe_axis must be between 1 and the volume dimension");
    if (pe_axis == 1) return make_face1_volume(b);
    const int a = pe_axis - 1;
    std::array<int, 3> dims = b.grid.m;
    dims[0] += 1; // staggered along axis 1 in the permuted frame
    VolumeData vd;
    vd.grid = swap_grid_axes(b.grid, 0, a);
    vd.kind = pe_axis == 2 ? GridKind::face2 : GridKind::face3;
    vd.v = swap_axes_raw(b.v, dims, 0, a);
    return vd;
}

} // namespace epicorr
